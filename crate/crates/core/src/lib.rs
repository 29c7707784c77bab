//! Trajectory-guided generative video coding.
//!
//! The encoder side selects keyframes, tracks a dense point grid through each
//! clip, groups the trajectories into motion instances, keeps a small number
//! of representative trajectories for the instances that matter and writes
//! them to a compact lossless stream. The decoder side uses the trajectories
//! to steer a diffusion sampler, simulated here with an analytic denoiser.

pub mod bitstream;
pub mod ddim_sim;
pub mod error;
pub mod guidance;
pub mod hdbscan;
pub mod motion;
pub mod par;
pub mod pipeline;
pub mod sampler;
pub mod synth;
pub mod tracker;
pub mod video;

pub use error::{Error, Result};
