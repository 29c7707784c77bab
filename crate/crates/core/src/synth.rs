//! Deterministic synthetic clips and trajectory sets.
//!
//! Used by the tests, benches and the CLI's demo inputs. Textures come from an
//! integer hash so that any pixel of an infinite plane can be sampled, which
//! keeps translated content exact at the frame borders.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::guidance::LatentSequence;
use crate::sampler::{CellPoint, SparseInstance, SparseTrajectory, SparseTrajectorySet};
use crate::tracker::{Direction, Point, Trajectory, TrajectorySet};
use crate::video::{Clip, Frame};
use crate::Result;

/// Pseudo-random byte for an integer lattice position.
pub fn texture(x: i64, y: i64, seed: u64) -> u8 {
    let mut h = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ seed.wrapping_mul(0x1656_67B1_9E37_79F9);
    h ^= h >> 31;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 33;
    (h & 0xFF) as u8
}

fn frame(width: u32, height: u32, f: impl Fn(i64, i64) -> u8) -> Frame {
    Frame::from_fn(width, height, 1, |x, y, _| f(x as i64, y as i64)).expect("valid synthetic frame")
}

/// A textured frame repeated `len` times.
pub fn static_clip(width: u32, height: u32, len: usize, seed: u64) -> Clip {
    let f = frame(width, height, |x, y| texture(x, y, seed));
    Clip::new(vec![f; len]).expect("valid clip")
}

/// Texture translated by `(dx, dy)` pixels per frame.
pub fn shifted_clip(width: u32, height: u32, len: usize, dx: i64, dy: i64, seed: u64) -> Clip {
    let frames = (0..len as i64)
        .map(|t| frame(width, height, |x, y| texture(x - dx * t, y - dy * t, seed)))
        .collect();
    Clip::new(frames).expect("valid clip")
}

/// A textured `size`-pixel square starting at `(x0, y0)` and moving right by
/// `step` pixels per frame over a flat background.
pub fn sliding_square_clip(width: u32, height: u32, len: usize, size: i64, x0: i64, y0: i64, step: i64) -> Clip {
    let frames = (0..len as i64)
        .map(|t| {
            let left = x0 + step * t;
            frame(width, height, |x, y| {
                if (left..left + size).contains(&x) && (y0..y0 + size).contains(&y) {
                    texture(x - left, y - y0, 77)
                } else {
                    100
                }
            })
        })
        .collect();
    Clip::new(frames).expect("valid clip")
}

/// Flat frames, except that a textured square appears in the middle of the last one.
pub fn late_entry_clip(width: u32, height: u32, len: usize) -> Clip {
    let (w, h) = (width as i64, height as i64);
    let mut frames = vec![frame(width, height, |_, _| 100); len - 1];
    frames.push(frame(width, height, |x, y| {
        if (w / 3..2 * w / 3).contains(&x) && (h / 3..2 * h / 3).contains(&y) {
            texture(x, y, 5)
        } else {
            100
        }
    }));
    Clip::new(frames).expect("valid clip")
}

/// Textured background with a textured disc of `radius` translating by
/// `(vx, vy)` pixels per frame from `(cx, cy)`.
pub fn moving_blob_frames(
    width: u32,
    height: u32,
    len: usize,
    (cx, cy): (f64, f64),
    radius: f64,
    (vx, vy): (i64, i64),
) -> Vec<Frame> {
    (0..len as i64)
        .map(|t| {
            let (bx, by) = (cx + (vx * t) as f64, cy + (vy * t) as f64);
            frame(width, height, |x, y| {
                let (fx, fy) = (x as f64 + 0.5 - bx, y as f64 + 0.5 - by);
                if fx * fx + fy * fy <= radius * radius {
                    // Texture fixed to the disc so it moves with it.
                    texture(x - vx * t, y - vy * t, 1234) / 2 + 128
                } else {
                    texture(x, y, 99) / 2
                }
            })
        })
        .collect()
}

/// Straight-line trajectories on a `cols x rows` grid of origins.
///
/// Origins in the left half translate by `+net` pixels horizontally over the
/// clip, those in the right half by `-net`; every point gets Gaussian jitter
/// of standard deviation `sigma`.
pub fn opposing_translations(
    cols: u32,
    rows: u32,
    frames: u16,
    spacing: f64,
    net: f64,
    sigma: f64,
    seed: u64,
) -> TrajectorySet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("finite sigma");
    let l = frames as usize;
    let mut trajectories = Vec::new();
    for row in 0..rows {
        for col in 0..cols {
            let x0 = (col as f64 + 0.5) * spacing + net;
            let y0 = (row as f64 + 0.5) * spacing;
            let dir = if col < cols / 2 { 1.0 } else { -1.0 };
            let points = (0..l)
                .map(|t| {
                    let s = t as f64 / (l - 1) as f64;
                    Point::new(x0 + dir * net * s + noise.sample(&mut rng), y0 + noise.sample(&mut rng))
                })
                .collect();
            trajectories.push(Trajectory {
                points,
                visible: vec![true; l],
                origin: (row, col),
                direction: Direction::Forward,
            });
        }
    }
    TrajectorySet {
        frames,
        grid_size: cols.max(rows),
        trajectories,
    }
}

/// Inputs of one gradient check: noisy latents, frozen noise prediction,
/// `alpha_t` and a sparse trajectory set on the latent grid.
#[derive(Debug, Clone)]
pub struct GradientCase {
    pub z_t: LatentSequence,
    pub eps: LatentSequence,
    pub alpha_t: f64,
    pub sparse: SparseTrajectorySet,
}

/// Random latents in `[-1, 1)` with 1 to 3 instances of 1 to 3 trajectories.
///
/// With `identical` every frame of `z_t` and of `eps` is the same and every
/// trajectory stays on one cell, which puts the loss at its minimum.
pub fn gradient_case(
    seed: u64,
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    identical: bool,
) -> Result<GradientCase> {
    if frames == 0 || height == 0 || width == 0 || channels == 0 {
        return Err(crate::Error::InvalidInput(
            "gradient case dimensions must be positive".into(),
        ));
    }
    if height > u16::MAX as usize || width > u16::MAX as usize || frames > u16::MAX as usize {
        return Err(crate::Error::InvalidInput("gradient case dimensions exceed u16".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_frame = height * width * channels;
    let latents = |rng: &mut ChaCha8Rng| {
        let first: Vec<f64> = (0..per_frame).map(|_| rng.random_range(-1.0..1.0)).collect();
        let data = (0..frames)
            .flat_map(|f| {
                if identical || f == 0 {
                    first.clone()
                } else {
                    (0..per_frame).map(|_| rng.random_range(-1.0..1.0)).collect()
                }
            })
            .collect();
        LatentSequence::new(frames, height, width, channels, data)
    };
    let z_t = latents(&mut rng)?;
    let eps = latents(&mut rng)?;
    let alpha_t = rng.random_range(0.05..0.95);
    let instances = (0..rng.random_range(1..=3))
        .map(|_| SparseInstance {
            trajectories: (0..rng.random_range(1..=3))
                .map(|_| {
                    let mut cell = || CellPoint {
                        x: rng.random_range(0..width as u16),
                        y: rng.random_range(0..height as u16),
                    };
                    let fixed = cell();
                    let points = (0..frames).map(|_| if identical { fixed } else { cell() }).collect();
                    SparseTrajectory {
                        points,
                        visible: (0..frames).map(|_| rng.random_bool(0.85)).collect(),
                    }
                })
                .collect(),
        })
        .collect();
    Ok(GradientCase {
        z_t,
        eps,
        alpha_t,
        sparse: SparseTrajectorySet {
            frames: frames as u16,
            latent_w: width as u16,
            latent_h: height as u16,
            instances,
        },
    })
}
