//! Sparse trajectory extraction: per-instance keypoint budget, k-means
//! reduction to representative member trajectories, and quantization to
//! latent cells.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial downsampling between pixels and diffusion latent cells.
pub const LATENT_FACTOR: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetConfig {
    pub alpha: f64,
    pub beta: f64,
    pub k_max: u32,
    /// Divisor mapping an instance score into `[0, 1]`.
    pub score_norm: f64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            k_max: 15,
            score_norm: 1.0,
        }
    }
}

impl BudgetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::invalid("alpha and beta must be non-negative"));
        }
        if self.k_max < 1 {
            return Err(Error::invalid("k_max must be at least 1"));
        }
        Ok(())
    }
}

/// Number of keypoints transmitted for one selected instance, in `1..=k_max`.
pub fn keypoint_budget(s_inter: f64, n_i: usize, n_total: usize, cfg: &BudgetConfig) -> u32 {
    let s_hat = if cfg.score_norm > 0.0 && s_inter > 0.0 {
        (s_inter / cfg.score_norm).min(1.0)
    } else {
        0.0
    };
    let share = if n_total > 0 { n_i as f64 / n_total as f64 } else { 0.0 };
    let k_max = cfg.k_max as f64;
    let k = ((cfg.alpha * s_hat + cfg.beta * share) * k_max).round().min(k_max);
    (k.max(1.0)) as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// k-means representatives within the budget.
    Sparse,
    /// Uniformly drawn members within the budget.
    Random,
    /// Every member of every selected instance.
    Dense,
}

impl std::str::FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(Self::Sparse),
            "random" => Ok(Self::Random),
            "dense" => Ok(Self::Dense),
            other => Err(Error::invalid(format!(
                "unknown sampling mode `{other}` (expected sparse, random or dense)"
            ))),
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut chosen = vec![false; data.len()];
    let first = rng.random_range(0..data.len());
    chosen[first] = true;
    let mut centers = vec![data[first].clone()];
    let mut d2: Vec<f64> = data.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            chosen.iter().position(|&c| !c).unwrap_or(0)
        };
        chosen[pick] = true;
        centers.push(data[pick].clone());
        for (i, p) in data.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &data[pick]));
        }
    }
    centers
}

/// Lloyd iterations from k-means++ seeds. Returns final centers and assignments.
pub fn kmeans(data: &[Vec<f64>], k: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    const MAX_ITER: usize = 100;
    const TOL: f64 = 1e-6;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_init(data, k, &mut rng);
    let dim = data[0].len();
    let mut assign = vec![0usize; data.len()];
    for _ in 0..MAX_ITER {
        for (i, p) in data.iter().enumerate() {
            assign[i] = nearest(p, &centers).0;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in data.iter().zip(&assign) {
            counts[c] += 1;
            sums[c].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        let mut moved = 0.0f64;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let mean: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            moved = moved.max(sq_dist(&mean, &centers[c]).sqrt());
            centers[c] = mean;
        }
        if moved < TOL {
            break;
        }
    }
    for (i, p) in data.iter().enumerate() {
        assign[i] = nearest(p, &centers).0;
    }
    (centers, assign)
}

/// Picks `k` representative rows of `features` by k-means.
///
/// Each cluster contributes the real member nearest its center, never a
/// synthetic centroid. Returned indices are distinct and ascending; `k` is
/// clamped to the number of rows.
pub fn kmeans_sample(features: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let n = features.len();
    if k == 0 || n == 0 {
        return Vec::new();
    }
    if k >= n {
        return (0..n).collect();
    }
    let (centers, assign) = kmeans(features, k, seed);
    let mut used = vec![false; n];
    let mut picks = Vec::with_capacity(k);
    for (c, center) in centers.iter().enumerate() {
        let in_cluster = |i: &usize| assign[*i] == c && !used[*i];
        let candidates: Vec<usize> = (0..n).filter(in_cluster).collect();
        let pool: Vec<usize> = if candidates.is_empty() {
            (0..n).filter(|&i| !used[i]).collect()
        } else {
            candidates
        };
        let mut best = pool[0];
        for &i in &pool[1..] {
            if sq_dist(&features[i], center) < sq_dist(&features[best], center) {
                best = i;
            }
        }
        used[best] = true;
        picks.push(best);
    }
    picks.sort_unstable();
    picks
}

/// Uniform draw of `k` distinct indices from `0..n`, ascending.
pub fn random_sample(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = sample_indices(&mut rng, n, k.min(n)).into_vec();
    v.sort_unstable();
    v
}

/// Latent grid geometry for a frame size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentGrid {
    pub width: u16,
    pub height: u16,
    pub factor: u32,
}

impl LatentGrid {
    pub fn for_frame(width: u32, height: u32, factor: u32) -> Result<Self> {
        if factor < 1 {
            return Err(Error::invalid("quantization factor must be at least 1"));
        }
        let lw = width.div_ceil(factor);
        let lh = height.div_ceil(factor);
        if lw == 0 || lh == 0 || lw > u16::MAX as u32 || lh > u16::MAX as u32 {
            return Err(Error::invalid(format!("latent grid {lw}x{lh} is not representable")));
        }
        Ok(Self {
            width: lw as u16,
            height: lh as u16,
            factor,
        })
    }

    /// Cell containing a pixel-space position, clamped to the grid.
    pub fn quantize(&self, x: f64, y: f64) -> CellPoint {
        let q = |v: f64, max: u16| -> u16 {
            let c = (v / self.factor as f64).floor();
            c.clamp(0.0, (max - 1) as f64) as u16
        };
        CellPoint {
            x: q(x, self.width),
            y: q(y, self.height),
        }
    }

    /// Pixel-space center of a cell.
    pub fn dequantize_center(&self, p: CellPoint) -> (f64, f64) {
        let f = self.factor as f64;
        ((p.x as f64 + 0.5) * f, (p.y as f64 + 0.5) * f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellPoint {
    pub x: u16,
    pub y: u16,
}

/// One transmitted trajectory in latent cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseTrajectory {
    pub points: Vec<CellPoint>,
    pub visible: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SparseInstance {
    pub trajectories: Vec<SparseTrajectory>,
}

/// Everything the decoder needs about motion for one clip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseTrajectorySet {
    pub frames: u16,
    pub latent_w: u16,
    pub latent_h: u16,
    pub instances: Vec<SparseInstance>,
}

impl SparseTrajectorySet {
    pub fn empty(frames: u16, latent_w: u16, latent_h: u16) -> Self {
        Self {
            frames,
            latent_w,
            latent_h,
            instances: Vec::new(),
        }
    }

    pub fn trajectory_count(&self) -> usize {
        self.instances.iter().map(|i| i.trajectories.len()).sum()
    }

    /// Checks lengths and bounds.
    pub fn validate(&self) -> Result<()> {
        let l = self.frames as usize;
        for (i, inst) in self.instances.iter().enumerate() {
            for (j, t) in inst.trajectories.iter().enumerate() {
                if t.points.len() != l || t.visible.len() != l {
                    return Err(Error::invalid(format!(
                        "instance {i} trajectory {j} has length {} but the set has {l} frames",
                        t.points.len()
                    )));
                }
                if t.points.iter().any(|p| p.x >= self.latent_w || p.y >= self.latent_h) {
                    return Err(Error::invalid(format!(
                        "instance {i} trajectory {j} leaves the {}x{} latent grid",
                        self.latent_w, self.latent_h
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Quantizes pixel-space points and their visibility to latent cells.
pub fn quantize_trajectory(points: &[crate::tracker::Point], visible: &[bool], grid: &LatentGrid) -> SparseTrajectory {
    SparseTrajectory {
        points: points.iter().map(|p| grid.quantize(p.x, p.y)).collect(),
        visible: visible.to_vec(),
    }
}
