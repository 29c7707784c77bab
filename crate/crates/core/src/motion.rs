//! Motion instantiation and semantic importance.
//!
//! Trajectories are summarized by a six-component feature vector, clustered
//! by density into motion instances, projected to per-frame latent masks,
//! and scored by how much occluding an instance changes frame-to-frame
//! similarity.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hdbscan::{hdbscan, HdbscanParams, NOISE};
use crate::par;
use crate::sampler::LatentGrid;
use crate::tracker::{Trajectory, TrajectorySet};
use crate::video::{Clip, Frame, SimilarityProvider};

/// Steps shorter than this carry no direction.
const MIN_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFeature {
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    /// Total path length over the visible sub-trajectory.
    pub d: f64,
    /// Mean absolute turning angle between consecutive steps, radians.
    pub mean_dtheta: f64,
}

impl TrajectoryFeature {
    pub fn to_array(&self) -> [f64; 6] {
        [self.x0, self.y0, self.dx, self.dy, self.d, self.mean_dtheta]
    }
}

/// Feature vector of the visible part of a trajectory.
pub fn trajectory_features(t: &Trajectory) -> Result<TrajectoryFeature> {
    let pts: Vec<_> = t
        .points
        .iter()
        .zip(&t.visible)
        .filter(|(_, &v)| v)
        .map(|(p, _)| *p)
        .collect();
    if pts.len() < 2 {
        return Err(Error::DegenerateTrajectory { visible: pts.len() });
    }
    let first = pts[0];
    let last = pts[pts.len() - 1];

    let steps: Vec<(f64, f64)> = pts.windows(2).map(|w| (w[1].x - w[0].x, w[1].y - w[0].y)).collect();
    let d = steps.iter().map(|(sx, sy)| sx.hypot(*sy)).sum();

    let directed: Vec<&(f64, f64)> = steps.iter().filter(|(sx, sy)| sx.hypot(*sy) >= MIN_STEP).collect();
    let turns: Vec<f64> = directed
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let cross = a.0 * b.1 - a.1 * b.0;
            let dot = a.0 * b.0 + a.1 * b.1;
            cross.atan2(dot).abs()
        })
        .collect();
    let mean_dtheta = if turns.is_empty() {
        0.0
    } else {
        turns.iter().sum::<f64>() / turns.len() as f64
    };

    Ok(TrajectoryFeature {
        x0: first.x,
        y0: first.y,
        dx: last.x - first.x,
        dy: last.y - first.y,
        d,
        mean_dtheta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub min_cluster_size: usize,
    pub min_samples: usize,
    /// Per-dimension divisors applied before clustering.
    pub feature_scales: [f64; 6],
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            min_cluster_size: 16,
            min_samples: 8,
            feature_scales: [1.0; 6],
        }
    }
}

impl ClusterConfig {
    /// Positions and lengths scaled by the frame diagonal, turning by pi.
    pub fn for_frame(width: u32, height: u32) -> Self {
        let diag = (width as f64).hypot(height as f64);
        Self {
            feature_scales: [diag, diag, diag, diag, diag, PI],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_cluster_size < 2 {
            return Err(Error::invalid("min_cluster_size must be at least 2"));
        }
        if self.feature_scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("feature scales must be positive"));
        }
        Ok(())
    }

    pub fn scale(&self, f: &TrajectoryFeature) -> Vec<f64> {
        f.to_array()
            .iter()
            .zip(&self.feature_scales)
            .map(|(v, s)| v / s)
            .collect()
    }
}

/// Density clustering result over a feature list.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// One label per feature; `-1` is noise.
    pub labels: Vec<i32>,
    /// Member feature indices per cluster, in label order.
    pub clusters: Vec<Vec<usize>>,
}

pub fn cluster_instances(features: &[TrajectoryFeature], cfg: &ClusterConfig) -> Result<Clustering> {
    cfg.validate()?;
    let data: Vec<Vec<f64>> = features.iter().map(|f| cfg.scale(f)).collect();
    let labels = hdbscan(
        &data,
        HdbscanParams {
            min_cluster_size: cfg.min_cluster_size,
            min_samples: cfg.min_samples,
        },
    );
    let n_clusters = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
    let mut clusters = vec![Vec::new(); n_clusters];
    for (i, &l) in labels.iter().enumerate() {
        if l != NOISE {
            clusters[l as usize].push(i);
        }
    }
    Ok(Clustering { labels, clusters })
}

/// Binary raster over a grid of cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub cells: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            cells: vec![false; (width * height) as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.cells[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width;
        self.cells[(y * w + x) as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Marks the square neighborhood of every set cell.
    pub fn dilated(&self, radius: u32) -> Mask {
        let mut out = Mask::new(self.width, self.height);
        let r = radius as i64;
        for y in 0..self.height as i64 {
            for x in 0..self.width as i64 {
                if !self.get(x as u32, y as u32) {
                    continue;
                }
                for ny in (y - r).max(0)..=(y + r).min(self.height as i64 - 1) {
                    for nx in (x - r).max(0)..=(x + r).min(self.width as i64 - 1) {
                        out.set(nx as u32, ny as u32, true);
                    }
                }
            }
        }
        out
    }

    /// Nearest-cell upsampling to a `width x height` pixel raster.
    pub fn upsample(&self, factor: u32, width: u32, height: u32) -> Mask {
        let mut out = Mask::new(width, height);
        for y in 0..height {
            for x in 0..width {
                let (cx, cy) = ((x / factor).min(self.width - 1), (y / factor).min(self.height - 1));
                out.set(x, y, self.get(cx, cy));
            }
        }
        out
    }
}

/// A cluster of trajectories with its per-frame latent masks.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionInstance {
    pub id: usize,
    /// Indices into the fused trajectory set.
    pub members: Vec<usize>,
    pub masks: Vec<Mask>,
}

impl MotionInstance {
    pub fn new(id: usize, members: Vec<usize>, set: &TrajectorySet, grid: &LatentGrid) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::invalid("a motion instance needs at least one member"));
        }
        let masks = instance_masks(&members, set, grid)?;
        Ok(Self { id, members, masks })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Per-frame masks: every latent cell holding a visible member point, dilated by one cell.
pub fn instance_masks(members: &[usize], set: &TrajectorySet, grid: &LatentGrid) -> Result<Vec<Mask>> {
    if let Some(&bad) = members.iter().find(|&&m| m >= set.len()) {
        return Err(Error::invalid(format!(
            "member index {bad} out of range for {} trajectories",
            set.len()
        )));
    }
    let (w, h) = (grid.width as u32, grid.height as u32);
    Ok((0..set.frames as usize)
        .map(|t| {
            let mut m = Mask::new(w, h);
            for &i in members {
                let tr = &set.trajectories[i];
                if tr.visible[t] {
                    let c = grid.quantize(tr.points[t].x, tr.points[t].y);
                    m.set(c.x as u32, c.y as u32, true);
                }
            }
            m.dilated(1)
        })
        .collect())
}

/// Width of the ring whose mean color fills an occluded region.
const RING_WIDTH: u32 = 2;

/// Replaces the masked pixels with the mean color of the surrounding ring.
pub fn occlude_region(frame: &Frame, mask: &Mask) -> Result<Frame> {
    if mask.width != frame.width() || mask.height != frame.height() {
        return Err(Error::invalid("mask and frame sizes differ"));
    }
    let masked = mask.count();
    if masked == 0 {
        return Ok(frame.clone());
    }
    if masked == mask.cells.len() {
        return Err(Error::invalid("mask covers the whole frame"));
    }
    let ring = mask.dilated(RING_WIDTH);
    let ch = frame.channels() as usize;
    let mut sums = vec![0.0f64; ch];
    let mut n = 0usize;
    for y in 0..frame.height() {
        for x in 0..frame.width() {
            if ring.get(x, y) && !mask.get(x, y) {
                for (c, s) in sums.iter_mut().enumerate() {
                    *s += frame.sample(x, y, c as u8) as f64;
                }
                n += 1;
            }
        }
    }
    let fill: Vec<u8> = sums.iter().map(|s| (s / n as f64).round() as u8).collect();
    let mut out = frame.clone();
    let width = frame.width() as usize;
    let data = out.data_mut();
    for (i, _) in mask.cells.iter().enumerate().filter(|(_, &m)| m) {
        let (x, y) = (i % width, i / width);
        let base = (y * width + x) * ch;
        data[base..base + ch].copy_from_slice(&fill);
    }
    Ok(out)
}

/// Like [`occlude_region`], but a mask covering everything leaves no ring, so
/// the frame becomes its own mean color.
fn occlude_or_flatten(frame: &Frame, mask: &Mask) -> Result<Frame> {
    if mask.count() < mask.cells.len() {
        return occlude_region(frame, mask);
    }
    let ch = frame.channels() as usize;
    let pixels = (frame.width() * frame.height()) as f64;
    let mean: Vec<u8> = (0..ch)
        .map(|c| {
            let sum: f64 = frame.data().iter().skip(c).step_by(ch).map(|&v| v as f64).sum();
            (sum / pixels).round() as u8
        })
        .collect();
    Frame::from_fn(frame.width(), frame.height(), frame.channels(), |_, _, c| {
        mean[c as usize]
    })
}

/// Sum over adjacent frame pairs of the absolute change in similarity caused
/// by occluding the instance. `masks` are latent masks, one per frame.
pub fn intra_score(clip: &Clip, masks: &[Mask], grid: &LatentGrid, provider: &dyn SimilarityProvider) -> Result<f64> {
    let frames = clip.frames();
    if masks.len() != frames.len() {
        return Err(Error::invalid(format!(
            "{} masks for a clip of {} frames",
            masks.len(),
            frames.len()
        )));
    }
    let (w, h) = (clip.width(), clip.height());
    let occluded = frames
        .iter()
        .zip(masks)
        .map(|(f, m)| occlude_or_flatten(f, &m.upsample(grid.factor, w, h)))
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for j in 0..frames.len() - 1 {
        let base = provider.similarity(&frames[j], &frames[j + 1])?;
        let masked = provider.similarity(&occluded[j], &occluded[j + 1])?;
        total += (base - masked).abs();
    }
    Ok(total)
}

/// What "length of the trajectory" means when scaling an intra score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LengthMode {
    /// Mean total path length of the members, pixels.
    PathLength,
    /// Mean number of visible frames of the members.
    Temporal,
}

impl std::str::FromStr for LengthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "path-length" => Ok(Self::PathLength),
            "temporal" => Ok(Self::Temporal),
            other => Err(Error::invalid(format!(
                "unknown length mode `{other}` (expected path-length or temporal)"
            ))),
        }
    }
}

pub fn inter_score(s_intra: f64, members: &[usize], set: &TrajectorySet, mode: LengthMode) -> Result<f64> {
    if !(s_intra >= 0.0) {
        return Err(Error::invalid("intra score must be non-negative"));
    }
    if members.is_empty() || s_intra == 0.0 {
        return Ok(0.0);
    }
    let lengths = members
        .iter()
        .map(|&i| {
            let t = set
                .trajectories
                .get(i)
                .ok_or_else(|| Error::invalid(format!("member index {i} out of range")))?;
            Ok(match mode {
                LengthMode::PathLength => trajectory_features(t).map(|f| f.d).unwrap_or(0.0),
                LengthMode::Temporal => t.visible_count() as f64,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(s_intra * lengths.iter().sum::<f64>() / lengths.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    /// Instances must score strictly above this to be transmitted.
    pub selection_threshold: f64,
    pub length_mode: LengthMode,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            selection_threshold: 0.0,
            length_mode: LengthMode::PathLength,
        }
    }
}

/// Ids whose score exceeds the threshold, highest score first, ties by id.
pub fn select_instances(scores: &[f64], cfg: &ScoringConfig) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..scores.len())
        .filter(|&i| scores[i] > cfg.selection_threshold)
        .collect();
    ids.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ids
}

/// Inspection record for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub id: usize,
    pub members: usize,
    pub s_intra: f64,
    pub s_inter: f64,
    pub selected: bool,
    /// Keypoints transmitted; zero when not selected.
    pub keypoints: u32,
}

/// Motion instances of a fused trajectory set.
///
/// Trajectories with fewer than two visible points cannot be featurized and
/// are reported as noise.
pub fn instantiate(
    set: &TrajectorySet,
    cfg: &ClusterConfig,
    grid: &LatentGrid,
) -> Result<(Vec<TrajectoryFeature>, Vec<usize>, Vec<MotionInstance>)> {
    let featurized: Vec<Option<TrajectoryFeature>> = par::map(&set.trajectories, |t| trajectory_features(t).ok());
    let mut features = Vec::new();
    let mut index = Vec::new();
    for (i, f) in featurized.into_iter().enumerate() {
        if let Some(f) = f {
            features.push(f);
            index.push(i);
        }
    }
    let clustering = cluster_instances(&features, cfg)?;
    let instances = clustering
        .clusters
        .into_iter()
        .enumerate()
        .map(|(id, members)| {
            let members = members.into_iter().map(|k| index[k]).collect();
            MotionInstance::new(id, members, set, grid)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((features, index, instances))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use crate::tracker::{Direction, Point};
    use crate::video::HistogramSimilarity;

    fn traj(points: &[(f64, f64)], visible: &[bool]) -> Trajectory {
        Trajectory {
            points: points.iter().map(|&(x, y)| Point::new(x, y)).collect(),
            visible: visible.to_vec(),
            origin: (0, 0),
            direction: Direction::Forward,
        }
    }

    #[test]
    fn feature_examples() {
        let f = trajectory_features(&traj(&[(5.0, 5.0); 4], &[true; 4])).unwrap();
        assert_eq!(f.to_array(), [5.0, 5.0, 0.0, 0.0, 0.0, 0.0]);

        let f = trajectory_features(&traj(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)], &[true; 4])).unwrap();
        assert_eq!(f.to_array(), [0.0, 0.0, 3.0, 0.0, 3.0, 0.0]);

        let f = trajectory_features(&traj(
            &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (2.0, 1.0), (2.0, 2.0)],
            &[true; 5],
        ))
        .unwrap();
        assert_eq!(f.d, 4.0);
        assert!((f.mean_dtheta - PI / 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn features_skip_invisible_points() {
        let f = trajectory_features(&traj(&[(0.0, 0.0), (50.0, 50.0), (2.0, 0.0)], &[true, false, true])).unwrap();
        assert_eq!(f.to_array(), [0.0, 0.0, 2.0, 0.0, 2.0, 0.0]);
        let err = trajectory_features(&traj(&[(0.0, 0.0), (1.0, 1.0)], &[true, false])).unwrap_err();
        assert!(matches!(err, Error::DegenerateTrajectory { visible: 1 }));
    }

    #[test]
    fn identical_features_form_one_instance() {
        let f = TrajectoryFeature {
            x0: 1.0,
            y0: 2.0,
            dx: 3.0,
            dy: 0.0,
            d: 3.0,
            mean_dtheta: 0.0,
        };
        let c = cluster_instances(&vec![f; 100], &ClusterConfig::default()).unwrap();
        assert_eq!(c.clusters.len(), 1);
        assert_eq!(c.clusters[0].len(), 100);
    }

    #[test]
    fn mask_of_static_point() {
        let grid = LatentGrid::for_frame(64, 64, 8).unwrap();
        let set = TrajectorySet {
            frames: 3,
            grid_size: 1,
            trajectories: vec![traj(&[(28.0, 20.0); 3], &[true, false, true])],
        };
        let masks = instance_masks(&[0], &set, &grid).unwrap();
        // Cell (3, 2) dilated to its 3x3 neighborhood.
        assert_eq!(masks[0].count(), 9);
        for y in 1..=3 {
            for x in 2..=4 {
                assert!(masks[0].get(x, y));
            }
        }
        assert_eq!(masks[1].count(), 0);
        assert_eq!(masks[2], masks[0]);
    }

    #[test]
    fn masks_of_distant_members_are_disjoint() {
        let grid = LatentGrid::for_frame(160, 64, 8).unwrap();
        let set = TrajectorySet {
            frames: 1,
            grid_size: 1,
            trajectories: vec![traj(&[(20.0, 20.0)], &[true]), traj(&[(100.0, 20.0)], &[true])],
        };
        let m = &instance_masks(&[0, 1], &set, &grid).unwrap()[0];
        assert_eq!(m.count(), 18);
    }

    #[test]
    fn occlusion_cases() {
        let gray = Frame::filled(16, 16, 3, 90).unwrap();
        let mut mask = Mask::new(16, 16);
        assert_eq!(occlude_region(&gray, &mask).unwrap(), gray);
        for y in 4..9 {
            for x in 3..10 {
                mask.set(x, y, true);
            }
        }
        assert_eq!(occlude_region(&gray, &mask).unwrap(), gray);

        let square = Frame::from_fn(16, 16, 1, |x, y, _| {
            if (4..8).contains(&x) && (4..8).contains(&y) {
                255
            } else {
                0
            }
        })
        .unwrap();
        let mut m = Mask::new(16, 16);
        for y in 4..8 {
            for x in 4..8 {
                m.set(x, y, true);
            }
        }
        let out = occlude_region(&square, &m).unwrap();
        assert!(out.data().iter().all(|&v| v == 0));

        let full = Mask {
            width: 16,
            height: 16,
            cells: vec![true; 256],
        };
        assert!(matches!(occlude_region(&gray, &full), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn occlusion_is_idempotent() {
        let f = Frame::from_fn(24, 24, 3, |x, y, c| synth::texture(x as i64, y as i64, c as u64)).unwrap();
        let mut m = Mask::new(24, 24);
        for y in 5..14 {
            for x in 8..20 {
                m.set(x, y, true);
            }
        }
        let once = occlude_region(&f, &m).unwrap();
        assert_eq!(occlude_region(&once, &m).unwrap(), once);
    }

    #[test]
    fn intra_score_basics() {
        let p = HistogramSimilarity::default();
        let clip = synth::static_clip(64, 64, 4, 3);
        let grid = LatentGrid::for_frame(64, 64, 8).unwrap();
        let empty = vec![Mask::new(8, 8); 4];
        assert_eq!(intra_score(&clip, &empty, &grid, &p).unwrap(), 0.0);
        let mut m = Mask::new(8, 8);
        m.set(3, 3, true);
        assert_eq!(intra_score(&clip, &vec![m; 4], &grid, &p).unwrap(), 0.0);
    }

    #[test]
    fn moving_region_scores_higher_than_background() {
        let p = HistogramSimilarity::default();
        let frames = synth::moving_blob_frames(64, 64, 6, (16.0, 32.0), 10.0, (4, 0));
        let clip = Clip::new(frames).unwrap();
        let grid = LatentGrid::for_frame(64, 64, 8).unwrap();
        let blob_masks: Vec<Mask> = (0..6)
            .map(|t| {
                let mut m = Mask::new(8, 8);
                let cx = ((16 + 4 * t) / 8) as u32;
                m.set(cx, 4, true);
                m.dilated(1).dilated(1)
            })
            .collect();
        let mut bg = Mask::new(8, 8);
        bg.set(6, 0, true);
        let bg_masks = vec![bg.dilated(1); 6];
        let s_blob = intra_score(&clip, &blob_masks, &grid, &p).unwrap();
        let s_bg = intra_score(&clip, &bg_masks, &grid, &p).unwrap();
        assert!(s_blob > s_bg, "{s_blob} vs {s_bg}");
    }

    #[test]
    fn full_masks_are_scored() {
        let p = HistogramSimilarity::default();
        let clip = synth::shifted_clip(32, 32, 3, 2, 0, 1);
        let grid = LatentGrid::for_frame(32, 32, 8).unwrap();
        let full = Mask {
            width: 4,
            height: 4,
            cells: vec![true; 16],
        };
        let s = intra_score(&clip, &vec![full; 3], &grid, &p).unwrap();
        assert!(s >= 0.0 && s.is_finite());
    }

    #[test]
    fn intra_score_ignores_appended_static_pair() {
        let p = HistogramSimilarity::default();
        let frames = synth::moving_blob_frames(48, 48, 4, (12.0, 24.0), 8.0, (3, 0));
        let grid = LatentGrid::for_frame(48, 48, 8).unwrap();
        let mut m = Mask::new(6, 6);
        m.set(2, 3, true);
        let m = m.dilated(1);
        let clip = Clip::new(frames.clone()).unwrap();
        let a = intra_score(&clip, &vec![m.clone(); 4], &grid, &p).unwrap();
        let mut longer = frames;
        longer.push(longer[3].clone());
        let clip = Clip::new(longer).unwrap();
        let b = intra_score(&clip, &vec![m; 5], &grid, &p).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn inter_score_examples() {
        let set = TrajectorySet {
            frames: 3,
            grid_size: 1,
            trajectories: vec![
                traj(&[(0.0, 0.0), (6.0, 0.0), (12.0, 0.0)], &[true; 3]),
                traj(&[(0.0, 0.0), (0.0, 6.0), (0.0, 12.0)], &[true; 3]),
                traj(&[(1.0, 1.0); 3], &[true; 3]),
            ],
        };
        let mode = LengthMode::PathLength;
        assert_eq!(inter_score(0.0, &[0, 1], &set, mode).unwrap(), 0.0);
        assert_eq!(inter_score(0.5, &[0, 1], &set, mode).unwrap(), 6.0);
        assert_eq!(inter_score(0.9, &[2], &set, mode).unwrap(), 0.0);
        assert_eq!(inter_score(0.5, &[2], &set, LengthMode::Temporal).unwrap(), 1.5);
        assert!(inter_score(-1.0, &[2], &set, mode).is_err());
    }

    #[test]
    fn selection_examples() {
        let cfg = ScoringConfig::default();
        assert!(select_instances(&[0.0, 0.0], &cfg).is_empty());
        let cfg = ScoringConfig {
            selection_threshold: 0.5,
            ..cfg
        };
        assert_eq!(select_instances(&[1.0, 3.0, 0.2], &cfg), vec![1, 0]);
        assert_eq!(select_instances(&[2.0, 2.0, 3.0], &cfg), vec![2, 0, 1]);
    }

    #[test]
    fn labels_survive_global_scaling() {
        let set = synth::opposing_translations(10, 10, 8, 6.0, 10.0, 0.1, 4);
        let feats: Vec<_> = set
            .trajectories
            .iter()
            .map(|t| trajectory_features(t).unwrap())
            .collect();
        let cfg = ClusterConfig::for_frame(64, 64);
        let doubled = ClusterConfig {
            feature_scales: cfg.feature_scales.map(|s| s / 2.0),
            ..cfg
        };
        assert_eq!(
            cluster_instances(&feats, &cfg).unwrap().labels,
            cluster_instances(&feats, &doubled).unwrap().labels
        );
    }
}
