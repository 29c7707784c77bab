//! Encoder pipeline: configuration, per-clip motion coding, manifest and rate tables.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bitstream::{self, rate_report, RateReport};
use crate::error::{Error, Result};
use crate::guidance::{GuidanceConfig, WeightMode};
use crate::motion::{self, ClusterConfig, InstanceReport, LengthMode, ScoringConfig};
use crate::par;
use crate::sampler::{
    keypoint_budget, kmeans_sample, quantize_trajectory, random_sample, BudgetConfig, LatentGrid, SamplingMode,
    SparseInstance, SparseTrajectorySet, LATENT_FACTOR,
};
use crate::tracker::{self, CellSize, TrackerConfig, TrajectorySet};
use crate::video::{self, Clip, Frame, SegmentationConfig, SimilarityProvider};

/// Every tunable of the encoder and simulator, as one flat record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub cut_threshold: f64,
    pub max_clip_len: usize,
    pub target_clip_len: usize,
    pub grid_size: u32,
    pub block_radius: u32,
    pub search_radius: u32,
    pub visibility_threshold: f64,
    pub min_cluster_size: usize,
    pub min_samples: usize,
    pub selection_threshold: f64,
    pub length_mode: LengthMode,
    pub alpha: f64,
    pub beta: f64,
    pub kmax: u32,
    pub sampling: SamplingMode,
    pub scale_coeff: f64,
    pub weight_mode: WeightMode,
    pub guidance: bool,
    pub steps: usize,
}

impl Default for Config {
    fn default() -> Self {
        let seg = SegmentationConfig::default();
        let tr = TrackerConfig::default();
        let cl = ClusterConfig::default();
        let sc = ScoringConfig::default();
        let bu = BudgetConfig::default();
        let gu = GuidanceConfig::default();
        Self {
            seed: 0,
            cut_threshold: seg.cut_threshold,
            max_clip_len: seg.max_clip_len,
            target_clip_len: seg.target_clip_len,
            grid_size: tr.grid_size,
            block_radius: tr.block_radius,
            search_radius: tr.search_radius,
            visibility_threshold: tr.visibility_threshold,
            min_cluster_size: cl.min_cluster_size,
            min_samples: cl.min_samples,
            selection_threshold: sc.selection_threshold,
            length_mode: sc.length_mode,
            alpha: bu.alpha,
            beta: bu.beta,
            kmax: bu.k_max,
            sampling: SamplingMode::Sparse,
            scale_coeff: gu.scale_coeff,
            weight_mode: gu.weight_mode,
            guidance: gu.enabled,
            steps: 10,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_col(text, s.start))
                .map_or((None, None), |(l, c)| (Some(l), Some(c)));
            Error::Parse {
                line,
                column,
                field: "config".to_string(),
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.segmentation().validate()?;
        self.tracker().validate()?;
        self.budget().validate()?;
        self.guidance().validate()?;
        if self.min_cluster_size < 2 {
            return Err(Error::invalid("min_cluster_size must be at least 2"));
        }
        if self.min_samples < 1 {
            return Err(Error::invalid("min_samples must be at least 1"));
        }
        if self.steps < 1 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn segmentation(&self) -> SegmentationConfig {
        SegmentationConfig {
            cut_threshold: self.cut_threshold,
            max_clip_len: self.max_clip_len,
            target_clip_len: self.target_clip_len,
        }
    }

    pub fn tracker(&self) -> TrackerConfig {
        TrackerConfig {
            grid_size: self.grid_size,
            block_radius: self.block_radius,
            search_radius: self.search_radius,
            visibility_threshold: self.visibility_threshold,
        }
    }

    pub fn clustering(&self, width: u32, height: u32) -> ClusterConfig {
        ClusterConfig {
            min_cluster_size: self.min_cluster_size,
            min_samples: self.min_samples,
            ..ClusterConfig::for_frame(width, height)
        }
    }

    pub fn scoring(&self) -> ScoringConfig {
        ScoringConfig {
            selection_threshold: self.selection_threshold,
            length_mode: self.length_mode,
        }
    }

    pub fn budget(&self) -> BudgetConfig {
        BudgetConfig {
            alpha: self.alpha,
            beta: self.beta,
            k_max: self.kmax,
            ..BudgetConfig::default()
        }
    }

    pub fn guidance(&self) -> GuidanceConfig {
        GuidanceConfig {
            scale_coeff: self.scale_coeff,
            weight_mode: self.weight_mode,
            enabled: self.guidance,
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// Mixes a base seed with clip and instance indices.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut h = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    h ^= h >> 30;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^ (h >> 31)
}

/// Result of coding one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedClip {
    pub index: usize,
    pub first_frame: usize,
    pub last_frame: usize,
    pub instances: Vec<InstanceReport>,
    pub sparse: SparseTrajectorySet,
    pub stream: Vec<u8>,
}

/// Dense trajectories of a clip from the built-in tracker, both directions fused.
pub fn dense_tracks(clip: &Clip, cfg: &TrackerConfig) -> Result<TrajectorySet> {
    let fwd = tracker::track_forward(clip, cfg)?;
    let bwd = tracker::track_backward(clip, cfg)?;
    tracker::fuse_bidirectional(
        &fwd,
        &bwd,
        CellSize::for_grid(clip.width(), clip.height(), cfg.grid_size),
    )
}

/// Motion coding of one clip. `tracks` replaces the built-in tracker when given.
pub fn encode_clip(
    clip: &Clip,
    index: usize,
    first_frame: usize,
    tracks: Option<&TrajectorySet>,
    cfg: &Config,
    provider: &dyn SimilarityProvider,
) -> Result<EncodedClip> {
    let (w, h) = (clip.width(), clip.height());
    let owned;
    let set = match tracks {
        Some(t) => {
            if t.frames != clip.len() {
                return Err(Error::invalid(format!(
                    "imported tracks for clip {index} span {} frames, the clip has {}",
                    t.frames,
                    clip.len()
                )));
            }
            t
        }
        None => {
            owned = dense_tracks(clip, &cfg.tracker())?;
            &owned
        }
    };
    let grid = LatentGrid::for_frame(w, h, LATENT_FACTOR)?;
    let cluster_cfg = cfg.clustering(w, h);
    let (features, feature_index, instances) = motion::instantiate(set, &cluster_cfg, &grid)?;

    let intra = par::try_map(&instances, |inst| {
        motion::intra_score(clip, &inst.masks, &grid, provider)
    })?;
    let inter = instances
        .iter()
        .zip(&intra)
        .map(|(inst, &s)| motion::inter_score(s, &inst.members, set, cfg.length_mode))
        .collect::<Result<Vec<f64>>>()?;
    let selected = motion::select_instances(&inter, &cfg.scoring());

    let budget = BudgetConfig {
        score_norm: selected.iter().map(|&i| inter[i]).fold(0.0, f64::max),
        ..cfg.budget()
    };
    let n_total = (cfg.grid_size as usize).pow(2);
    let position: std::collections::HashMap<usize, usize> =
        feature_index.iter().enumerate().map(|(k, &i)| (i, k)).collect();

    let mut keypoints = vec![0u32; instances.len()];
    let mut sparse = SparseTrajectorySet::empty(clip.len(), grid.width, grid.height);
    for &id in &selected {
        let inst = &instances[id];
        let k = keypoint_budget(inter[id], inst.len(), n_total, &budget) as usize;
        let seed = derive_seed(cfg.seed, index as u64, id as u64);
        let picks: Vec<usize> = match cfg.sampling {
            SamplingMode::Dense => (0..inst.len()).collect(),
            SamplingMode::Random => random_sample(inst.len(), k, seed),
            SamplingMode::Sparse => {
                let feats: Vec<Vec<f64>> = inst
                    .members
                    .iter()
                    .map(|m| cluster_cfg.scale(&features[position[m]]))
                    .collect();
                kmeans_sample(&feats, k, seed)
            }
        };
        keypoints[id] = picks.len() as u32;
        sparse.instances.push(SparseInstance {
            trajectories: picks
                .iter()
                .map(|&p| {
                    let t = &set.trajectories[inst.members[p]];
                    quantize_trajectory(&t.points, &t.visible, &grid)
                })
                .collect(),
        });
    }
    let stream = bitstream::encode(&sparse)?.bytes;

    let instances = instances
        .iter()
        .map(|inst| InstanceReport {
            id: inst.id,
            members: inst.len(),
            s_intra: intra[inst.id],
            s_inter: inter[inst.id],
            selected: selected.contains(&inst.id),
            keypoints: keypoints[inst.id],
        })
        .collect();
    Ok(EncodedClip {
        index,
        first_frame,
        last_frame: first_frame + clip.len() as usize - 1,
        instances,
        sparse,
        stream,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestClip {
    pub index: usize,
    /// First and last frame, inclusive; neighbors share their boundary keyframe.
    pub frame_range: [usize; 2],
    pub keyframes: [usize; 2],
    pub stream: String,
    pub byte_length: usize,
    pub instance_count: usize,
    pub instance_k: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub total_frames: usize,
    pub keyframes: Vec<usize>,
    pub config_digest: String,
    pub clips: Vec<ManifestClip>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let m: Manifest = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            Error::Parse {
                line: Some(inner.line()),
                column: Some(inner.column()),
                field,
                message: inner.to_string(),
            }
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.total_frames < 2 {
            return Err(Error::invalid("manifest dimensions must be positive"));
        }
        let mut expected_start = 0;
        for (i, c) in self.clips.iter().enumerate() {
            let [a, b] = c.frame_range;
            if c.index != i || a != expected_start || b <= a {
                return Err(Error::invalid(format!("clip {i} does not continue the previous clip")));
            }
            if c.byte_length < bitstream::HEADER_LEN {
                return Err(Error::invalid(format!("clip {i} stream is shorter than a header")));
            }
            expected_start = b;
        }
        if self.clips.is_empty() || expected_start != self.total_frames - 1 {
            return Err(Error::invalid("clips do not cover the video"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

pub fn stream_name(index: usize) -> String {
    format!("clip_{index:04}.tgvc")
}

/// A fully coded video.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedVideo {
    pub manifest: Manifest,
    pub clips: Vec<EncodedClip>,
}

/// Keyframe selection, clip segmentation and motion coding of every clip.
///
/// `tracks`, when given, holds one imported trajectory set per clip.
pub fn encode_video(
    video: &[Frame],
    cfg: &Config,
    provider: &dyn SimilarityProvider,
    tracks: Option<&[TrajectorySet]>,
) -> Result<EncodedVideo> {
    cfg.validate()?;
    let seg = cfg.segmentation();
    let keys = video::select_keyframes(video, provider, &seg)?;
    let keys = video::insert_span_keyframes(&keys, seg.max_clip_len.min(video::MAX_CLIP_FRAMES));
    let clips = video::segment_into_clips(video, &keys, seg.max_clip_len)?;
    if let Some(t) = tracks {
        if t.len() != clips.len() {
            return Err(Error::invalid(format!(
                "{} imported track sets for {} clips",
                t.len(),
                clips.len()
            )));
        }
    }
    let encoded = par::try_map_range(clips.len(), |i| {
        encode_clip(&clips[i], i, keys[i], tracks.map(|t| &t[i]), cfg, provider)
    })?;

    let first = &video[0];
    let manifest = Manifest {
        width: first.width(),
        height: first.height(),
        channels: first.channels(),
        total_frames: video.len(),
        keyframes: keys,
        config_digest: cfg.digest(),
        clips: encoded
            .iter()
            .map(|c| ManifestClip {
                index: c.index,
                frame_range: [c.first_frame, c.last_frame],
                keyframes: [c.first_frame, c.last_frame],
                stream: stream_name(c.index),
                byte_length: c.stream.len(),
                instance_count: c.sparse.instances.len(),
                instance_k: c.sparse.instances.iter().map(|i| i.trajectories.len() as u32).collect(),
            })
            .collect(),
    };
    Ok(EncodedVideo {
        manifest,
        clips: encoded,
    })
}

/// Rate of one clip, or of the whole video for the totals row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub clip: Option<usize>,
    /// Frames attributed to this row; shared boundary frames go to the earlier clip.
    pub frames: usize,
    pub keyframes: usize,
    pub rate: RateReport,
}

/// Per-clip rows followed by the totals row. `bits_per_keyframe` is the
/// externally measured cost of one coded keyframe.
pub fn metrics_table(manifest: &Manifest, bits_per_keyframe: u64) -> Result<Vec<MetricsRow>> {
    manifest.validate()?;
    let n = manifest.clips.len();
    let mut rows = Vec::with_capacity(n + 1);
    let (mut bytes, mut frames, mut keyframes) = (0usize, 0usize, 0usize);
    for (i, c) in manifest.clips.iter().enumerate() {
        let last = i + 1 == n;
        let f = c.frame_range[1] - c.frame_range[0] + usize::from(last);
        let k = 1 + usize::from(last);
        rows.push(MetricsRow {
            clip: Some(c.index),
            frames: f,
            keyframes: k,
            rate: rate_report(
                c.byte_length,
                manifest.width,
                manifest.height,
                f as u64,
                bits_per_keyframe * k as u64,
            )?,
        });
        bytes += c.byte_length;
        frames += f;
        keyframes += k;
    }
    rows.push(MetricsRow {
        clip: None,
        frames,
        keyframes,
        rate: rate_report(
            bytes,
            manifest.width,
            manifest.height,
            frames as u64,
            bits_per_keyframe * keyframes as u64,
        )?,
    });
    Ok(rows)
}

/// Decoded sparse trajectories in the interchange format, in latent cells.
///
/// Each track's origin is `[instance, index within instance]`.
pub fn sparse_to_tracks(set: &SparseTrajectorySet) -> TrajectorySet {
    let trajectories = set
        .instances
        .iter()
        .enumerate()
        .flat_map(|(i, inst)| {
            inst.trajectories
                .iter()
                .enumerate()
                .map(move |(k, t)| tracker::Trajectory {
                    points: t
                        .points
                        .iter()
                        .map(|p| tracker::Point::new(p.x as f64, p.y as f64))
                        .collect(),
                    visible: t.visible.clone(),
                    origin: (i as u32, k as u32),
                    direction: tracker::Direction::Forward,
                })
        })
        .collect();
    TrajectorySet {
        frames: set.frames,
        grid_size: 0,
        trajectories,
    }
}
