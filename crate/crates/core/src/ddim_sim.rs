//! Small DDIM sampler with an analytic point-mass denoiser, used to exercise
//! trajectory guidance end to end, plus the variable-length generation plan.

use std::f64::consts::FRAC_PI_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::{grad_lm, guided_epsilon, misalignment, predict_x0, GuidanceConfig, Guides, LatentSequence};
use crate::sampler::{CellPoint, SparseInstance, SparseTrajectory, SparseTrajectorySet};

/// Frames produced by one generation stage.
pub const CANONICAL_FRAMES: usize = 16;
pub const MAX_FRAMES: usize = 30;

const SCHEDULE_OFFSET: f64 = 0.008;
const MIN_ALPHA_BAR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdimSchedule {
    /// `alpha_bar[k]` for step index `k`; sampling runs from the last index down to 0.
    pub alpha_bar: Vec<f64>,
}

impl DdimSchedule {
    pub fn steps(&self) -> usize {
        self.alpha_bar.len()
    }
}

/// Cosine schedule evaluated at `t = k / steps`.
pub fn make_schedule(steps: usize) -> Result<DdimSchedule> {
    if steps == 0 {
        return Err(Error::invalid("a schedule needs at least one step"));
    }
    let alpha_bar = (0..steps)
        .map(|k| {
            let t = k as f64 / steps as f64;
            let c = ((t + SCHEDULE_OFFSET) / (1.0 + SCHEDULE_OFFSET) * FRAC_PI_2).cos();
            (c * c).clamp(MIN_ALPHA_BAR, 1.0)
        })
        .collect();
    Ok(DdimSchedule { alpha_bar })
}

/// Optimal noise predictor for a data distribution concentrated on `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDenoiser {
    pub target: LatentSequence,
}

pub fn toy_eps(denoiser: &ToyDenoiser, z_t: &LatentSequence, alpha_bar: f64) -> Result<LatentSequence> {
    if !z_t.same_shape(&denoiser.target) {
        return Err(Error::invalid("latent shape differs from the denoiser target"));
    }
    if !(alpha_bar > 0.0 && alpha_bar < 1.0) {
        return Err(Error::invalid(format!("alpha_bar must lie in (0, 1), got {alpha_bar}")));
    }
    let (sa, sn) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    let mut eps = z_t.clone();
    for (e, t) in eps.data_mut().iter_mut().zip(denoiser.target.data()) {
        *e = (*e - sa * t) / sn;
    }
    Ok(eps)
}

/// Deterministic DDIM update.
pub fn ddim_step(
    z_t: &LatentSequence,
    eps: &LatentSequence,
    alpha_bar: f64,
    alpha_bar_prev: f64,
) -> Result<LatentSequence> {
    let x0 = predict_x0(z_t, eps, alpha_bar)?;
    let (sa, sn) = (alpha_bar_prev.sqrt(), (1.0 - alpha_bar_prev).max(0.0).sqrt());
    let mut out = x0;
    for (o, e) in out.data_mut().iter_mut().zip(eps.data()) {
        *o = sa * *o + sn * e;
    }
    Ok(out)
}

/// Canonical-grid position of each of `len` frames.
pub fn markers(len: usize) -> Result<Vec<usize>> {
    if !(2..=CANONICAL_FRAMES).contains(&len) {
        return Err(Error::invalid(format!(
            "{len} frames cannot be placed on a {CANONICAL_FRAMES}-frame grid"
        )));
    }
    let span = (CANONICAL_FRAMES - 1) as f64 / (len - 1) as f64;
    let m: Vec<usize> = (0..len).map(|k| (k as f64 * span).round() as usize).collect();
    if m.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("markers are not strictly increasing"));
    }
    Ok(m)
}

/// Stretches a trajectory set of at most 16 frames onto the canonical grid.
///
/// Marker frames keep their points; in-between frames are linearly
/// interpolated between the enclosing markers and re-quantized, and are
/// visible only when both enclosing markers are.
pub fn interpolate_trajectories(set: &SparseTrajectorySet) -> Result<(SparseTrajectorySet, Vec<usize>)> {
    let m = markers(set.frames as usize)?;
    let instances = set
        .instances
        .iter()
        .map(|inst| SparseInstance {
            trajectories: inst.trajectories.iter().map(|t| stretch(t, &m)).collect(),
        })
        .collect();
    Ok((
        SparseTrajectorySet {
            frames: CANONICAL_FRAMES as u16,
            latent_w: set.latent_w,
            latent_h: set.latent_h,
            instances,
        },
        m,
    ))
}

fn stretch(t: &SparseTrajectory, m: &[usize]) -> SparseTrajectory {
    let mut points = Vec::with_capacity(CANONICAL_FRAMES);
    let mut visible = Vec::with_capacity(CANONICAL_FRAMES);
    for k in 0..m.len() - 1 {
        let (a, b) = (t.points[k], t.points[k + 1]);
        let (ma, mb) = (m[k], m[k + 1]);
        for pos in ma..mb {
            if pos == ma {
                points.push(a);
                visible.push(t.visible[k]);
                continue;
            }
            let s = (pos - ma) as f64 / (mb - ma) as f64;
            let lerp = |p: u16, q: u16| (p as f64 + s * (q as f64 - p as f64)).round() as u16;
            points.push(CellPoint {
                x: lerp(a.x, b.x),
                y: lerp(a.y, b.y),
            });
            visible.push(t.visible[k] && t.visible[k + 1]);
        }
    }
    points.push(*t.points.last().expect("at least two points"));
    visible.push(*t.visible.last().expect("at least two points"));
    SparseTrajectory { points, visible }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    /// First and last clip frame covered, inclusive.
    pub first: usize,
    pub last: usize,
    pub markers: Vec<usize>,
}

impl Stage {
    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationPlan {
    pub frames: usize,
    pub stages: Vec<Stage>,
}

impl GenerationPlan {
    /// Frames emitted in total; the shared boundary frame counts once.
    pub fn emitted(&self) -> usize {
        self.stages.iter().map(Stage::len).sum::<usize>() - (self.stages.len() - 1)
    }
}

pub fn plan_generation(frames: usize) -> Result<GenerationPlan> {
    if !(2..=MAX_FRAMES).contains(&frames) {
        return Err(Error::invalid(format!("clip length {frames} outside 2..={MAX_FRAMES}")));
    }
    let spans = if frames <= CANONICAL_FRAMES {
        vec![(0, frames - 1)]
    } else {
        let mid = frames.div_ceil(2);
        vec![(0, mid), (mid, frames - 1)]
    };
    let stages = spans
        .into_iter()
        .map(|(first, last)| {
            Ok(Stage {
                first,
                last,
                markers: markers(last - first + 1)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(GenerationPlan { frames, stages })
}

fn sub_trajectories(set: &SparseTrajectorySet, first: usize, last: usize) -> SparseTrajectorySet {
    SparseTrajectorySet {
        frames: (last - first + 1) as u16,
        latent_w: set.latent_w,
        latent_h: set.latent_h,
        instances: set
            .instances
            .iter()
            .map(|inst| SparseInstance {
                trajectories: inst
                    .trajectories
                    .iter()
                    .map(|t| SparseTrajectory {
                        points: t.points[first..=last].to_vec(),
                        visible: t.visible[first..=last].to_vec(),
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// Canonical-length target: marker frames copied, the rest linearly blended.
fn stretch_latents(z: &LatentSequence, first: usize, m: &[usize]) -> LatentSequence {
    let (h, w, c) = (z.height(), z.width(), z.channels());
    let mut out = LatentSequence::zeros(CANONICAL_FRAMES, h, w, c);
    for k in 0..m.len() - 1 {
        let (a, b) = (z.frame(first + k), z.frame(first + k + 1));
        for pos in m[k]..=m[k + 1] {
            let s = (pos - m[k]) as f64 / (m[k + 1] - m[k]) as f64;
            for ((o, x), y) in out.frame_mut(pos).iter_mut().zip(a).zip(b) {
                *o = if s == 0.0 {
                    *x
                } else if s == 1.0 {
                    *y
                } else {
                    x + s * (y - x)
                };
            }
        }
    }
    out
}

fn unit_noise(frames: usize, h: usize, w: usize, c: usize, seed: u64, stream: u64) -> LatentSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let data = (0..frames * h * w * c)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    LatentSequence::new(frames, h, w, c, data).expect("finite noise")
}

/// One canonical-length sampling run. `clamp` lists canonical positions held
/// to a clean latent.
fn sample_stage(
    target: &LatentSequence,
    guides: &Guides,
    clamp: &[(usize, &[f64])],
    schedule: &DdimSchedule,
    guidance: Option<&GuidanceConfig>,
    seed: u64,
    stream: u64,
) -> Result<LatentSequence> {
    let denoiser = ToyDenoiser { target: target.clone() };
    let (h, w, c) = (target.height(), target.width(), target.channels());
    let mut z = unit_noise(CANONICAL_FRAMES, h, w, c, seed, stream);
    for k in (0..schedule.steps()).rev() {
        let a = schedule.alpha_bar[k];
        let prev = if k > 0 { schedule.alpha_bar[k - 1] } else { 1.0 };
        let eps = toy_eps(&denoiser, &z, a)?;
        let eps_hat = match guidance {
            Some(cfg) => {
                let mut grad = grad_lm(&z, &eps, a, guides, cfg.weight_mode)?;
                for &(pos, _) in clamp {
                    grad.frame_mut(pos).fill(0.0);
                }
                guided_epsilon(&eps, &grad, a, cfg)?
            }
            None => eps,
        };
        z = ddim_step(&z, &eps_hat, a, prev)?;
        let (sa, sn) = (prev.sqrt(), (1.0 - prev).max(0.0).sqrt());
        for &(pos, key) in clamp {
            let noise = eps_hat.frame(pos).to_vec();
            for ((o, k), e) in z.frame_mut(pos).iter_mut().zip(key).zip(noise) {
                *o = sa * k + sn * e;
            }
        }
    }
    Ok(z)
}

/// Samples a clip of `plan.frames` latents between two clean keyframe latents.
///
/// `guidance = None` bypasses the guidance computation entirely.
pub fn generate_clip(
    keys: (&[f64], &[f64]),
    sparse: &SparseTrajectorySet,
    plan: &GenerationPlan,
    schedule: &DdimSchedule,
    guidance: Option<&GuidanceConfig>,
    denoiser: &ToyDenoiser,
    seed: u64,
) -> Result<LatentSequence> {
    let target = &denoiser.target;
    let (h, w, c) = (target.height(), target.width(), target.channels());
    if target.frames() != plan.frames || sparse.frames as usize != plan.frames {
        return Err(Error::invalid(format!(
            "plan covers {} frames, target {} and trajectories {}",
            plan.frames,
            target.frames(),
            sparse.frames
        )));
    }
    if keys.0.len() != target.frame_len() || keys.1.len() != target.frame_len() {
        return Err(Error::invalid("keyframe latents do not match the latent shape"));
    }
    if sparse.latent_w as usize != w || sparse.latent_h as usize != h {
        return Err(Error::invalid("trajectory grid does not match the latent grid"));
    }
    if let Some(cfg) = guidance {
        cfg.validate()?;
    }
    sparse.validate()?;

    let mut emitted: Vec<Vec<f64>> = Vec::with_capacity(plan.frames);
    let mut start_key = keys.0.to_vec();
    let last_stage = plan.stages.len() - 1;
    for (s, stage) in plan.stages.iter().enumerate() {
        let (sub, m) = interpolate_trajectories(&sub_trajectories(sparse, stage.first, stage.last))?;
        let guides = Guides::from_sparse(&sub);
        let stage_target = stretch_latents(target, stage.first, &m);
        let mut clamp: Vec<(usize, &[f64])> = vec![(0, &start_key)];
        if s == last_stage {
            clamp.push((CANONICAL_FRAMES - 1, keys.1));
        }
        let z = sample_stage(&stage_target, &guides, &clamp, schedule, guidance, seed, s as u64)?;
        let skip = usize::from(s > 0);
        emitted.extend(m.iter().skip(skip).map(|&pos| z.frame(pos).to_vec()));
        start_key = z.frame(CANONICAL_FRAMES - 1).to_vec();
    }
    let refs: Vec<&[f64]> = emitted.iter().map(Vec::as_slice).collect();
    LatentSequence::from_frames(&refs, h, w, c)
}

/// Synthetic latent scenes whose denoiser target contradicts the trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scene {
    Blob,
    TwoBlob,
    Shear,
}

impl std::str::FromStr for Scene {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blob" => Ok(Self::Blob),
            "two-blob" => Ok(Self::TwoBlob),
            "shear" => Ok(Self::Shear),
            other => Err(Error::invalid(format!(
                "unknown scene `{other}` (expected blob, two-blob or shear)"
            ))),
        }
    }
}

/// Latent grid of the toy scenes.
pub const SCENE_W: usize = 16;
pub const SCENE_H: usize = 12;
pub const SCENE_C: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSetup {
    pub target: LatentSequence,
    pub sparse: SparseTrajectorySet,
}

impl SceneSetup {
    pub fn keys(&self) -> (&[f64], &[f64]) {
        (self.target.frame(0), self.target.frame(self.target.frames() - 1))
    }

    pub fn guides(&self) -> Guides {
        Guides::from_sparse(&self.sparse)
    }
}

fn blob_value(x: f64, y: f64, cx: f64, cy: f64, sigma: f64) -> f64 {
    (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * sigma * sigma)).exp()
}

/// Content at frame `t`: blobs move along straight lines between the
/// keyframes. In the target the interior frames stay at the first keyframe's
/// layout, so only the keyframes agree with the trajectories.
pub fn make_scene(scene: Scene, frames: usize) -> Result<SceneSetup> {
    if !(2..=MAX_FRAMES).contains(&frames) {
        return Err(Error::invalid(format!("clip length {frames} outside 2..={MAX_FRAMES}")));
    }
    // (start, end) centers of each moving element.
    let paths: Vec<((f64, f64), (f64, f64))> = match scene {
        Scene::Blob => vec![((3.0, 6.0), (12.0, 6.0))],
        Scene::TwoBlob => vec![((3.0, 3.0), (12.0, 3.0)), ((12.0, 8.0), (3.0, 8.0))],
        Scene::Shear => (0..SCENE_H)
            .step_by(3)
            .map(|row| {
                let shift = row as f64 * 0.75;
                ((2.0, row as f64), (2.0 + shift, row as f64))
            })
            .collect(),
    };
    let at = |p: &((f64, f64), (f64, f64)), s: f64| (p.0 .0 + s * (p.1 .0 - p.0 .0), p.0 .1 + s * (p.1 .1 - p.0 .1));

    let render = |s: f64| -> Vec<f64> {
        let mut f = vec![0.0; SCENE_H * SCENE_W * SCENE_C];
        for y in 0..SCENE_H {
            for x in 0..SCENE_W {
                let base = (y * SCENE_W + x) * SCENE_C;
                for (n, p) in paths.iter().enumerate() {
                    let (cx, cy) = at(p, s);
                    let v = blob_value(x as f64, y as f64, cx, cy, 1.5);
                    f[base + n % SCENE_C] += v;
                }
            }
        }
        f
    };
    let span = (frames - 1) as f64;
    let first = render(0.0);
    let last = render(1.0);
    let frames_data: Vec<&[f64]> = (0..frames)
        .map(|t| {
            if t == frames - 1 {
                last.as_slice()
            } else {
                first.as_slice()
            }
        })
        .collect();
    let target = LatentSequence::from_frames(&frames_data, SCENE_H, SCENE_W, SCENE_C)?;

    let mut instances = Vec::new();
    for p in &paths {
        let mut trajectories = Vec::new();
        for (ox, oy) in [(0.0, 0.0), (1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
            let points: Vec<CellPoint> = (0..frames)
                .map(|t| {
                    let (cx, cy) = at(p, t as f64 / span);
                    let q = |v: f64, n: usize| (v.round()).clamp(0.0, (n - 1) as f64) as u16;
                    CellPoint {
                        x: q(cx + ox, SCENE_W),
                        y: q(cy + oy, SCENE_H),
                    }
                })
                .collect();
            trajectories.push(SparseTrajectory {
                points,
                visible: vec![true; frames],
            });
        }
        instances.push(SparseInstance { trajectories });
    }
    Ok(SceneSetup {
        target,
        sparse: SparseTrajectorySet {
            frames: frames as u16,
            latent_w: SCENE_W as u16,
            latent_h: SCENE_H as u16,
            instances,
        },
    })
}

/// Misalignment of an unguided and a guided run with the same seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub misalignment_unguided: f64,
    pub misalignment_guided: f64,
}

pub fn simulate(
    setup: &SceneSetup,
    steps: usize,
    cfg: &GuidanceConfig,
    seed: u64,
) -> Result<(LatentSequence, SimulationReport)> {
    let plan = plan_generation(setup.target.frames())?;
    let schedule = make_schedule(steps)?;
    let denoiser = ToyDenoiser {
        target: setup.target.clone(),
    };
    let plain = generate_clip(setup.keys(), &setup.sparse, &plan, &schedule, None, &denoiser, seed)?;
    let guided = generate_clip(
        setup.keys(),
        &setup.sparse,
        &plan,
        &schedule,
        Some(cfg),
        &denoiser,
        seed,
    )?;
    let guides = setup.guides();
    let report = SimulationReport {
        misalignment_unguided: misalignment(&plain, &guides, cfg.weight_mode)?,
        misalignment_guided: misalignment(&guided, &guides, cfg.weight_mode)?,
    };
    Ok((guided, report))
}
