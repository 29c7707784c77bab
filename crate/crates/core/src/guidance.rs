//! Trajectory-aligned guidance: feature sampling along trajectories, the
//! alignment loss, its analytic gradient and the guided noise prediction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::SparseTrajectorySet;

/// Latent tensors of a clip, stored frame-major, row-major, channel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence {
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl LatentSequence {
    pub fn new(frames: usize, height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 || channels == 0 {
            return Err(Error::invalid("latent dimensions must be positive"));
        }
        if data.len() != frames * height * width * channels {
            return Err(Error::invalid(format!(
                "latent data has {} values, expected {frames}x{height}x{width}x{channels}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("latent values must be finite"));
        }
        Ok(Self {
            frames,
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(frames: usize, height: usize, width: usize, channels: usize) -> Self {
        Self {
            frames,
            height,
            width,
            channels,
            data: vec![0.0; frames * height * width * channels],
        }
    }

    pub fn from_frames(frames: &[&[f64]], height: usize, width: usize, channels: usize) -> Result<Self> {
        let data = frames.iter().flat_map(|f| f.iter().copied()).collect();
        Self::new(frames.len(), height, width, channels, data)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        let n = self.frame_len();
        &mut self.data[t * n..(t + 1) * n]
    }

    #[inline]
    pub fn index(&self, t: usize, y: usize, x: usize, c: usize) -> usize {
        ((t * self.height + y) * self.width + x) * self.channels + c
    }

    pub fn same_shape(&self, other: &LatentSequence) -> bool {
        self.frames == other.frames
            && self.height == other.height
            && self.width == other.width
            && self.channels == other.channels
    }

    fn check_shape(&self, other: &LatentSequence, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{what}: shapes {}x{}x{}x{} and {}x{}x{}x{} differ",
                self.frames,
                self.height,
                self.width,
                self.channels,
                other.frames,
                other.height,
                other.width,
                other.channels
            )))
        }
    }

    pub fn max_abs_diff(&self, other: &LatentSequence) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Raw dump: `frames, height, width, channels` as u16 LE, then f32 LE values.
    pub fn to_dump(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(8 + 4 * self.data.len());
        for v in [self.frames, self.height, self.width, self.channels] {
            let v = u16::try_from(v).map_err(|_| Error::invalid("latent dimension exceeds u16"))?;
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_dump(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Truncation {
                offset: bytes.len(),
                what: "tensor header",
            });
        }
        let dim = |i: usize| u16::from_le_bytes([bytes[2 * i], bytes[2 * i + 1]]) as usize;
        let (l, h, w, c) = (dim(0), dim(1), dim(2), dim(3));
        let body = &bytes[8..];
        if body.len() != 4 * l * h * w * c {
            return Err(Error::invalid(format!(
                "tensor body has {} bytes, expected {}",
                body.len(),
                4 * l * h * w * c
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        Self::new(l, h, w, c, data)
    }
}

/// Position in latent cells; integer coordinates address cells directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidePoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuideTrajectory {
    pub points: Vec<GuidePoint>,
    pub visible: Vec<bool>,
}

/// All transmitted trajectories of a clip, flattened across instances.
#[derive(Debug, Clone, PartialEq)]
pub struct Guides {
    pub frames: usize,
    pub trajectories: Vec<GuideTrajectory>,
}

impl Guides {
    pub fn from_sparse(set: &SparseTrajectorySet) -> Self {
        let trajectories = set
            .instances
            .iter()
            .flat_map(|i| &i.trajectories)
            .map(|t| GuideTrajectory {
                points: t
                    .points
                    .iter()
                    .map(|p| GuidePoint {
                        x: p.x as f64,
                        y: p.y as f64,
                    })
                    .collect(),
                visible: t.visible.clone(),
            })
            .collect();
        Self {
            frames: set.frames as usize,
            trajectories,
        }
    }

    pub fn validate(&self, z: &LatentSequence) -> Result<()> {
        if self.frames != z.frames() {
            return Err(Error::invalid(format!(
                "trajectories span {} frames but the latent sequence has {}",
                self.frames,
                z.frames()
            )));
        }
        for (j, t) in self.trajectories.iter().enumerate() {
            if t.points.len() != self.frames || t.visible.len() != self.frames {
                return Err(Error::invalid(format!("trajectory {j} has the wrong length")));
            }
            for p in &t.points {
                check_bounds(p, z)?;
            }
        }
        Ok(())
    }
}

fn check_bounds(p: &GuidePoint, z: &LatentSequence) -> Result<()> {
    let inside = |v: f64, n: usize| v >= 0.0 && v <= (n - 1) as f64;
    if inside(p.x, z.width()) && inside(p.y, z.height()) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "point ({}, {}) outside the {}x{} latent grid",
            p.x,
            p.y,
            z.width(),
            z.height()
        )))
    }
}

/// Bilinear neighbors of a point as `(y, x, weight)`.
fn footprint(p: &GuidePoint, width: usize, height: usize) -> [(usize, usize, f64); 4] {
    let x0 = (p.x.floor() as usize).min(width - 1);
    let y0 = (p.y.floor() as usize).min(height - 1);
    let fx = p.x - x0 as f64;
    let fy = p.y - y0 as f64;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    [
        (y0, x0, (1.0 - fx) * (1.0 - fy)),
        (y0, x1, fx * (1.0 - fy)),
        (y1, x0, (1.0 - fx) * fy),
        (y1, x1, fx * fy),
    ]
}

fn sample_into(z: &LatentSequence, t: usize, p: &GuidePoint, out: &mut [f64]) {
    out.fill(0.0);
    for (y, x, w) in footprint(p, z.width(), z.height()) {
        if w == 0.0 {
            continue;
        }
        let base = z.index(t, y, x, 0);
        for (c, o) in out.iter_mut().enumerate() {
            *o += w * z.data[base + c];
        }
    }
}

/// Features of frame `t` at `points`, `channels` values per point in order.
pub fn sample_feature(z: &LatentSequence, t: usize, points: &[GuidePoint]) -> Result<Vec<f64>> {
    if t >= z.frames() {
        return Err(Error::invalid(format!("frame {t} out of range")));
    }
    let c = z.channels();
    let mut out = vec![0.0; points.len() * c];
    for (p, chunk) in points.iter().zip(out.chunks_exact_mut(c)) {
        check_bounds(p, z)?;
        sample_into(z, t, p, chunk);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// Frames closer to a keyframe weigh that keyframe more.
    Linear,
    Uniform,
}

impl std::str::FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::invalid(format!(
                "unknown weight mode `{other}` (expected linear or uniform)"
            ))),
        }
    }
}

impl WeightMode {
    /// `(alpha_i, beta_i)`: weights of the first and last keyframe for frame `i`.
    pub fn weights(self, i: usize, frames: usize) -> (f64, f64) {
        match self {
            WeightMode::Uniform => (0.5, 0.5),
            WeightMode::Linear => {
                let span = (frames - 1) as f64;
                ((frames - 1 - i) as f64 / span, i as f64 / span)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub scale_coeff: f64,
    pub weight_mode: WeightMode,
    pub enabled: bool,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            scale_coeff: 30.0,
            weight_mode: WeightMode::Linear,
            enabled: true,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale_coeff >= 0.0) || !self.scale_coeff.is_finite() {
            return Err(Error::invalid("scale_coeff must be a finite non-negative number"));
        }
        Ok(())
    }

    /// Guidance strength at noise level `alpha_t`.
    pub fn scale(&self, alpha_t: f64) -> f64 {
        self.scale_coeff * (1.0 - alpha_t).max(0.0).sqrt()
    }

    fn is_active(&self) -> bool {
        self.enabled && self.scale_coeff != 0.0
    }
}

/// One compared pair: keyframe `k`, frame `i`, trajectory `j`, weight.
fn for_each_term(guides: &Guides, mode: WeightMode, mut f: impl FnMut(usize, usize, &GuideTrajectory, f64)) {
    let l = guides.frames;
    if l < 3 {
        return;
    }
    for i in 1..l - 1 {
        let (a, b) = mode.weights(i, l);
        for t in &guides.trajectories {
            if !t.visible[i] {
                continue;
            }
            for (k, w) in [(0, a), (l - 1, b)] {
                if w != 0.0 && t.visible[k] {
                    f(k, i, t, w);
                }
            }
        }
    }
}

/// Alignment loss on predicted clean latents.
pub fn loss_lm(z0: &LatentSequence, guides: &Guides, mode: WeightMode) -> Result<f64> {
    loss_touching(z0, guides, mode, None)
}

/// Sum of the loss terms that read `frame`, or of all terms.
fn loss_touching(z0: &LatentSequence, guides: &Guides, mode: WeightMode, frame: Option<usize>) -> Result<f64> {
    guides.validate(z0)?;
    let c = z0.channels();
    let (mut fk, mut fi) = (vec![0.0; c], vec![0.0; c]);
    let mut total = 0.0;
    for_each_term(guides, mode, |k, i, t, w| {
        if frame.is_some_and(|f| f != k && f != i) {
            return;
        }
        sample_into(z0, k, &t.points[k], &mut fk);
        sample_into(z0, i, &t.points[i], &mut fi);
        total += w * fk.iter().zip(&fi).map(|(a, b)| (a - b).abs()).sum::<f64>();
    });
    Ok(total)
}

/// Loss normalized by the total weight of compared features.
pub fn misalignment(z0: &LatentSequence, guides: &Guides, mode: WeightMode) -> Result<f64> {
    let loss = loss_lm(z0, guides, mode)?;
    let mut mass = 0.0;
    for_each_term(guides, mode, |_, _, _, w| mass += w * z0.channels() as f64);
    Ok(if mass == 0.0 { 0.0 } else { loss / mass })
}

/// Gradient of the alignment loss with respect to the clean latents.
pub fn loss_gradient(z0: &LatentSequence, guides: &Guides, mode: WeightMode) -> Result<LatentSequence> {
    guides.validate(z0)?;
    let c = z0.channels();
    let (w, h) = (z0.width(), z0.height());
    let mut grad = LatentSequence::zeros(z0.frames(), h, w, c);
    let (mut fk, mut fi) = (vec![0.0; c], vec![0.0; c]);
    let mut g = vec![0.0; c];
    for_each_term(guides, mode, |k, i, t, wt| {
        sample_into(z0, k, &t.points[k], &mut fk);
        sample_into(z0, i, &t.points[i], &mut fi);
        for ch in 0..c {
            let d = fk[ch] - fi[ch];
            g[ch] = if d > 0.0 {
                wt
            } else if d < 0.0 {
                -wt
            } else {
                0.0
            };
        }
        for (frame, sign) in [(k, 1.0), (i, -1.0)] {
            for (y, x, bw) in footprint(&t.points[frame], w, h) {
                if bw == 0.0 {
                    continue;
                }
                let base = grad.index(frame, y, x, 0);
                for ch in 0..c {
                    grad.data[base + ch] += sign * bw * g[ch];
                }
            }
        }
    });
    Ok(grad)
}

pub fn predict_x0(z_t: &LatentSequence, eps: &LatentSequence, alpha_t: f64) -> Result<LatentSequence> {
    if !(alpha_t > 0.0 && alpha_t <= 1.0) {
        return Err(Error::invalid(format!("alpha_t must lie in (0, 1], got {alpha_t}")));
    }
    z_t.check_shape(eps, "predict_x0")?;
    let (sa, sn) = (alpha_t.sqrt(), (1.0 - alpha_t).sqrt());
    let mut out = z_t.clone();
    for (o, e) in out.data.iter_mut().zip(&eps.data) {
        *o = (*o - sn * e) / sa;
    }
    Ok(out)
}

/// Gradient of the loss of the predicted clean latents with respect to the
/// noisy latents, with the noise prediction held fixed.
pub fn grad_lm(
    z_t: &LatentSequence,
    eps: &LatentSequence,
    alpha_t: f64,
    guides: &Guides,
    mode: WeightMode,
) -> Result<LatentSequence> {
    let z0 = predict_x0(z_t, eps, alpha_t)?;
    let mut g = loss_gradient(&z0, guides, mode)?;
    let inv = 1.0 / alpha_t.sqrt();
    g.data.iter_mut().for_each(|v| *v *= inv);
    Ok(g)
}

/// Noise prediction nudged along the loss gradient.
///
/// Returns an exact copy of `eps` when guidance is disabled or has zero strength.
pub fn guided_epsilon(
    eps: &LatentSequence,
    grad: &LatentSequence,
    alpha_t: f64,
    cfg: &GuidanceConfig,
) -> Result<LatentSequence> {
    eps.check_shape(grad, "guided_epsilon")?;
    let s = cfg.scale(alpha_t);
    if !cfg.is_active() || s == 0.0 {
        return Ok(eps.clone());
    }
    let mut out = eps.clone();
    for (o, g) in out.data.iter_mut().zip(&grad.data) {
        *o += s * g;
    }
    Ok(out)
}

/// Central finite-difference check of [`grad_lm`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Largest relative error among the entries of each frame.
    pub per_frame: Vec<f64>,
}

/// Magnitude below which gradient entries are compared absolutely; exact
/// cancellations leave finite differences with round-off of about 1e-12.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// Relative error `|a - n| / max(|a|, |n|, GRADCHECK_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADCHECK_FLOOR)
}

/// Central finite differences of the loss against the analytic gradient.
/// Each probe only re-evaluates the loss terms that read the perturbed frame,
/// so the untouched terms do not add round-off to the difference.
pub fn gradient_check(
    z_t: &LatentSequence,
    eps: &LatentSequence,
    alpha_t: f64,
    guides: &Guides,
    mode: WeightMode,
    h: f64,
) -> Result<GradCheck> {
    let analytic = grad_lm(z_t, eps, alpha_t, guides, mode)?;
    let n = z_t.frame_len();
    let loss_at = |z: &LatentSequence, f: usize| {
        predict_x0(z, eps, alpha_t).and_then(|x| loss_touching(&x, guides, mode, Some(f)))
    };
    let mut per_frame = vec![0.0f64; z_t.frames()];
    let mut probe = z_t.clone();
    for idx in 0..z_t.data.len() {
        let f = idx / n;
        let orig = probe.data[idx];
        probe.data[idx] = orig + h;
        let up = loss_at(&probe, f)?;
        probe.data[idx] = orig - h;
        let down = loss_at(&probe, f)?;
        probe.data[idx] = orig;
        let numeric = (up - down) / (2.0 * h);
        let e = relative_error(analytic.data[idx], numeric);
        per_frame[f] = per_frame[f].max(e);
    }
    Ok(GradCheck {
        max_rel_error: per_frame.iter().copied().fold(0.0, f64::max),
        per_frame,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn guides(points: &[&[(f64, f64)]], frames: usize) -> Guides {
        Guides {
            frames,
            trajectories: points
                .iter()
                .map(|ps| GuideTrajectory {
                    points: ps.iter().map(|&(x, y)| GuidePoint { x, y }).collect(),
                    visible: vec![true; frames],
                })
                .collect(),
        }
    }

    fn random_latents(rng: &mut ChaCha8Rng, l: usize, h: usize, w: usize, c: usize) -> LatentSequence {
        let data = (0..l * h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        LatentSequence::new(l, h, w, c, data).unwrap()
    }

    #[test]
    fn bilinear_sampling() {
        let mut z = LatentSequence::zeros(1, 2, 2, 3);
        let i = z.index(0, 1, 0, 2);
        z.data_mut()[i] = 1.0;
        assert_eq!(
            sample_feature(&z, 0, &[GuidePoint { x: 0.0, y: 1.0 }]).unwrap(),
            vec![0.0, 0.0, 1.0]
        );
        let mut z = LatentSequence::zeros(1, 1, 2, 1);
        z.data_mut()[1] = 1.0;
        assert_eq!(
            sample_feature(&z, 0, &[GuidePoint { x: 0.5, y: 0.0 }]).unwrap(),
            vec![0.5]
        );
        assert!(sample_feature(&z, 0, &[GuidePoint { x: 1.5, y: 0.0 }]).is_err());
        assert!(sample_feature(&z, 0, &[]).unwrap().is_empty());
    }

    #[test]
    fn hand_computed_loss() {
        let z = LatentSequence::new(3, 1, 1, 1, vec![0.0, 1.0, 0.0]).unwrap();
        let g = guides(&[&[(0.0, 0.0); 3]], 3);
        assert_eq!(loss_lm(&z, &g, WeightMode::Linear).unwrap(), 1.0);
    }

    #[test]
    fn occluded_frames_contribute_nothing() {
        let z = LatentSequence::new(3, 1, 1, 1, vec![0.0, 1.0, 0.0]).unwrap();
        let mut g = guides(&[&[(0.0, 0.0); 3]], 3);
        g.trajectories[0].visible[1] = false;
        assert_eq!(loss_lm(&z, &g, WeightMode::Linear).unwrap(), 0.0);
        g.trajectories[0].visible = vec![false, true, true];
        assert_eq!(loss_lm(&z, &g, WeightMode::Linear).unwrap(), 0.5);
    }

    #[test]
    fn identical_frames_have_zero_loss_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let one = random_latents(&mut rng, 1, 4, 4, 2);
        let frames = vec![one.frame(0); 5];
        let z = LatentSequence::from_frames(&frames, 4, 4, 2).unwrap();
        let g = guides(&[&[(1.0, 2.0); 5], &[(3.0, 0.0); 5]], 5);
        assert_eq!(loss_lm(&z, &g, WeightMode::Linear).unwrap(), 0.0);
        assert!(loss_gradient(&z, &g, WeightMode::Uniform)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn loss_is_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = random_latents(&mut rng, 6, 4, 4, 2);
        let pts: Vec<(f64, f64)> = (0..6).map(|t| (t as f64 * 0.5, 3.0 - t as f64 * 0.4)).collect();
        let g = guides(&[&pts], 6);
        let mut shifted = z.clone();
        shifted.data_mut().iter_mut().for_each(|v| *v += 3.25);
        let a = loss_lm(&z, &g, WeightMode::Linear).unwrap();
        let b = loss_lm(&shifted, &g, WeightMode::Linear).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn predict_x0_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_latents(&mut rng, 2, 2, 3, 1);
        let e = random_latents(&mut rng, 2, 2, 3, 1);
        assert_eq!(predict_x0(&x, &e, 1.0).unwrap(), x);
        let zero = LatentSequence::zeros(2, 2, 3, 1);
        let doubled = predict_x0(&x, &zero, 0.25).unwrap();
        for (d, v) in doubled.data().iter().zip(x.data()) {
            assert_eq!(*d, 2.0 * v);
        }
        let a: f64 = 0.3;
        let mut z = x.clone();
        for ((zv, xv), ev) in z.data_mut().iter_mut().zip(x.data()).zip(e.data()) {
            *zv = a.sqrt() * xv + (1.0 - a).sqrt() * ev;
        }
        assert!(predict_x0(&z, &e, a).unwrap().max_abs_diff(&x) < 1e-12);
        assert!(predict_x0(&x, &e, 0.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let z = random_latents(&mut rng, 6, 4, 4, 2);
            let e = random_latents(&mut rng, 6, 4, 4, 2);
            let pts: Vec<(f64, f64)> = (0..6)
                .map(|_| (rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)))
                .collect();
            let g = guides(&[&pts], 6);
            let check = gradient_check(&z, &e, 0.6, &g, WeightMode::Linear, 1e-4).unwrap();
            assert!(check.max_rel_error < 1e-4, "{check:?}");
        }
    }

    #[test]
    fn gradient_support_is_local() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = random_latents(&mut rng, 4, 4, 4, 1);
        let g = guides(&[&[(1.0, 1.0); 4]], 4);
        let grad = loss_gradient(&z, &g, WeightMode::Linear).unwrap();
        for t in 0..4 {
            for y in 0..4 {
                for x in 0..4 {
                    if (x, y) != (1, 1) {
                        assert_eq!(grad.data()[grad.index(t, y, x, 0)], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn guided_epsilon_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let e = random_latents(&mut rng, 2, 2, 2, 1);
        let g = random_latents(&mut rng, 2, 2, 2, 1);
        let off = GuidanceConfig {
            scale_coeff: 0.0,
            ..GuidanceConfig::default()
        };
        assert_eq!(guided_epsilon(&e, &g, 0.5, &off).unwrap(), e);
        let on = GuidanceConfig::default();
        assert_eq!(guided_epsilon(&e, &g, 1.0, &on).unwrap(), e);
        assert_eq!(on.scale(0.75), 15.0);
        let out = guided_epsilon(&e, &g, 0.75, &on).unwrap();
        for ((o, ev), gv) in out.data().iter().zip(e.data()).zip(g.data()) {
            assert_eq!(*o, ev + 15.0 * gv);
        }
    }

    #[test]
    fn dump_round_trip() {
        let z = LatentSequence::new(2, 1, 2, 1, vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        let bytes = z.to_dump().unwrap();
        assert_eq!(&bytes[..8], &[2, 0, 1, 0, 2, 0, 1, 0]);
        assert_eq!(LatentSequence::from_dump(&bytes).unwrap(), z);
    }
}
