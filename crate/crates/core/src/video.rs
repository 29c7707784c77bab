//! Frame and clip data model, frame similarity, keyframe selection and clip segmentation.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Largest clip a single generation pass can cover.
pub const MAX_CLIP_FRAMES: usize = 30;

/// An 8-bit raster, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl Frame {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self> {
        if width < 8 || height < 8 {
            return Err(Error::invalid(format!(
                "frame must be at least 8x8, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "frame channel count must be 1 or 3, got {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(Error::invalid(format!(
                "frame data has {} bytes, expected {expected}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// A frame filled with a single value in every channel.
    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self> {
        let n = width as usize * height as usize * channels as usize;
        Self::new(width, height, channels, vec![value; n])
    }

    /// Builds a frame by evaluating `f(x, y, channel)` at every sample.
    pub fn from_fn(width: u32, height: u32, channels: u8, mut f: impl FnMut(u32, u32, u8) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width as usize * height as usize * channels as usize);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn sample(&self, x: u32, y: u32, c: u8) -> u8 {
        let idx = (y as usize * self.width as usize + x as usize) * self.channels as usize + c as usize;
        self.data[idx]
    }

    /// Mean over channels at one pixel, in `[0, 255]`.
    #[inline]
    pub fn luma(&self, x: u32, y: u32) -> f64 {
        let base = (y as usize * self.width as usize + x as usize) * self.channels as usize;
        let px = &self.data[base..base + self.channels as usize];
        px.iter().map(|&v| v as f64).sum::<f64>() / self.channels as f64
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }
}

/// The frames between (and including) two consecutive keyframes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clip {
    frames: Vec<Frame>,
}

impl Clip {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::invalid(format!(
                "a clip needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        if frames.len() > u16::MAX as usize {
            return Err(Error::invalid("clip too long for a u16 frame count"));
        }
        if frames.iter().any(|f| !f.same_shape(&frames[0])) {
            return Err(Error::invalid("all frames of a clip must share dimensions"));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    /// Frame count `L`.
    pub fn len(&self) -> u16 {
        self.frames.len() as u16
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn width(&self) -> u32 {
        self.frames[0].width
    }

    pub fn height(&self) -> u32 {
        self.frames[0].height
    }

    /// The same clip with its temporal order reversed.
    pub fn reversed(&self) -> Clip {
        let mut frames = self.frames.clone();
        frames.reverse();
        Clip { frames }
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }
}

/// Scores the semantic similarity of two frames in `[0, 1]`.
///
/// Implementations must be symmetric and return 1 for identical inputs.
pub trait SimilarityProvider: Send + Sync {
    /// Similarity computed from frame content.
    fn similarity(&self, a: &Frame, b: &Frame) -> Result<f64>;

    /// Similarity between two frames of the source video, identified by index.
    ///
    /// Providers backed by precomputed per-frame embeddings override this;
    /// the default scores content.
    fn indexed_similarity(&self, ia: usize, a: &Frame, ib: usize, b: &Frame) -> Result<f64> {
        let _ = (ia, ib);
        self.similarity(a, b)
    }
}

/// Default content descriptor: mean-pooled grayscale grid concatenated with
/// per-channel intensity histograms, unit-normalized and compared by cosine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSimilarity {
    pub pooled_grid: u32,
    pub histogram_bins: u32,
}

impl Default for HistogramSimilarity {
    fn default() -> Self {
        Self {
            pooled_grid: 8,
            histogram_bins: 32,
        }
    }
}

impl HistogramSimilarity {
    /// Unit-norm descriptor of one frame.
    pub fn descriptor(&self, frame: &Frame) -> Vec<f64> {
        let g = self.pooled_grid.max(1);
        let bins = self.histogram_bins.max(1);
        let (w, h) = (frame.width, frame.height);
        let mut v = Vec::with_capacity((g * g + bins * frame.channels as u32) as usize);

        for gy in 0..g {
            let y0 = gy * h / g;
            let y1 = ((gy + 1) * h / g).max(y0 + 1).min(h);
            for gx in 0..g {
                let x0 = gx * w / g;
                let x1 = ((gx + 1) * w / g).max(x0 + 1).min(w);
                let mut sum = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        sum += frame.luma(x, y);
                    }
                }
                let n = ((y1 - y0) * (x1 - x0)) as f64;
                v.push(sum / n / 255.0);
            }
        }

        let pixels = (w as usize * h as usize) as f64;
        for c in 0..frame.channels {
            let mut hist = vec![0u64; bins as usize];
            for px in frame.data.chunks_exact(frame.channels as usize) {
                let b = px[c as usize] as usize * bins as usize / 256;
                hist[b] += 1;
            }
            v.extend(hist.iter().map(|&n| n as f64 / pixels));
        }

        normalize(&mut v);
        v
    }
}

impl SimilarityProvider for HistogramSimilarity {
    fn similarity(&self, a: &Frame, b: &Frame) -> Result<f64> {
        check_same_shape(a, b)?;
        if a == b {
            return Ok(1.0);
        }
        Ok(cosine(&self.descriptor(a), &self.descriptor(b)).clamp(0.0, 1.0))
    }
}

/// Cosine similarity over externally supplied per-frame embeddings.
///
/// Content that has no embedding (for example an occluded frame) falls back
/// to the histogram descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSimilarity {
    embeddings: Vec<Vec<f64>>,
    fallback: HistogramSimilarity,
}

impl EmbeddingSimilarity {
    pub fn new(mut embeddings: Vec<Vec<f64>>) -> Result<Self> {
        let dim = embeddings.first().map(Vec::len).unwrap_or(0);
        if dim == 0 {
            return Err(Error::invalid("embedding file is empty"));
        }
        for (i, e) in embeddings.iter_mut().enumerate() {
            if e.len() != dim {
                return Err(Error::invalid(format!(
                    "embedding {i} has dimension {}, expected {dim}",
                    e.len()
                )));
            }
            if e.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("embedding {i} has non-finite values")));
            }
            normalize(e);
        }
        Ok(Self {
            embeddings,
            fallback: HistogramSimilarity::default(),
        })
    }

    /// Parses one whitespace-separated vector per line; blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .enumerate()
                .map(|(col, tok)| {
                    tok.parse::<f64>().map_err(|e| Error::Parse {
                        line: Some(lineno + 1),
                        column: None,
                        field: format!("value {}", col + 1),
                        message: e.to_string(),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::new(rows)
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }
}

impl SimilarityProvider for EmbeddingSimilarity {
    fn similarity(&self, a: &Frame, b: &Frame) -> Result<f64> {
        self.fallback.similarity(a, b)
    }

    fn indexed_similarity(&self, ia: usize, a: &Frame, ib: usize, b: &Frame) -> Result<f64> {
        check_same_shape(a, b)?;
        let (ea, eb) = match (self.embeddings.get(ia), self.embeddings.get(ib)) {
            (Some(ea), Some(eb)) => (ea, eb),
            _ => {
                return Err(Error::invalid(format!(
                    "no embedding for frame {} (have {})",
                    ia.max(ib),
                    self.embeddings.len()
                )))
            }
        };
        if ia == ib {
            return Ok(1.0);
        }
        Ok(cosine(ea, eb).clamp(0.0, 1.0))
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return if na == nb { 1.0 } else { 0.0 };
    }
    dot / (na * nb)
}

fn check_same_shape(a: &Frame, b: &Frame) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "frame shapes differ: {}x{}x{} vs {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )))
    }
}

/// Similarity of two frames under `provider`, in `[0, 1]`.
pub fn frame_similarity(provider: &dyn SimilarityProvider, a: &Frame, b: &Frame) -> Result<f64> {
    check_same_shape(a, b)?;
    provider.similarity(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    /// Adjacent frames scoring below this are a scene cut.
    pub cut_threshold: f64,
    pub max_clip_len: usize,
    /// Length of the provisional segments searched for keyframes.
    pub target_clip_len: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            cut_threshold: 0.5,
            max_clip_len: MAX_CLIP_FRAMES,
            target_clip_len: 16,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.cut_threshold) {
            return Err(Error::invalid("cut_threshold must be in [0, 1]"));
        }
        if !(2 <= self.target_clip_len
            && self.target_clip_len <= self.max_clip_len
            && self.max_clip_len <= MAX_CLIP_FRAMES)
        {
            return Err(Error::invalid(format!(
                "need 2 <= target_clip_len ({}) <= max_clip_len ({}) <= {MAX_CLIP_FRAMES}",
                self.target_clip_len, self.max_clip_len
            )));
        }
        Ok(())
    }
}

/// Provisional segments: cut-free runs chopped into consecutive chunks of
/// `target_clip_len` frames. Returned as inclusive `(start, end)` pairs.
pub fn provisional_segments(n: usize, cut_after: &[bool], target_clip_len: usize) -> Vec<(usize, usize)> {
    let mut segments = Vec::new();
    let mut run_start = 0;
    for i in 0..n {
        let run_ends = i + 1 == n || cut_after[i];
        if run_ends {
            let mut s = run_start;
            while s <= i {
                let e = (s + target_clip_len - 1).min(i);
                segments.push((s, e));
                s = e + 1;
            }
            run_start = i + 1;
        }
    }
    segments
}

/// Picks keyframe indices for a video.
///
/// The output always holds the first and last frame, both frames of every
/// adjacent pair scoring below `cut_threshold`, and for each provisional
/// segment of at least three frames the interior frame whose mean similarity
/// to the rest of the segment is smallest (ties go to the lowest index).
pub fn select_keyframes(
    video: &[Frame],
    provider: &dyn SimilarityProvider,
    cfg: &SegmentationConfig,
) -> Result<Vec<usize>> {
    cfg.validate()?;
    let n = video.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "keyframe selection needs at least 2 frames, got {n}"
        )));
    }
    if video.iter().any(|f| !f.same_shape(&video[0])) {
        return Err(Error::invalid("all frames of a video must share dimensions"));
    }

    let adjacent = par::try_map_range(n - 1, |i| {
        provider.indexed_similarity(i, &video[i], i + 1, &video[i + 1])
    })?;
    let mut cut_after: Vec<bool> = adjacent.iter().map(|&s| s < cfg.cut_threshold).collect();
    cut_after.push(false);

    let mut keep = vec![false; n];
    keep[0] = true;
    keep[n - 1] = true;
    for i in 0..n - 1 {
        if cut_after[i] {
            keep[i] = true;
            keep[i + 1] = true;
        }
    }

    let segments = provisional_segments(n, &cut_after, cfg.target_clip_len);
    let marks = par::try_map(&segments, |&(s, e)| least_similar_interior(video, provider, s, e))?;
    for m in marks.into_iter().flatten() {
        keep[m] = true;
    }

    Ok((0..n).filter(|&i| keep[i]).collect())
}

fn least_similar_interior(
    video: &[Frame],
    provider: &dyn SimilarityProvider,
    start: usize,
    end: usize,
) -> Result<Option<usize>> {
    if end < start + 2 {
        return Ok(None);
    }
    let len = end - start + 1;
    // Symmetric pairwise matrix over the segment.
    let mut sim = vec![0.0; len * len];
    for a in 0..len {
        sim[a * len + a] = 1.0;
        for b in a + 1..len {
            let s = provider.indexed_similarity(start + a, &video[start + a], start + b, &video[start + b])?;
            sim[a * len + b] = s;
            sim[b * len + a] = s;
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for a in 1..len - 1 {
        let mean = (0..len).filter(|&b| b != a).map(|b| sim[a * len + b]).sum::<f64>() / (len - 1) as f64;
        if best.is_none_or(|(_, m)| mean < m) {
            best = Some((a, mean));
        }
    }
    Ok(best.map(|(a, _)| start + a))
}

/// Adds evenly spaced keyframes so that no clip exceeds `max_clip_len` frames.
pub fn insert_span_keyframes(indices: &[usize], max_clip_len: usize) -> Vec<usize> {
    let max_clip_len = max_clip_len.max(2);
    let mut out = Vec::with_capacity(indices.len());
    for w in indices.windows(2) {
        let (a, b) = (w[0], w[1]);
        out.push(a);
        let len = b - a + 1;
        if len > max_clip_len {
            let pieces = (b - a).div_ceil(max_clip_len - 1);
            for p in 1..pieces {
                out.push(a + p * (b - a) / pieces);
            }
        }
    }
    if let Some(&last) = indices.last() {
        out.push(last);
    }
    out
}

/// Cuts a video into clips spanning consecutive keyframes, boundaries inclusive.
pub fn segment_into_clips(video: &[Frame], keyframes: &[usize], max_clip_len: usize) -> Result<Vec<Clip>> {
    if video.len() < 2 {
        return Err(Error::invalid("video needs at least 2 frames"));
    }
    if keyframes.first() != Some(&0) || keyframes.last() != Some(&(video.len() - 1)) {
        return Err(Error::invalid("keyframes must include the first and last frame"));
    }
    if keyframes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("keyframe indices must be strictly increasing"));
    }
    let max = max_clip_len.min(MAX_CLIP_FRAMES);
    keyframes
        .windows(2)
        .map(|w| {
            let (start, end) = (w[0], w[1]);
            let len = end - start + 1;
            if len > max {
                return Err(Error::SpanTooLong { start, end, len, max });
            }
            Clip::new(video[start..=end].to_vec())
        })
        .collect()
}

/// Reads a headerless raw video: consecutive `height x width x channels` 8-bit frames.
pub fn read_raw_video(path: &Path, width: u32, height: u32, channels: u8) -> Result<Vec<Frame>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_raw_video(&bytes, width, height, channels)
}

pub fn parse_raw_video(bytes: &[u8], width: u32, height: u32, channels: u8) -> Result<Vec<Frame>> {
    let frame_len = width as usize * height as usize * channels as usize;
    if frame_len == 0 {
        return Err(Error::invalid("frame dimensions must be positive"));
    }
    if !bytes.len().is_multiple_of(frame_len) {
        return Err(Error::invalid(format!(
            "input is {} bytes, not a multiple of the {frame_len}-byte frame size",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(frame_len)
        .map(|chunk| Frame::new(width, height, channels, chunk.to_vec()))
        .collect()
}
