//! Grid-initialized bidirectional point tracking.
//!
//! The built-in tracker is integer block matching: each point carries a
//! sub-pixel position, but moves by whole-pixel displacements that minimize
//! the mean absolute difference between a block around its last confident
//! position and the candidate block in the next frame. External tracks enter
//! through the JSON interchange format ([`import_tracks`] / [`export_tracks`]).

use std::fmt::Write as _;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::video::{Clip, Frame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    /// A track found on the time-reversed clip and flipped back into clip time.
    BackwardFlipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<Point>,
    pub visible: Vec<bool>,
    /// Grid (row, col) the track started from.
    pub origin: (u32, u32),
    pub direction: Direction,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|&&v| v).count()
    }

    /// Reverses temporal order and tags the result as a flipped backward track.
    pub fn flipped(&self) -> Trajectory {
        let mut points = self.points.clone();
        let mut visible = self.visible.clone();
        points.reverse();
        visible.reverse();
        Trajectory {
            points,
            visible,
            origin: self.origin,
            direction: Direction::BackwardFlipped,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    /// Frame count `L` shared by every trajectory.
    pub frames: u16,
    pub grid_size: u32,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn empty(frames: u16, grid_size: u32) -> Self {
        Self {
            frames,
            grid_size,
            trajectories: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub grid_size: u32,
    pub block_radius: u32,
    pub search_radius: u32,
    /// Mean absolute difference per sample above which a match is treated as
    /// an occlusion.
    pub visibility_threshold: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            grid_size: 64,
            block_radius: 3,
            search_radius: 4,
            visibility_threshold: 20.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(Error::invalid("grid_size must be at least 2"));
        }
        if self.search_radius < 1 {
            return Err(Error::invalid("search_radius must be at least 1"));
        }
        if !(self.visibility_threshold >= 0.0) {
            return Err(Error::invalid("visibility_threshold must be non-negative"));
        }
        Ok(())
    }
}

/// Size of one grid cell in pixels, used as the agreement radius when fusing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSize {
    pub w: f64,
    pub h: f64,
}

impl CellSize {
    pub fn for_grid(width: u32, height: u32, grid_size: u32) -> Self {
        Self {
            w: width as f64 / grid_size as f64,
            h: height as f64 / grid_size as f64,
        }
    }

    fn contains(&self, a: Point, b: Point) -> bool {
        (a.x - b.x).abs() <= self.w && (a.y - b.y).abs() <= self.h
    }
}

/// Equally spaced grid, inset by half a cell, in row-major order.
pub fn grid_points(width: u32, height: u32, grid_size: u32) -> Result<Vec<Point>> {
    if grid_size == 0 || grid_size > width.min(height) {
        return Err(Error::invalid(format!(
            "grid size {grid_size} must be in 1..={} for a {width}x{height} frame",
            width.min(height)
        )));
    }
    let sx = width as f64 / grid_size as f64;
    let sy = height as f64 / grid_size as f64;
    let mut pts = Vec::with_capacity((grid_size * grid_size) as usize);
    for row in 0..grid_size {
        for col in 0..grid_size {
            pts.push(Point::new((col as f64 + 0.5) * sx, (row as f64 + 0.5) * sy));
        }
    }
    Ok(pts)
}

/// Forward tracks from every grid vertex of frame 0.
pub fn track_forward(clip: &Clip, cfg: &TrackerConfig) -> Result<TrajectorySet> {
    cfg.validate()?;
    let starts = grid_points(clip.width(), clip.height(), cfg.grid_size)?;
    let g = cfg.grid_size;
    let trajectories = par::map_range(starts.len(), |i| {
        let (points, visible) = track_point(clip.frames(), starts[i], cfg);
        Trajectory {
            points,
            visible,
            origin: (i as u32 / g, i as u32 % g),
            direction: Direction::Forward,
        }
    });
    Ok(TrajectorySet {
        frames: clip.len(),
        grid_size: g,
        trajectories,
    })
}

/// Tracks from the grid of the last frame through the time-reversed clip.
///
/// The result is expressed in reversed time; it is identical to
/// `track_forward(&clip.reversed(), cfg)`.
pub fn track_backward(clip: &Clip, cfg: &TrackerConfig) -> Result<TrajectorySet> {
    track_forward(&clip.reversed(), cfg)
}

/// Tracks arbitrary start points (on frame 0) through `clip`.
pub fn track_from(clip: &Clip, starts: &[Point], cfg: &TrackerConfig) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    let (w, h) = (clip.width() as f64, clip.height() as f64);
    if starts
        .iter()
        .any(|p| !(0.0..w).contains(&p.x) || !(0.0..h).contains(&p.y))
    {
        return Err(Error::invalid("start point outside the frame"));
    }
    Ok(par::map(starts, |&p| {
        let (points, visible) = track_point(clip.frames(), p, cfg);
        Trajectory {
            points,
            visible,
            origin: (0, 0),
            direction: Direction::Forward,
        }
    }))
}

fn track_point(frames: &[Frame], start: Point, cfg: &TrackerConfig) -> (Vec<Point>, Vec<bool>) {
    let mut points = Vec::with_capacity(frames.len());
    let mut visible = Vec::with_capacity(frames.len());
    let mut pos = start;
    // Template source: last frame where the point was confidently matched.
    let mut anchor = (0usize, start);
    points.push(pos);
    visible.push(true);

    let r = cfg.search_radius as i64;
    for t in 1..frames.len() {
        let frame = &frames[t];
        let (cx, cy) = (pos.x.floor() as i64, pos.y.floor() as i64);
        let (ax, ay) = (anchor.1.x.floor() as i64, anchor.1.y.floor() as i64);
        let template = &frames[anchor.0];

        let mut best: Option<(f64, i64, i64, i64)> = None;
        for v in -r..=r {
            for u in -r..=r {
                let (nx, ny) = (cx + u, cy + v);
                if nx < 0 || ny < 0 || nx >= frame.width() as i64 || ny >= frame.height() as i64 {
                    continue;
                }
                let cost = block_cost(template, ax, ay, frame, nx, ny, cfg.block_radius as i64);
                let dist = u * u + v * v;
                let better = match best {
                    None => true,
                    Some((bc, bd, _, _)) => cost < bc || (cost == bc && dist < bd),
                };
                if better {
                    best = Some((cost, dist, u, v));
                }
            }
        }

        match best {
            Some((cost, _, u, v)) if cost <= cfg.visibility_threshold => {
                pos = Point::new(pos.x + u as f64, pos.y + v as f64);
                anchor = (t, pos);
                visible.push(true);
            }
            _ => visible.push(false),
        }
        points.push(pos);
    }
    (points, visible)
}

/// Mean absolute difference between two square blocks; samples outside a
/// frame are clamped to its edge.
fn block_cost(a: &Frame, ax: i64, ay: i64, b: &Frame, bx: i64, by: i64, radius: i64) -> f64 {
    let ch = a.channels();
    let mut sum = 0u64;
    for dy in -radius..=radius {
        let ya = clamp_coord(ay + dy, a.height());
        let yb = clamp_coord(by + dy, b.height());
        for dx in -radius..=radius {
            let xa = clamp_coord(ax + dx, a.width());
            let xb = clamp_coord(bx + dx, b.width());
            for c in 0..ch {
                sum += (a.sample(xa, ya, c) as i32 - b.sample(xb, yb, c) as i32).unsigned_abs() as u64;
            }
        }
    }
    let n = ((2 * radius + 1) * (2 * radius + 1)) as u64 * ch as u64;
    sum as f64 / n as f64
}

#[inline]
fn clamp_coord(v: i64, extent: u32) -> u32 {
    v.clamp(0, extent as i64 - 1) as u32
}

/// Union of forward tracks with flipped backward tracks.
///
/// A flipped backward track is dropped as a duplicate when some forward
/// track starts within one cell of it on frame 0 and, on every frame where
/// the backward track is visible, that forward track is also visible and
/// within one cell.
pub fn fuse_bidirectional(fwd: &TrajectorySet, bwd: &TrajectorySet, cell: CellSize) -> Result<TrajectorySet> {
    if fwd.frames != bwd.frames {
        return Err(Error::invalid(format!(
            "cannot fuse sets of {} and {} frames",
            fwd.frames, bwd.frames
        )));
    }
    let l = fwd.frames as usize;
    if fwd
        .trajectories
        .iter()
        .chain(&bwd.trajectories)
        .any(|t| t.points.len() != l || t.visible.len() != l)
    {
        return Err(Error::invalid("trajectory length does not match the set's frame count"));
    }

    let flipped: Vec<Trajectory> = bwd.trajectories.iter().map(Trajectory::flipped).collect();
    let keep = par::map(&flipped, |b| {
        !fwd.trajectories.iter().any(|f| is_covered_by(b, f, cell))
    });

    let mut trajectories = fwd.trajectories.clone();
    trajectories.extend(flipped.into_iter().zip(keep).filter(|(_, k)| *k).map(|(t, _)| t));
    Ok(TrajectorySet {
        frames: fwd.frames,
        grid_size: fwd.grid_size,
        trajectories,
    })
}

fn is_covered_by(b: &Trajectory, f: &Trajectory, cell: CellSize) -> bool {
    if !cell.contains(b.points[0], f.points[0]) {
        return false;
    }
    b.visible
        .iter()
        .enumerate()
        .filter(|(_, &v)| v)
        .all(|(t, _)| f.visible[t] && cell.contains(b.points[t], f.points[t]))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackDoc {
    #[serde(rename = "L")]
    frames: u16,
    grid_size: u32,
    tracks: Vec<TrackEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackEntry {
    origin: [u32; 2],
    xy: Vec<[f64; 2]>,
    vis: Vec<VisFlag>,
}

#[derive(Clone, Copy, Serialize)]
#[serde(transparent)]
struct VisFlag(u8);

impl<'de> Deserialize<'de> for VisFlag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = u64::deserialize(d)?;
        match v {
            0 | 1 => Ok(VisFlag(v as u8)),
            other => Err(serde::de::Error::custom(format!(
                "visibility must be 0 or 1, got {other}"
            ))),
        }
    }
}

/// Parses the track interchange format.
pub fn import_tracks(text: &str) -> Result<TrajectorySet> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: TrackDoc = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        Error::Parse {
            line: Some(inner.line()),
            column: Some(inner.column()),
            field,
            message: inner.to_string(),
        }
    })?;

    let l = doc.frames as usize;
    let semantic = |field: String, message: String| Error::Parse {
        line: None,
        column: None,
        field,
        message,
    };
    let mut trajectories = Vec::with_capacity(doc.tracks.len());
    for (i, t) in doc.tracks.into_iter().enumerate() {
        if t.xy.len() != l {
            return Err(semantic(
                format!("tracks[{i}].xy"),
                format!("expected {l} points, got {}", t.xy.len()),
            ));
        }
        if t.vis.len() != l {
            return Err(semantic(
                format!("tracks[{i}].vis"),
                format!("expected {l} flags, got {}", t.vis.len()),
            ));
        }
        trajectories.push(Trajectory {
            points: t.xy.iter().map(|p| Point::new(p[0], p[1])).collect(),
            visible: t.vis.iter().map(|v| v.0 == 1).collect(),
            origin: (t.origin[0], t.origin[1]),
            direction: Direction::Forward,
        });
    }
    Ok(TrajectorySet {
        frames: doc.frames,
        grid_size: doc.grid_size,
        trajectories,
    })
}

/// Writes the canonical interchange form: header fields, then one track per line.
pub fn export_tracks(set: &TrajectorySet) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{{");
    let _ = writeln!(out, "\"L\": {},", set.frames);
    let _ = writeln!(out, "\"grid_size\": {},", set.grid_size);
    let _ = writeln!(out, "\"tracks\": [");
    let n = set.trajectories.len();
    for (i, t) in set.trajectories.iter().enumerate() {
        let entry = TrackEntry {
            origin: [t.origin.0, t.origin.1],
            xy: t.points.iter().map(|p| [p.x, p.y]).collect(),
            vis: t.visible.iter().map(|&v| VisFlag(v as u8)).collect(),
        };
        let json = serde_json::to_string(&entry).expect("track entries serialize");
        let _ = writeln!(out, "{json}{}", if i + 1 < n { "," } else { "" });
    }
    let _ = writeln!(out, "]");
    let _ = writeln!(out, "}}");
    out
}
