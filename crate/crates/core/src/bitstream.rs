//! Lossless byte format for sparse trajectory sets, and bit-rate accounting.
//!
//! Layout (all multi-byte integers little-endian):
//!
//! ```text
//! "TGVC" | version u8 = 1 | L u16 | latent_w u16 | latent_h u16 | n_instances u16
//! per instance:   K u16
//!   per trajectory: varint x0, varint y0
//!                   visibility, ceil(L/8) bytes, frame t at bit t%8 of byte t/8
//!                   L-1 pairs of zigzag varint (dx, dy)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{CellPoint, SparseInstance, SparseTrajectory, SparseTrajectorySet};

pub const MAGIC: &[u8; 4] = b"TGVC";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 13;

/// Encoded bytes of one clip's motion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrajectoryBitstream {
    pub bytes: Vec<u8>,
}

impl TrajectoryBitstream {
    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

#[inline]
pub fn zigzag(n: i32) -> u32 {
    ((n << 1) ^ (n >> 31)) as u32
}

#[inline]
pub fn unzigzag(z: u32) -> i32 {
    ((z >> 1) as i32) ^ -((z & 1) as i32)
}

pub fn write_varint(out: &mut Vec<u8>, mut v: u32) {
    while v >= 0x80 {
        out.push((v as u8 & 0x7F) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

pub fn encode(set: &SparseTrajectorySet) -> Result<TrajectoryBitstream> {
    let l = set.frames as usize;
    if l == 0 {
        return Err(Error::invalid("a trajectory set needs at least one frame"));
    }
    set.validate()?;
    let n_instances = u16::try_from(set.instances.len())
        .map_err(|_| Error::EncodeRange(format!("{} instances do not fit in u16", set.instances.len())))?;

    let mut out = Vec::with_capacity(HEADER_LEN + set.trajectory_count() * (4 + l.div_ceil(8) + 2 * l));
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    for v in [set.frames, set.latent_w, set.latent_h, n_instances] {
        out.extend_from_slice(&v.to_le_bytes());
    }

    for (i, inst) in set.instances.iter().enumerate() {
        let k = u16::try_from(inst.trajectories.len())
            .map_err(|_| Error::EncodeRange(format!("instance {i} has {} trajectories", inst.trajectories.len())))?;
        out.extend_from_slice(&k.to_le_bytes());
        for t in &inst.trajectories {
            write_varint(&mut out, t.points[0].x as u32);
            write_varint(&mut out, t.points[0].y as u32);
            let mut vis = vec![0u8; l.div_ceil(8)];
            for (f, _) in t.visible.iter().enumerate().filter(|(_, &v)| v) {
                vis[f / 8] |= 1 << (f % 8);
            }
            out.extend_from_slice(&vis);
            for w in t.points.windows(2) {
                write_varint(&mut out, zigzag(w[1].x as i32 - w[0].x as i32));
                write_varint(&mut out, zigzag(w[1].y as i32 - w[0].y as i32));
            }
        }
    }
    Ok(TrajectoryBitstream { bytes: out })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncation {
                offset: self.bytes.len(),
                what,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn varint(&mut self, what: &'static str) -> Result<u32> {
        let start = self.pos;
        let mut v: u64 = 0;
        for shift in (0..35).step_by(7) {
            let b = self.take(1, what)?[0];
            v |= ((b & 0x7F) as u64) << shift;
            if b & 0x80 == 0 {
                return u32::try_from(v).map_err(|_| self.corrupt(start, "varint overflows 32 bits"));
            }
        }
        Err(self.corrupt(start, "varint longer than 5 bytes"))
    }

    fn corrupt(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::CorruptStream {
            offset,
            message: message.into(),
        }
    }
}

pub fn decode(bytes: &[u8]) -> Result<SparseTrajectorySet> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:02x?}, expected \"TGVC\"")));
    }
    let version = r.take(1, "version")?[0];
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let frames = r.u16("frame count")?;
    let latent_w = r.u16("latent width")?;
    let latent_h = r.u16("latent height")?;
    let n_instances = r.u16("instance count")?;
    if frames == 0 {
        return Err(r.corrupt(5, "frame count is zero"));
    }
    let l = frames as usize;

    let mut instances = Vec::with_capacity(n_instances as usize);
    for _ in 0..n_instances {
        let k = r.u16("keypoint count")?;
        let mut trajectories = Vec::with_capacity(k as usize);
        for _ in 0..k {
            let start = r.pos;
            let x0 = r.varint("initial x")?;
            let y0 = r.varint("initial y")?;
            let check = |x: i64, y: i64, at: usize| {
                if x < 0 || y < 0 || x >= latent_w as i64 || y >= latent_h as i64 {
                    Err(Error::CorruptStream {
                        offset: at,
                        message: format!("coordinate ({x}, {y}) outside the {latent_w}x{latent_h} grid"),
                    })
                } else {
                    Ok(())
                }
            };
            check(x0 as i64, y0 as i64, start)?;

            let vis_at = r.pos;
            let vis_bytes = r.take(l.div_ceil(8), "visibility")?;
            let visible: Vec<bool> = (0..l).map(|f| vis_bytes[f / 8] >> (f % 8) & 1 == 1).collect();
            if !l.is_multiple_of(8) && vis_bytes[l / 8] >> (l % 8) != 0 {
                return Err(r.corrupt(vis_at + l / 8, "visibility padding bits are set"));
            }

            let mut points = Vec::with_capacity(l);
            let (mut x, mut y) = (x0 as i64, y0 as i64);
            points.push(CellPoint {
                x: x as u16,
                y: y as u16,
            });
            for _ in 1..l {
                let at = r.pos;
                x += unzigzag(r.varint("x delta")?) as i64;
                y += unzigzag(r.varint("y delta")?) as i64;
                check(x, y, at)?;
                points.push(CellPoint {
                    x: x as u16,
                    y: y as u16,
                });
            }
            trajectories.push(SparseTrajectory { points, visible });
        }
        instances.push(SparseInstance { trajectories });
    }
    if r.pos != bytes.len() {
        return Err(r.corrupt(r.pos, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(SparseTrajectorySet {
        frames,
        latent_w,
        latent_h,
        instances,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub motion_bits: u64,
    pub keyframe_bits: u64,
    pub bpp_with_motion: f64,
    pub bpp_without_motion: f64,
}

pub fn rate_report(stream_len: usize, width: u32, height: u32, frames: u64, keyframe_bits: u64) -> Result<RateReport> {
    if width == 0 || height == 0 || frames == 0 {
        return Err(Error::invalid("rate report needs positive dimensions"));
    }
    let motion_bits = 8 * stream_len as u64;
    let pixels = width as f64 * height as f64 * frames as f64;
    Ok(RateReport {
        motion_bits,
        keyframe_bits,
        bpp_with_motion: (motion_bits + keyframe_bits) as f64 / pixels,
        bpp_without_motion: keyframe_bits as f64 / pixels,
    })
}
