//! Temporal fusion: SE(2) warping of neighbouring BEV frames into the
//! current ego frame, windowed mask-weighted averaging, and accumulation
//! into a world-aligned raster.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bev::BevGrid;
use crate::raster::Raster;
use crate::{Point, Pose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("no frames to fuse")]
    Empty,
    #[error("frame index {index} out of range for {len} frames")]
    Index { index: usize, len: usize },
    #[error("frame {0} has a different grid or channel layout")]
    Layout(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowMode {
    /// Frames T-τ ..= T+τ.
    Centered,
    /// Frames T-τ ..= T.
    Causal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub tau: usize,
    pub window: WindowMode,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { tau: 1, window: WindowMode::Centered }
    }
}

impl FusionConfig {
    pub fn window_range(&self, t: usize, len: usize) -> std::ops::RangeInclusive<usize> {
        let lo = t.saturating_sub(self.tau);
        let hi = match self.window {
            WindowMode::Centered => (t + self.tau).min(len - 1),
            WindowMode::Causal => t,
        };
        lo..=hi
    }
}

/// Channels of a frame resampled into another ego frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Warped {
    /// Same order as `BevGrid::channels`.
    pub channels: Vec<Raster>,
    /// 1 where the sample location lies inside the source grid.
    pub mask: Raster,
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

/// Affine map from destination pixel (col, row) to source pixel (col, row).
struct PxMap {
    m: [[f64; 2]; 2],
    b: Point,
}

impl PxMap {
    fn new(src: &BevGrid, dst_pose: &Pose) -> Self {
        let spec = &src.spec;
        let o = spec.world_to_px(&src.pose, spec.px_to_world(dst_pose, Point::new(0.0, 0.0)));
        // pixel axes follow ego axes, so the linear part is the relative yaw
        let dyaw = dst_pose.yaw - src.pose.yaw;
        let (s, c) = dyaw.sin_cos();
        Self { m: [[c, -s], [s, c]], b: o }
    }

    fn apply(&self, col: f64, row: f64) -> (f64, f64) {
        let x = self.m[0][0] * col + self.m[0][1] * row + self.b.x;
        let y = self.m[1][0] * col + self.m[1][1] * row + self.b.y;
        (snap(y), snap(x))
    }
}

/// Resamples every channel of `src` into the ego frame of `dst_pose` with
/// bilinear interpolation. Invalid destination pixels are 0 in every
/// channel and in the mask.
pub fn warp_grid(src: &BevGrid, dst_pose: &Pose) -> Warped {
    let (h, w) = (src.spec.height, src.spec.width);
    let map = PxMap::new(src, dst_pose);
    let srcs: Vec<&Raster> = src.channels().collect();
    let mut channels = vec![Raster::zeros(h, w); srcs.len()];
    let mut mask = Raster::zeros(h, w);
    for row in 0..h {
        for col in 0..w {
            let (sr, sc) = map.apply(col as f64, row as f64);
            if !src.spec.contains_px(sr, sc) {
                continue;
            }
            mask.set(row, col, 1.0);
            for (out, s) in channels.iter_mut().zip(&srcs) {
                out.set(row, col, s.bilinear(sr, sc).unwrap_or(0.0));
            }
        }
    }
    Warped { channels, mask }
}

fn check_layout(frames: &[BevGrid]) -> Result<(), FusionError> {
    let first = frames.first().ok_or(FusionError::Empty)?;
    for (i, f) in frames.iter().enumerate() {
        if f.spec != first.spec || f.features.len() != first.features.len() {
            return Err(FusionError::Layout(i));
        }
    }
    Ok(())
}

/// Mask-weighted mean of the frames in the window around `t`, expressed in
/// frame `t`'s ego coordinates.
pub fn fuse_window(frames: &[BevGrid], t: usize, cfg: &FusionConfig) -> Result<BevGrid, FusionError> {
    check_layout(frames)?;
    if t >= frames.len() {
        return Err(FusionError::Index { index: t, len: frames.len() });
    }
    let target = &frames[t];
    let range = cfg.window_range(t, frames.len());
    if range.clone().count() == 1 {
        return Ok(target.clone());
    }
    let (h, w) = (target.spec.height, target.spec.width);
    let nc = target.channel_count();
    let mut sums = vec![vec![0f64; h * w]; nc];
    let mut counts = vec![0u32; h * w];
    for k in range {
        if k == t {
            for (sum, ch) in sums.iter_mut().zip(target.channels()) {
                for (s, &v) in sum.iter_mut().zip(ch.data()) {
                    *s += v as f64;
                }
            }
            counts.iter_mut().for_each(|c| *c += 1);
            continue;
        }
        let wp = warp_grid(&frames[k], &target.pose);
        for (i, &m) in wp.mask.data().iter().enumerate() {
            if m > 0.0 {
                counts[i] += 1;
                for (sum, ch) in sums.iter_mut().zip(&wp.channels) {
                    sum[i] += ch.data()[i] as f64;
                }
            }
        }
    }
    let channels = sums
        .into_iter()
        .map(|sum| {
            let data = sum.iter().zip(&counts).map(|(&s, &c)| if c == 0 { 0.0 } else { (s / c as f64) as f32 }).collect();
            Raster::from_vec(h, w, data)
        })
        .collect();
    Ok(BevGrid::from_channels(target.spec, target.pose, channels))
}

/// Axis-aligned world raster: cell (row, col) is centred on
/// `(x0 + col * resolution, y0 + row * resolution)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub x0: f64,
    pub y0: f64,
    pub resolution: f64,
    pub height: usize,
    pub width: usize,
}

impl WorldSpec {
    /// Smallest raster covering the footprints of all frames plus `margin`
    /// meters.
    pub fn covering(frames: &[BevGrid], margin: f64) -> Option<Self> {
        let first = frames.first()?;
        let res = first.spec.resolution;
        let (mut lo, mut hi) = (Point::new(f64::INFINITY, f64::INFINITY), Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for f in frames {
            for c in footprint_corners(f) {
                lo = Point::new(lo.x.min(c.x), lo.y.min(c.y));
                hi = Point::new(hi.x.max(c.x), hi.y.max(c.y));
            }
        }
        let x0 = ((lo.x - margin) / res).floor() * res;
        let y0 = ((lo.y - margin) / res).floor() * res;
        let width = ((hi.x + margin - x0) / res).ceil() as usize + 1;
        let height = ((hi.y + margin - y0) / res).ceil() as usize + 1;
        Some(Self { x0, y0, resolution: res, height, width })
    }

    pub fn world_to_px(&self, p: Point) -> Point {
        Point::new((p.x - self.x0) / self.resolution, (p.y - self.y0) / self.resolution)
    }

    pub fn px_to_world(&self, p: Point) -> Point {
        Point::new(self.x0 + p.x * self.resolution, self.y0 + p.y * self.resolution)
    }
}

fn footprint_corners(f: &BevGrid) -> [Point; 4] {
    let (mr, mc) = (f.spec.max_row(), f.spec.max_col());
    [(0.0, 0.0), (0.0, mc), (mr, 0.0), (mr, mc)].map(|(r, c)| f.spec.px_to_world(&f.pose, Point::new(c, r)))
}

/// Mask-weighted mean of one channel of every frame, projected into a
/// world raster. Returns the mean and the per-cell contribution count.
pub fn accumulate_world(frames: &[BevGrid], world: &WorldSpec, channel: usize) -> (Raster, Raster) {
    let (h, w) = (world.height, world.width);
    let mut sum = vec![0f64; h * w];
    let mut count = vec![0u32; h * w];
    for f in frames {
        let Some(src) = f.channels().nth(channel) else { continue };
        let corners = footprint_corners(f).map(|c| world.world_to_px(c));
        let c0 = corners.iter().map(|p| p.x).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let c1 = corners.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max).ceil().min(w as f64 - 1.0);
        let r0 = corners.iter().map(|p| p.y).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let r1 = corners.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max).ceil().min(h as f64 - 1.0);
        if c1 < 0.0 || r1 < 0.0 {
            continue;
        }
        for row in r0..=r1 as usize {
            for col in c0..=c1 as usize {
                let p = world.px_to_world(Point::new(col as f64, row as f64));
                let q = f.spec.world_to_px(&f.pose, p);
                if let Some(v) = src.bilinear(snap(q.y), snap(q.x)) {
                    sum[row * w + col] += v as f64;
                    count[row * w + col] += 1;
                }
            }
        }
    }
    let mean = sum.iter().zip(&count).map(|(&s, &c)| if c == 0 { 0.0 } else { (s / c as f64) as f32 }).collect();
    let count = count.iter().map(|&c| c as f32).collect();
    (Raster::from_vec(h, w, mean), Raster::from_vec(h, w, count))
}
