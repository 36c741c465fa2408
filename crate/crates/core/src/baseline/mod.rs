//! Segmentation-style comparison pipeline: threshold, thin, vectorize.

mod skeleton;

use serde::{Deserialize, Serialize};

use crate::bev::BevGrid;
use crate::fusion::{accumulate_world, WorldSpec};
use crate::raster::Raster;
use crate::Graph;

pub use skeleton::{crossing_number, skeleton_to_graph, skeletonize, trace_skeleton, SkeletonPath};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VectorizeConfig {
    /// Binarization threshold on the heatmap.
    pub threshold: f64,
    /// Components with fewer pixels are dropped.
    pub min_component_px: usize,
    /// Endpoint-to-junction branches shorter than this are pruned, pixels.
    pub spur_prune_px: f64,
    /// Douglas-Peucker tolerance, pixels.
    pub simplify_px: f64,
}

impl Default for VectorizeConfig {
    fn default() -> Self {
        Self { threshold: 0.3, min_component_px: 10, spur_prune_px: 5.0, simplify_px: 0.75 }
    }
}

impl VectorizeConfig {
    pub fn validate(&self) -> Result<(), (String, String)> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(("baseline.threshold".into(), "must be in (0, 1)".into()));
        }
        if !(self.spur_prune_px >= 0.0) {
            return Err(("baseline.spur_prune_px".into(), "must be >= 0".into()));
        }
        if !(self.simplify_px >= 0.0) {
            return Err(("baseline.simplify_px".into(), "must be >= 0".into()));
        }
        Ok(())
    }
}

/// Row-major binary image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

pub(crate) const OFFSETS8: [(i64, i64); 8] = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)];

impl Mask {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![false; height * width] }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn get_i(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width && self.get(row as usize, col as usize)
    }

    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.data[row * self.width + col] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// True where every set pixel of `self` is set in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub fn to_raster(&self) -> Raster {
        Raster::from_vec(self.height, self.width, self.data.iter().map(|&b| f32::from(u8::from(b))).collect())
    }

    /// 8-connected component labels (`usize::MAX` for background) and sizes.
    pub fn components(&self) -> (Vec<usize>, Vec<usize>) {
        let mut label = vec![usize::MAX; self.data.len()];
        let mut sizes = Vec::new();
        let mut stack = Vec::new();
        for start in 0..self.data.len() {
            if !self.data[start] || label[start] != usize::MAX {
                continue;
            }
            let id = sizes.len();
            let mut size = 0;
            label[start] = id;
            stack.push(start);
            while let Some(i) = stack.pop() {
                size += 1;
                let (r, c) = ((i / self.width) as i64, (i % self.width) as i64);
                for (dr, dc) in OFFSETS8 {
                    let (nr, nc) = (r + dr, c + dc);
                    if self.get_i(nr, nc) {
                        let j = nr as usize * self.width + nc as usize;
                        if label[j] == usize::MAX {
                            label[j] = id;
                            stack.push(j);
                        }
                    }
                }
            }
            sizes.push(size);
        }
        (label, sizes)
    }
}

/// `raster >= threshold`, then 8-connected components smaller than
/// `min_component_px` are cleared.
pub fn binarize(raster: &Raster, threshold: f64, min_component_px: usize) -> Mask {
    let mut m =
        Mask { height: raster.height(), width: raster.width(), data: raster.data().iter().map(|&v| v as f64 >= threshold).collect() };
    if min_component_px > 1 {
        let (label, sizes) = m.components();
        for (b, l) in m.data.iter_mut().zip(label) {
            if *b && sizes[l] < min_component_px {
                *b = false;
            }
        }
    }
    m
}

/// Vectorizes one raster; the graph is in its pixel frame (x = column,
/// y = row).
pub fn vectorize(raster: &Raster, cfg: &VectorizeConfig) -> Graph {
    let mask = binarize(raster, cfg.threshold, cfg.min_component_px);
    skeleton_to_graph(&skeletonize(&mask), cfg.spur_prune_px, cfg.simplify_px)
}

/// World graph from the centerline heatmaps of all frames: mask-weighted
/// world averaging, then per-raster vectorization.
pub fn baseline_pipeline(frames: &[BevGrid], cfg: &VectorizeConfig) -> Graph {
    let Some(world) = WorldSpec::covering(frames, 1.0) else {
        return Graph::new();
    };
    let (mean, _) = accumulate_world(frames, &world, 0);
    vectorize(&mean, cfg).map_points(|p| world.px_to_world(p))
}

/// Per-frame vectorization in world coordinates.
pub fn vectorize_frame(frame: &BevGrid, cfg: &VectorizeConfig) -> Graph {
    vectorize(&frame.hl, cfg).map_points(|p| frame.spec.px_to_world(&frame.pose, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_thresholds() {
        let zero = Raster::zeros(8, 8);
        assert_eq!(binarize(&zero, 0.3, 1).count(), 0);
        let one = Raster::filled(8, 8, 1.0);
        assert_eq!(binarize(&one, 0.3, 1).count(), 64);
    }

    #[test]
    fn small_blob_removed() {
        let mut r = Raster::zeros(10, 10);
        for c in 2..5 {
            r.set(4, c, 1.0);
        }
        assert_eq!(binarize(&r, 0.5, 5).count(), 0);
        assert_eq!(binarize(&r, 0.5, 3).count(), 3);
    }
}
