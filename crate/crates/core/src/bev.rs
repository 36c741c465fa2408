use crate::raster::Raster;
use crate::{GridSpec64, Pose};

/// One BEV frame: centerline heatmap, initial-vertex heatmap and the
/// feature channels handed to the tracing agent.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub spec: GridSpec64,
    pub pose: Pose,
    pub hl: Raster,
    pub hi: Raster,
    pub features: Vec<Raster>,
}

impl BevGrid {
    pub fn empty(spec: GridSpec64, pose: Pose, feature_channels: usize) -> Self {
        let z = Raster::zeros(spec.height, spec.width);
        Self { spec, pose, hl: z.clone(), hi: z.clone(), features: vec![z; feature_channels] }
    }

    /// All rasters in a fixed order: hl, hi, then features.
    pub fn channels(&self) -> impl Iterator<Item = &Raster> {
        [&self.hl, &self.hi].into_iter().chain(self.features.iter())
    }

    pub fn channel_count(&self) -> usize {
        2 + self.features.len()
    }

    pub fn from_channels(spec: GridSpec64, pose: Pose, mut channels: Vec<Raster>) -> Self {
        assert!(channels.len() >= 2, "need at least hl and hi channels");
        let features = channels.split_off(2);
        let hi = channels.pop().expect("hi");
        let hl = channels.pop().expect("hl");
        Self { spec, pose, hl, hi, features }
    }

    /// Checks shared dimensions, finiteness and the [0,1] heatmap range.
    pub fn validate(&self) -> Result<(), String> {
        let dims = (self.spec.height, self.spec.width);
        for (i, r) in self.channels().enumerate() {
            if r.dims() != dims {
                return Err(format!("channel {i} is {:?}, grid is {:?}", r.dims(), dims));
            }
            if !r.all_finite() {
                return Err(format!("channel {i} has non-finite values"));
            }
        }
        for (name, r) in [("hl", &self.hl), ("hi", &self.hi)] {
            if r.min_value() < 0.0 || r.max_value() > 1.0 {
                return Err(format!("{name} outside [0,1]"));
            }
        }
        Ok(())
    }
}
