//! Next-vertex predictors behind a single interface.

mod external;
mod oracle;
mod walker;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bev::BevGrid;
use crate::raster::Raster;
use crate::Point;

pub use external::{protocol, ExternalConfig, ExternalPredictor, PROTOCOL_VERSION};
pub use oracle::{label_next, label_next_with_heading, DegradedOracle, LabelConfig, OraclePredictor};
pub use walker::{walker_directions, walker_predict, WalkerConfig, WalkerPredictor};

/// Square multi-channel crop around the agent's current vertex. Channels
/// are the fused BEV channels followed by the history map.
#[derive(Debug, Clone, PartialEq)]
pub struct Roi {
    pub channels: usize,
    pub size: usize,
    /// Row-major `channels x size x size`.
    pub data: Vec<f32>,
    /// Grid pixel (x = col, y = row) at ROI index `(size/2, size/2)`.
    pub center: Point,
}

impl Roi {
    pub fn zeros(channels: usize, size: usize, center: Point) -> Self {
        Self { channels, size, data: vec![0.0; channels * size * size], center }
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> f32 {
        self.data[(c * self.size + row) * self.size + col]
    }

    pub fn set(&mut self, c: usize, row: usize, col: usize, v: f32) {
        self.data[(c * self.size + row) * self.size + col] = v;
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.size * self.size;
        &self.data[c * n..(c + 1) * n]
    }

    /// Bilinear sample of channel `c` at ROI pixel coordinates; 0 outside.
    pub fn sample(&self, c: usize, row: f64, col: f64) -> f32 {
        let s = self.size as f64 - 1.0;
        if !(row >= 0.0 && col >= 0.0 && row <= s && col <= s) {
            return 0.0;
        }
        let r0 = (row.floor() as usize).min(self.size - 2);
        let c0 = (col.floor() as usize).min(self.size - 2);
        let (fr, fc) = (row - r0 as f64, col - c0 as f64);
        let v = |r, cc| self.get(c, r, cc) as f64;
        let top = v(r0, c0) + (v(r0, c0 + 1) - v(r0, c0)) * fc;
        let bot = v(r0 + 1, c0) + (v(r0 + 1, c0 + 1) - v(r0 + 1, c0)) * fc;
        (top + (bot - top) * fr) as f32
    }

    /// Half extent of ROI-relative coordinates.
    pub fn half(&self) -> f64 {
        (self.size / 2) as f64
    }
}

/// Predicted vertex relative to the ROI centre, in pixels
/// (x along columns, y along rows).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiVertex {
    pub x: f64,
    pub y: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictorOutput {
    pub vertices: Vec<RoiVertex>,
}

impl PredictorOutput {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Checks probabilities, ROI bounds and the vertex cap.
    pub fn validate(&self, half: f64, max_vertices: usize) -> Result<(), PredictError> {
        if self.vertices.len() > max_vertices {
            return Err(PredictError::Invalid(format!("{} vertices exceed the cap of {max_vertices}", self.vertices.len())));
        }
        for v in &self.vertices {
            if !v.p.is_finite() || !(0.0..=1.0).contains(&v.p) {
                return Err(PredictError::Invalid(format!("probability {} outside [0,1]", v.p)));
            }
            if !v.x.is_finite() || !v.y.is_finite() || v.x.abs() > half || v.y.abs() > half {
                return Err(PredictError::Invalid(format!("vertex ({}, {}) outside the ROI", v.x, v.y)));
            }
        }
        Ok(())
    }

    /// Vertices with probability at least `theta`.
    pub fn valid(&self, theta: f64) -> Vec<RoiVertex> {
        self.vertices.iter().copied().filter(|v| v.p >= theta).collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("predictor timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("malformed predictor response: {0}")]
    Malformed(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid predictor output: {0}")]
    Invalid(String),
    #[error("predictor unavailable: {0}")]
    Unavailable(String),
}

impl PredictError {
    /// Errors raised by the wire protocol rather than by the caller.
    pub fn is_protocol(&self) -> bool {
        !matches!(self, PredictError::Invalid(_))
    }
}

/// Everything a predictor may look at for one step.
pub struct StepContext<'a> {
    pub roi: &'a Roi,
    /// Current vertex in grid pixel coordinates.
    pub v_t: Point,
    /// Direction of the last move in pixels, if the instance has one.
    pub heading: Option<Point>,
    /// Fused grid of the current frame.
    pub fused: &'a BevGrid,
    /// Full-grid history map.
    pub history: &'a Raster,
    pub frame: usize,
    pub step: u64,
    pub theta_v: f64,
    pub max_vertices: usize,
}

pub trait Predictor {
    fn predict(&mut self, ctx: &StepContext<'_>) -> Result<PredictorOutput, PredictError>;
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn predict(&mut self, ctx: &StepContext<'_>) -> Result<PredictorOutput, PredictError> {
        (**self).predict(ctx)
    }
}

/// Clamps an offset to the ROI square along the ray from its centre.
pub fn clamp_to_roi(d: Point, half: f64) -> Point {
    let m = d.x.abs().max(d.y.abs());
    if m <= half {
        d
    } else {
        d * (half / m)
    }
}
