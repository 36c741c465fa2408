//! Iterative lane-centerline graph extraction from sequential BEV heatmaps.
//!
//! The geometry core is generic over the scalar type; the pipeline stages
//! (simulation, fusion, tracing, sampling) work on the `f64` aliases below
//! with `f32` rasters.

pub mod agent;
pub mod baseline;
pub mod bev;
pub mod expert;
pub mod fsutil;
pub mod fusion;
pub mod geom;
pub mod metrics;
pub mod predict;
pub mod raster;
pub mod scalar;
pub mod scene_io;
pub mod sim;

pub use scalar::Scalar;

pub type Point = geom::Point2<f64>;
pub type Pose = geom::EgoPose<f64>;
pub type Graph = geom::CenterlineGraph<f64>;
pub type GridSpec64 = geom::GridSpec<f64>;
