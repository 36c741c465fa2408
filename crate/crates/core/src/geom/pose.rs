use serde::{Deserialize, Serialize};

use super::point::Point2;
use crate::scalar::Scalar;

/// SE(2) pose of the ego vehicle in the world frame. The ego x-axis points
/// along the heading; yaw is kept in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EgoPose<T> {
    pub x: T,
    pub y: T,
    pub yaw: T,
}

pub fn normalize_angle<T: Scalar>(a: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut r = a % two_pi;
    if r <= -T::PI() {
        r = r + two_pi;
    } else if r > T::PI() {
        r = r - two_pi;
    }
    r
}

impl<T: Scalar> EgoPose<T> {
    pub fn new(x: T, y: T, yaw: T) -> Self {
        Self { x, y, yaw: normalize_angle(yaw) }
    }

    pub fn identity() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn position(&self) -> Point2<T> {
        Point2::new(self.x, self.y)
    }

    pub fn world_to_ego(&self, p: Point2<T>) -> Point2<T> {
        let (s, c) = self.yaw.sin_cos();
        let dx = p.x - self.x;
        let dy = p.y - self.y;
        Point2::new(c * dx + s * dy, c * dy - s * dx)
    }

    pub fn ego_to_world(&self, p: Point2<T>) -> Point2<T> {
        let (s, c) = self.yaw.sin_cos();
        Point2::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)
    }

    /// Rotates a direction vector from the ego frame into the world frame.
    pub fn rotate_to_world(&self, v: Point2<T>) -> Point2<T> {
        let (s, c) = self.yaw.sin_cos();
        Point2::new(c * v.x - s * v.y, s * v.x + c * v.y)
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = self.yaw.sin_cos();
        Self::new(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.yaw)
    }

    /// `self * other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        let p = self.ego_to_world(other.position());
        Self::new(p.x, p.y, self.yaw + other.yaw)
    }
}

/// Fractional pixel location. Integer coordinates are pixel centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord<T> {
    pub row: T,
    pub col: T,
    pub in_bounds: bool,
}

/// Geometry of an ego-centred BEV raster. The grid centre is the ego origin,
/// ego +x increases the column, ego +y increases the row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec<T> {
    pub height: usize,
    pub width: usize,
    pub resolution: T,
}

impl<T: Scalar> GridSpec<T> {
    pub fn new(height: usize, width: usize, resolution: T) -> Self {
        Self { height, width, resolution }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.resolution > T::zero()) || !self.resolution.is_finite() {
            return Err(format!("resolution must be > 0, got {}", self.resolution));
        }
        if self.height == 0 || self.width == 0 || self.height % 2 != 0 || self.width % 2 != 0 {
            return Err(format!("grid dimensions must be even and non-zero, got {}x{}", self.height, self.width));
        }
        Ok(())
    }

    pub fn center(&self) -> Point2<T> {
        Point2::new(T::c((self.width / 2) as f64), T::c((self.height / 2) as f64))
    }

    /// Largest valid row / column coordinate.
    pub fn max_row(&self) -> T {
        T::c(self.height as f64 - 1.0)
    }

    pub fn max_col(&self) -> T {
        T::c(self.width as f64 - 1.0)
    }

    pub fn contains_px(&self, row: T, col: T) -> bool {
        row >= T::zero() && col >= T::zero() && row <= self.max_row() && col <= self.max_col()
    }

    pub fn ego_to_pixel(&self, p: Point2<T>) -> PixelCoord<T> {
        let row = T::c((self.height / 2) as f64) + p.y / self.resolution;
        let col = T::c((self.width / 2) as f64) + p.x / self.resolution;
        PixelCoord { row, col, in_bounds: self.contains_px(row, col) }
    }

    pub fn pixel_to_ego(&self, row: T, col: T) -> Point2<T> {
        Point2::new((col - T::c((self.width / 2) as f64)) * self.resolution, (row - T::c((self.height / 2) as f64)) * self.resolution)
    }

    /// Ego point expressed as (x = col, y = row) pixel coordinates.
    pub fn ego_to_px_point(&self, p: Point2<T>) -> Point2<T> {
        let c = self.ego_to_pixel(p);
        Point2::new(c.col, c.row)
    }

    pub fn px_point_to_ego(&self, p: Point2<T>) -> Point2<T> {
        self.pixel_to_ego(p.y, p.x)
    }

    pub fn world_to_px(&self, pose: &EgoPose<T>, p: Point2<T>) -> Point2<T> {
        self.ego_to_px_point(pose.world_to_ego(p))
    }

    pub fn px_to_world(&self, pose: &EgoPose<T>, p: Point2<T>) -> Point2<T> {
        pose.ego_to_world(self.px_point_to_ego(p))
    }
}

impl Default for GridSpec<f64> {
    fn default() -> Self {
        Self::new(200, 200, 0.25)
    }
}
