//! Single-channel f32 rasters and Portable Float Map (PFM) I/O.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad PFM data: {0}")]
    Format(String),
}

/// Row-major `height x width` f32 raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Raster {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, v: f32) -> Self {
        Self { height, width, data: vec![v; height * width] }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), height * width, "raster data length");
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    /// Value at signed coordinates, 0 outside.
    #[inline]
    pub fn get_or_zero(&self, row: i64, col: i64) -> f32 {
        if row < 0 || col < 0 || row >= self.height as i64 || col >= self.width as i64 {
            0.0
        } else {
            self.data[row as usize * self.width + col as usize]
        }
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f32) {
        self.data[row * self.width + col] = v;
    }

    #[inline]
    pub fn max_at(&mut self, row: usize, col: usize, v: f32) {
        let c = &mut self.data[row * self.width + col];
        if v > *c {
            *c = v;
        }
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn min_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bilinear sample at fractional (row, col). Returns `None` unless the
    /// location lies inside the closed pixel-centre hull, i.e. every
    /// neighbour with non-zero weight exists.
    pub fn bilinear(&self, row: f64, col: f64) -> Option<f32> {
        let (h, w) = (self.height as f64, self.width as f64);
        if !(row >= 0.0 && col >= 0.0 && row <= h - 1.0 && col <= w - 1.0) {
            return None;
        }
        let r0 = (row.floor() as usize).min(self.height.saturating_sub(2));
        let c0 = (col.floor() as usize).min(self.width.saturating_sub(2));
        let fr = row - r0 as f64;
        let fc = col - c0 as f64;
        let r1 = (r0 + 1).min(self.height - 1);
        let c1 = (c0 + 1).min(self.width - 1);
        let v00 = self.get(r0, c0) as f64;
        let v01 = self.get(r0, c1) as f64;
        let v10 = self.get(r1, c0) as f64;
        let v11 = self.get(r1, c1) as f64;
        let top = v00 + (v01 - v00) * fc;
        let bot = v10 + (v11 - v10) * fc;
        Some((top + (bot - top) * fr) as f32)
    }

    pub fn to_pfm(&self) -> Vec<u8> {
        let mut out = format!("Pf\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        out.reserve(self.data.len() * 4);
        // PFM stores rows bottom to top
        for r in (0..self.height).rev() {
            for &v in &self.data[r * self.width..(r + 1) * self.width] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_pfm(bytes: &[u8]) -> Result<Self, RasterError> {
        let mut rd = BufReader::new(bytes);
        let mut tokens = Vec::new();
        let mut line = String::new();
        while tokens.len() < 4 {
            line.clear();
            if rd.read_line(&mut line).map_err(|e| RasterError::Format(e.to_string()))? == 0 {
                return Err(RasterError::Format("truncated header".into()));
            }
            let l = line.split('#').next().unwrap_or("");
            tokens.extend(l.split_whitespace().map(str::to_owned));
        }
        if tokens[0] != "Pf" {
            return Err(RasterError::Format(format!("expected grayscale 'Pf' magic, got {:?}", tokens[0])));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| RasterError::Format(format!("bad dimension {s:?}")));
        let width = parse(&tokens[1])?;
        let height = parse(&tokens[2])?;
        let scale: f32 = tokens[3].parse().map_err(|_| RasterError::Format(format!("bad scale {:?}", tokens[3])))?;
        let little = scale < 0.0;
        let mut raw = Vec::new();
        rd.read_to_end(&mut raw).map_err(|e| RasterError::Format(e.to_string()))?;
        if raw.len() != width * height * 4 {
            return Err(RasterError::Format(format!("payload is {} bytes, expected {}", raw.len(), width * height * 4)));
        }
        let mut data = vec![0.0f32; width * height];
        for (k, chunk) in raw.chunks_exact(4).enumerate() {
            let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
            let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
            let r = height - 1 - k / width;
            data[r * width + k % width] = v;
        }
        Ok(Self { height, width, data })
    }

    pub fn read_pfm(path: &Path) -> Result<Self, RasterError> {
        let bytes = std::fs::read(path).map_err(|source| RasterError::Io { path: path.display().to_string(), source })?;
        Self::from_pfm(&bytes)
    }

    pub fn write_pfm(&self, path: &Path) -> Result<(), RasterError> {
        crate::fsutil::write_atomic(path, &self.to_pfm()).map_err(|source| RasterError::Io { path: path.display().to_string(), source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip() {
        let r = Raster::from_vec(2, 3, vec![0.0, 1.0, 2.5, -3.0, f32::MIN_POSITIVE, 7.0]);
        assert_eq!(Raster::from_pfm(&r.to_pfm()).unwrap(), r);
    }

    #[test]
    fn pfm_rejects_color_and_truncation() {
        assert!(Raster::from_pfm(b"PF\n1 1\n-1.0\n").is_err());
        assert!(Raster::from_pfm(b"Pf\n2 2\n-1.0\n\0\0\0\0").is_err());
    }

    #[test]
    fn bilinear_edges() {
        let r = Raster::from_vec(2, 2, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(r.bilinear(1.0, 1.0), Some(3.0));
        assert_eq!(r.bilinear(0.5, 0.5), Some(1.5));
        assert_eq!(r.bilinear(1.0001, 0.0), None);
        assert_eq!(r.bilinear(-0.0001, 0.0), None);
    }
}
