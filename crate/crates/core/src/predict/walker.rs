//! Learning-free predictor: follows heatmap ridges on a circle around the
//! ROI centre, avoiding directions already covered by the history map.

use serde::{Deserialize, Serialize};

use super::{PredictError, Predictor, PredictorOutput, Roi, RoiVertex, StepContext};
use crate::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkerConfig {
    /// Circle radius, pixels.
    pub step_px: f64,
    /// Minimum heatmap value of an accepted direction.
    pub theta_peak: f64,
    /// Half-width of the window suppressed around a history hit, degrees.
    pub suppress_deg: usize,
    /// Minimum angular separation of two outputs, degrees.
    pub separation_deg: usize,
    pub max_vertices: usize,
}

impl Default for WalkerConfig {
    fn default() -> Self {
        Self { step_px: 8.0, theta_peak: 0.3, suppress_deg: 25, separation_deg: 15, max_vertices: 8 }
    }
}

/// Circle offsets at 1 degree. The first quadrant is computed and the rest
/// obtained by exact quarter turns, so rotating the input by 90 degrees
/// shifts samples by exactly 90 indices.
fn circle(radius: f64) -> Vec<Point> {
    let quad: Vec<Point> = (0..90)
        .map(|i| {
            let a = (i as f64).to_radians();
            Point::new(radius * a.cos(), radius * a.sin())
        })
        .collect();
    let mut out = quad.clone();
    let mut cur = quad;
    for _ in 0..3 {
        cur = cur.iter().map(|p| Point::new(-p.y, p.x)).collect();
        out.extend_from_slice(&cur);
    }
    out
}

/// Angles (degrees) and values of the accepted circle maxima.
pub fn walker_directions(roi: &Roi, cfg: &WalkerConfig) -> Vec<(usize, f64)> {
    let n = 360;
    let c = roi.half();
    let pts = circle(cfg.step_px);
    let hist = roi.channels - 1;
    let mut val: Vec<f64> = pts.iter().map(|p| roi.sample(0, c + p.y, c + p.x) as f64).collect();
    let mut suppressed = vec![false; n];
    for (i, p) in pts.iter().enumerate() {
        let (r, col) = ((c + p.y).round(), (c + p.x).round());
        let inside = r >= 0.0 && col >= 0.0 && r < roi.size as f64 && col < roi.size as f64;
        if inside && roi.get(hist, r as usize, col as usize) >= 0.5 {
            let s = cfg.suppress_deg;
            for k in 0..=2 * s {
                suppressed[(i + n + k - s) % n] = true;
            }
        }
    }
    for (v, &s) in val.iter_mut().zip(&suppressed) {
        if s {
            *v = 0.0;
        }
    }
    let mut peaks: Vec<(usize, f64)> = (0..n)
        .filter(|&i| {
            let (prev, next) = (val[(i + n - 1) % n], val[(i + 1) % n]);
            val[i] >= cfg.theta_peak && val[i] > prev && val[i] >= next
        })
        .map(|i| (i, val[i]))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut kept: Vec<(usize, f64)> = Vec::new();
    for (i, v) in peaks {
        let close = kept.iter().any(|&(j, _)| {
            let d = (i + n - j) % n;
            d.min(n - d) < cfg.separation_deg
        });
        if !close {
            kept.push((i, v));
        }
        if kept.len() == cfg.max_vertices {
            break;
        }
    }
    kept
}

pub fn walker_predict(roi: &Roi, cfg: &WalkerConfig) -> PredictorOutput {
    let pts = circle(cfg.step_px);
    let vertices =
        walker_directions(roi, cfg).into_iter().map(|(i, v)| RoiVertex { x: pts[i].x, y: pts[i].y, p: v.clamp(0.0, 1.0) }).collect();
    PredictorOutput { vertices }
}

#[derive(Debug, Clone, Default)]
pub struct WalkerPredictor {
    pub cfg: WalkerConfig,
}

impl WalkerPredictor {
    pub fn new(cfg: WalkerConfig) -> Self {
        Self { cfg }
    }
}

impl Predictor for WalkerPredictor {
    fn predict(&mut self, ctx: &StepContext<'_>) -> Result<PredictorOutput, PredictError> {
        let cfg = WalkerConfig { max_vertices: self.cfg.max_vertices.min(ctx.max_vertices), ..self.cfg.clone() };
        Ok(walker_predict(ctx.roi, &cfg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::point_segment_distance;

    const S: usize = 64;

    /// ROI with channel 0 rendered from segments through the centre and a
    /// history channel marked along `hist` segments.
    fn roi(segs: &[(Point, Point)], hist: &[(Point, Point)]) -> Roi {
        let c = Point::new(32.0, 32.0);
        let mut r = Roi::zeros(2, S, c);
        for row in 0..S {
            for col in 0..S {
                let p = Point::new(col as f64, row as f64);
                let d = segs.iter().map(|&(a, b)| point_segment_distance(p, c + a, c + b)).fold(f64::INFINITY, f64::min);
                r.set(0, row, col, (-d * d / 4.5).exp() as f32);
                let dh = hist.iter().map(|&(a, b)| point_segment_distance(p, c + a, c + b)).fold(f64::INFINITY, f64::min);
                if dh <= std::f64::consts::FRAC_1_SQRT_2 {
                    r.set(1, row, col, 1.0);
                }
            }
        }
        r
    }

    fn angles(r: &Roi) -> Vec<usize> {
        let mut a: Vec<usize> = walker_directions(r, &WalkerConfig::default()).into_iter().map(|x| x.0).collect();
        a.sort();
        a
    }

    #[test]
    fn zero_roi_gives_nothing() {
        assert!(walker_predict(&Roi::zeros(3, S, Point::zero()), &WalkerConfig::default()).vertices.is_empty());
    }

    #[test]
    fn straight_lane_fore_and_aft() {
        let lane = [(Point::new(-40.0, 0.0), Point::new(40.0, 0.0))];
        assert_eq!(angles(&roi(&lane, &[])), vec![0, 180]);
        let hist = [(Point::new(-30.0, 0.0), Point::new(0.0, 0.0))];
        assert_eq!(angles(&roi(&lane, &hist)), vec![0]);
    }

    #[test]
    fn t_junction_with_entry_marked() {
        let segs = [(Point::new(-40.0, 0.0), Point::new(40.0, 0.0)), (Point::new(0.0, 0.0), Point::new(0.0, 40.0))];
        let hist = [(Point::new(-30.0, 0.0), Point::new(0.0, 0.0))];
        assert_eq!(angles(&roi(&segs, &hist)), vec![0, 90]);
    }

    #[test]
    fn quarter_turn_shifts_angles() {
        let segs = [(Point::new(-40.0, -10.0), Point::new(0.0, 0.0)), (Point::new(0.0, 0.0), Point::new(35.0, 20.0))];
        let r = roi(&segs, &[]);
        // rotate content +90 degrees about the centre pixel
        let mut rot = Roi::zeros(2, S, r.center);
        for ch in 0..2 {
            for row in 0..S {
                for col in 1..S {
                    rot.set(ch, row, col, r.get(ch, S - col, row));
                }
            }
        }
        let a = angles(&r);
        let mut b: Vec<usize> = a.iter().map(|x| (x + 90) % 360).collect();
        b.sort();
        assert_eq!(angles(&rot), b);
    }
}
