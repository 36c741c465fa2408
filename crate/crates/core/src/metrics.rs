//! Pixel-level and topology-level precision / recall / F1 between a
//! predicted and a ground-truth centerline graph.

use serde::{Deserialize, Serialize};

use crate::geom::{BallSearch, CenterlineGraph, Direction, PointIndex};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricConfig {
    /// Match threshold (strict), pixels.
    pub delta_px: f64,
    /// Geodesic reach of topology sub-graphs, pixels.
    pub epsilon_px: f64,
    pub spacing_px: f64,
    /// Meters per pixel of the evaluation frame.
    pub resolution: f64,
    /// Follow edge direction when growing geodesic balls.
    pub directed: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { delta_px: 3.0, epsilon_px: 50.0, spacing_px: 1.0, resolution: 0.25, directed: false }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), (String, String)> {
        for (f, v) in
            [("delta_px", self.delta_px), ("epsilon_px", self.epsilon_px), ("spacing_px", self.spacing_px), ("resolution", self.resolution)]
        {
            if !(v > 0.0) || !v.is_finite() {
                return Err((format!("metrics.{f}"), format!("must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    fn direction(&self) -> Direction {
        if self.directed {
            Direction::Directed
        } else {
            Direction::Undirected
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub p_p: f64,
    pub p_r: f64,
    pub p_f: f64,
    pub t_p: f64,
    pub t_r: f64,
    /// Mean over ground-truth vertices of the per-vertex F1.
    pub t_f: f64,
    /// Harmonic mean of `t_p` and `t_r`, for reference.
    pub t_f_harmonic: f64,
    pub n_pred: usize,
    pub n_gt: usize,
    pub config: MetricConfig,
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl MetricReport {
    pub const HEADER: &'static str = "name\tP-P\tP-R\tP-F\tT-P\tT-R\tT-F\tn_pred\tn_gt";

    pub fn row(&self, name: &str) -> String {
        format!(
            "{name}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
            self.p_p, self.p_r, self.p_f, self.t_p, self.t_r, self.t_f, self.n_pred, self.n_gt
        )
    }

    /// Component-wise mean of several reports (counts are summed).
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        let first = reports.first()?;
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(MetricReport {
            p_p: avg(|r| r.p_p),
            p_r: avg(|r| r.p_r),
            p_f: avg(|r| r.p_f),
            t_p: avg(|r| r.t_p),
            t_r: avg(|r| r.t_r),
            t_f: avg(|r| r.t_f),
            t_f_harmonic: avg(|r| r.t_f_harmonic),
            n_pred: reports.iter().map(|r| r.n_pred).sum(),
            n_gt: reports.iter().map(|r| r.n_gt).sum(),
            config: first.config.clone(),
        })
    }
}

fn fraction_matched<T: Scalar>(from: &[usize], fg: &CenterlineGraph<T>, to_index: &PointIndex<T>, delta: T) -> usize {
    from.iter().filter(|&&i| to_index.any_within(fg.vertex(i), delta)).count()
}

/// (P-P, P-R, P-F) of two graphs already resampled in pixel units.
pub fn pixel_scores<T: Scalar>(pred: &CenterlineGraph<T>, gt: &CenterlineGraph<T>, delta: T) -> (f64, f64, f64) {
    let cell = delta.max(T::c(1e-6));
    let pi = PointIndex::new(pred.vertices(), cell);
    let gi = PointIndex::new(gt.vertices(), cell);
    let all_p: Vec<usize> = (0..pred.len()).collect();
    let all_g: Vec<usize> = (0..gt.len()).collect();
    let pp = if pred.is_empty() { 0.0 } else { fraction_matched(&all_p, pred, &gi, delta) as f64 / pred.len() as f64 };
    let pr = if gt.is_empty() { 0.0 } else { fraction_matched(&all_g, gt, &pi, delta) as f64 / gt.len() as f64 };
    (pp, pr, f1(pp, pr))
}

/// For every vertex of `g`, the vertices of the indexed graph lying
/// strictly within `delta`, in compressed rows.
struct NearLists {
    start: Vec<usize>,
    items: Vec<usize>,
}

impl NearLists {
    fn new<T: Scalar>(g: &CenterlineGraph<T>, other: &PointIndex<T>, delta: T) -> Self {
        let mut start = Vec::with_capacity(g.len() + 1);
        let mut items = Vec::new();
        start.push(0);
        for &p in g.vertices() {
            items.extend(other.within(p, delta));
            start.push(items.len());
        }
        Self { start, items }
    }

    fn of(&self, i: usize) -> &[usize] {
        &self.items[self.start[i]..self.start[i + 1]]
    }
}

/// Counts vertices of `sub` with a near vertex flagged by `member`.
fn matched_in_subset(sub: &[usize], near: &NearLists, member: &[bool]) -> usize {
    sub.iter().filter(|&&i| near.of(i).iter().any(|&j| member[j])).count()
}

/// (T-P, T-R, T-F, harmonic T-F) of two graphs already resampled in pixel
/// units. T-F averages the per-vertex F1 values.
pub fn topo_scores<T: Scalar>(pred: &CenterlineGraph<T>, gt: &CenterlineGraph<T>, cfg: &MetricConfig) -> (f64, f64, f64, f64) {
    if pred.is_empty() || gt.is_empty() {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let delta = T::c(cfg.delta_px);
    let eps = T::c(cfg.epsilon_px);
    let dir = cfg.direction();
    let cell = delta.max(T::c(1e-6));
    let pi = PointIndex::new(pred.vertices(), cell);
    let gi = PointIndex::new(gt.vertices(), cell);
    let pred_near = NearLists::new(pred, &gi, delta);
    let gt_near = NearLists::new(gt, &pi, delta);
    let mut in_gt_ball = vec![false; gt.len()];
    let mut in_pred_ball = vec![false; pred.len()];
    let mut gt_balls = BallSearch::new(gt, dir);
    let mut pred_balls = BallSearch::new(pred, dir);
    let (mut sp, mut sr, mut sf) = (0.0, 0.0, 0.0);
    for q in 0..gt.len() {
        let gb = gt_balls.ball(q, eps);
        let (pt, _) = pi.nearest(gt.vertex(q)).expect("non-empty prediction");
        let pb = pred_balls.ball(pt, eps);
        gb.iter().for_each(|&i| in_gt_ball[i] = true);
        pb.iter().for_each(|&i| in_pred_ball[i] = true);
        let p = matched_in_subset(pb, &pred_near, &in_gt_ball) as f64 / pb.len() as f64;
        let r = matched_in_subset(gb, &gt_near, &in_pred_ball) as f64 / gb.len() as f64;
        gb.iter().for_each(|&i| in_gt_ball[i] = false);
        pb.iter().for_each(|&i| in_pred_ball[i] = false);
        sp += p;
        sr += r;
        sf += f1(p, r);
    }
    let n = gt.len() as f64;
    let (tp, tr) = (sp / n, sr / n);
    (tp, tr, sf / n, f1(tp, tr))
}

/// Scales metric graphs into pixels and resamples them at the configured
/// spacing.
pub fn prepare<T: Scalar>(g: &CenterlineGraph<T>, cfg: &MetricConfig) -> CenterlineGraph<T> {
    let s = T::c(1.0 / cfg.resolution);
    g.map_points(|p| p * s).resample(T::c(cfg.spacing_px)).expect("positive spacing")
}

/// Full report for graphs given in meters.
pub fn evaluate<T: Scalar>(pred: &CenterlineGraph<T>, gt: &CenterlineGraph<T>, cfg: &MetricConfig) -> MetricReport {
    let p = prepare(pred, cfg);
    let g = prepare(gt, cfg);
    evaluate_prepared(&p, &g, cfg)
}

/// Report for graphs already in pixel units and resampled.
pub fn evaluate_prepared<T: Scalar>(p: &CenterlineGraph<T>, g: &CenterlineGraph<T>, cfg: &MetricConfig) -> MetricReport {
    let (p_p, p_r, p_f) = pixel_scores(p, g, T::c(cfg.delta_px));
    let (t_p, t_r, t_f, t_f_harmonic) = topo_scores(p, g, cfg);
    MetricReport { p_p, p_r, p_f, t_p, t_r, t_f, t_f_harmonic, n_pred: p.len(), n_gt: g.len(), config: cfg.clone() }
}
