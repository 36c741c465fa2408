//! Ground-truth labeling function and the oracle predictors built on it.

use serde::{Deserialize, Serialize};

use super::{clamp_to_roi, PredictError, Predictor, PredictorOutput, RoiVertex, StepContext};
use crate::geom::project_on_segment;
use crate::raster::Raster;
use crate::{Graph, GridSpec64, Point, Pose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelConfig {
    /// Arc length between consecutive labels, pixels.
    pub step_px: f64,
    /// Largest distance from v_t to G* that still yields labels, pixels.
    pub match_radius_px: f64,
    /// Radius of the history disc used by the explored test, pixels.
    pub coverage_radius_px: f64,
    /// Uniform trajectory noise bound for expert sampling, pixels.
    pub noise_px: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self { step_px: 8.0, match_radius_px: 6.0, coverage_radius_px: 3.0, noise_px: 2.0 }
    }
}

impl LabelConfig {
    pub fn validate(&self) -> Result<(), (String, String)> {
        let bad = |f: &str, m: &str| Err((format!("label.{f}"), m.to_string()));
        if !(self.step_px > 0.0) {
            return bad("step_px", "must be > 0");
        }
        if !(self.match_radius_px >= 0.0) {
            return bad("match_radius_px", "must be >= 0");
        }
        if !(self.coverage_radius_px >= 0.0) {
            return bad("coverage_radius_px", "must be >= 0");
        }
        if !(self.noise_px >= 0.0) {
            return bad("noise_px", "must be >= 0");
        }
        Ok(())
    }
}

/// Projections closer than this to the edge's start vertex begin the walk
/// there.
const SNAP_BACK_PX: f64 = 0.25;
/// Same for the vertex ahead; larger so sub-pixel steps onto junctions are
/// never emitted.
const SNAP_AHEAD_PX: f64 = 1.0;
/// Edges within this much of the closest one compete on heading.
const HEADING_SLACK_PX: f64 = 1.5;
/// Probes per label in the explored test.
const PROBES: usize = 5;

/// Position on the graph: a point plus the vertex the walk heads to, or the
/// vertex the point sits on.
#[derive(Debug, Clone, Copy)]
enum Cursor {
    OnEdge { pos: Point, to: usize },
    AtVertex(usize),
}

fn min_turn_out(g: &Graph, v: usize, incoming: Option<Point>) -> Option<usize> {
    let outs = g.out_neighbors(v);
    let p = g.vertex(v);
    match incoming {
        None => outs.first().copied(),
        Some(dir) => outs.iter().copied().max_by(|&a, &b| {
            let da = (g.vertex(a) - p).normalized().dot(dir);
            let db = (g.vertex(b) - p).normalized().dot(dir);
            da.total_cmp(&db).then(b.cmp(&a))
        }),
    }
}

/// Walks `dist` along the graph from `pos` towards vertex `to`. In label
/// mode the walk halts at the first junction or dead end; otherwise it
/// follows the straightest continuation and halts only at dead ends.
fn walk(g: &Graph, mut pos: Point, mut to: usize, dist: f64, label_mode: bool) -> Cursor {
    let mut remaining = dist;
    let mut guard = 0usize;
    loop {
        let b = g.vertex(to);
        let seg = pos.dist(b);
        if seg >= remaining && seg > 0.0 {
            return Cursor::OnEdge { pos: pos.lerp(b, remaining / seg), to };
        }
        remaining -= seg;
        let dir = if seg > 0.0 { (b - pos) * (1.0 / seg) } else { Point::zero() };
        pos = b;
        if remaining <= 0.0 || g.out_degree(to) == 0 || (label_mode && g.is_junction(to)) {
            return Cursor::AtVertex(to);
        }
        let incoming = if seg > 0.0 { Some(dir) } else { None };
        to = min_turn_out(g, to, incoming).expect("out degree checked");
        guard += 1;
        if guard > g.len() + 1 {
            return Cursor::AtVertex(to);
        }
    }
}

fn cursor_pos(g: &Graph, c: Cursor) -> Point {
    match c {
        Cursor::OnEdge { pos, .. } => pos,
        Cursor::AtVertex(v) => g.vertex(v),
    }
}

fn marked_near(history: &Raster, p: Point, r: f64) -> bool {
    let (h, w) = (history.height() as i64, history.width() as i64);
    let r0 = (p.y - r).floor() as i64;
    let r1 = (p.y + r).ceil() as i64;
    let c0 = (p.x - r).floor() as i64;
    let c1 = (p.x + r).ceil() as i64;
    for row in r0.max(0)..=r1.min(h - 1) {
        for col in c0.max(0)..=c1.min(w - 1) {
            let d2 = (row as f64 - p.y).powi(2) + (col as f64 - p.x).powi(2);
            if d2 <= r * r + 1e-9 && history.get(row as usize, col as usize) >= 0.5 {
                return true;
            }
        }
    }
    false
}

/// A label counts as explored when the history map is marked near it and
/// near every probe further along its continuation. Requiring the whole
/// probe run keeps labels whose disc only touches a crossing lane.
fn explored(g: &Graph, label: Cursor, incoming: Point, history: &Raster, rc: f64) -> bool {
    let start = cursor_pos(g, label);
    for k in 0..PROBES {
        let probe = if k == 0 {
            start
        } else {
            let next = match label {
                Cursor::OnEdge { to, .. } => Some(to),
                Cursor::AtVertex(v) => min_turn_out(g, v, Some(incoming)),
            };
            match next {
                Some(to) => cursor_pos(g, walk(g, start, to, k as f64 * rc, false)),
                None => start,
            }
        };
        if !marked_near(history, probe, rc) {
            return false;
        }
    }
    true
}

/// Arc length below which a marked walk counts as starting on the history.
const JOIN_MIN_ARC_PX: f64 = 2.0;
const JOIN_SCAN_PX: f64 = 0.25;
/// Extent of the history mark around the agent's own vertex.
const START_MARK_PX: f64 = 1.5;

fn pixel_marked(history: &Raster, p: Point) -> bool {
    let (r, c) = (p.y.round(), p.x.round());
    r >= 0.0 && c >= 0.0 && (r as usize) < history.height() && (c as usize) < history.width() && history.get(r as usize, c as usize) >= 0.5
}

/// First point of the label walk where it runs into the history, skipping
/// the marks around the start itself. `None` when the walk starts on the
/// history (an already traced branch) or never meets it.
fn join_point(g: &Graph, pos: Point, to: usize, step: f64, history: &Raster) -> Option<Point> {
    let n = (step / JOIN_SCAN_PX).ceil() as usize;
    let mut left_start = false;
    for k in 1..=n {
        let s = (k as f64 * JOIN_SCAN_PX).min(step);
        let p = cursor_pos(g, walk(g, pos, to, s, true));
        let marked = pixel_marked(history, p);
        if !left_start {
            if !marked {
                left_start = true;
            } else if s > START_MARK_PX {
                return None;
            }
            continue;
        }
        if marked {
            return (s > JOIN_MIN_ARC_PX).then_some(p);
        }
    }
    None
}

/// Label vertices for the next step from `v_t`, all in the pixel frame of
/// `gt_px`. An empty result is a Stop label.
pub fn label_next(v_t: Point, gt_px: &Graph, history: &Raster, cfg: &LabelConfig) -> Vec<Point> {
    label_next_with_heading(v_t, None, gt_px, history, cfg)
}

/// As [`label_next`]; `heading` breaks near-ties between edges (crossings)
/// in favour of the one aligned with the agent's motion.
pub fn label_next_with_heading(v_t: Point, heading: Option<Point>, gt_px: &Graph, history: &Raster, cfg: &LabelConfig) -> Vec<Point> {
    let g = gt_px;
    let mut cands: Vec<(usize, Point, f64, f64)> = Vec::new();
    let mut best = f64::INFINITY;
    for (e, &(a, b)) in g.edges().iter().enumerate() {
        let (pa, pb) = (g.vertex(a), g.vertex(b));
        let (u, _) = project_on_segment(v_t, pa, pb);
        let d = u.dist(v_t);
        if d <= cfg.match_radius_px && d <= best + HEADING_SLACK_PX {
            best = best.min(d);
            cands.push((e, u, d, 0.0));
        }
    }
    if cands.is_empty() {
        return Vec::new();
    }
    cands.retain(|c| c.2 <= best + HEADING_SLACK_PX);
    let chosen = match heading.map(|h| h.normalized()) {
        Some(h) if h.norm() > 0.0 => {
            for c in cands.iter_mut() {
                let (a, b) = g.edges()[c.0];
                c.3 = (g.vertex(b) - g.vertex(a)).normalized().dot(h);
            }
            *cands.iter().max_by(|x, y| x.3.total_cmp(&y.3).then(y.2.total_cmp(&x.2)).then(y.0.cmp(&x.0))).unwrap()
        }
        _ => *cands.iter().min_by(|x, y| x.2.total_cmp(&y.2).then(x.0.cmp(&y.0))).unwrap(),
    };
    let (e, u, _, _) = chosen;
    let (a, b) = g.edges()[e];
    let start = if u.dist(g.vertex(b)) <= SNAP_AHEAD_PX {
        Some(b)
    } else if u.dist(g.vertex(a)) <= SNAP_BACK_PX {
        Some(a)
    } else {
        None
    };
    let starts: Vec<(Point, usize)> = match start {
        Some(v) => g.out_neighbors(v).iter().map(|&n| (g.vertex(v), n)).collect(),
        None => vec![(u, b)],
    };
    let mut out = Vec::new();
    for (pos, to) in starts {
        let incoming = (g.vertex(to) - pos).normalized();
        let end = walk(g, pos, to, cfg.step_px, true);
        let end_dir = match end {
            Cursor::OnEdge { pos: p, to } => (g.vertex(to) - p).normalized(),
            Cursor::AtVertex(_) => incoming,
        };
        let dir = if end_dir.norm() > 0.0 { end_dir } else { incoming };
        if explored(g, end, dir, history, cfg.coverage_radius_px) {
            // an explored branch that is reached through unexplored ground
            // is labelled where it meets the history, so the agent can join
            if let Some(j) = join_point(g, pos, to, cfg.step_px, history) {
                out.push(j);
            }
            continue;
        }
        out.push(cursor_pos(g, end));
    }
    out
}

/// G* expressed in the pixel frame of one pose, cached across steps.
#[derive(Debug, Clone, Default)]
struct PixelView {
    key: Option<(Pose, GridSpec64)>,
    graph: Graph,
}

impl PixelView {
    fn get(&mut self, gt: &Graph, pose: &Pose, spec: &GridSpec64) -> &Graph {
        if self.key != Some((*pose, *spec)) {
            self.graph = gt.map_points(|p| spec.world_to_px(pose, p));
            self.key = Some((*pose, *spec));
        }
        &self.graph
    }
}

/// Acts as the expert: labels from G* with probability 1.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    gt: Graph,
    cfg: LabelConfig,
    view: PixelView,
}

impl OraclePredictor {
    pub fn new(gt: Graph, cfg: LabelConfig) -> Self {
        Self { gt, cfg, view: PixelView::default() }
    }

    /// Labels for the step in grid pixel coordinates.
    pub fn labels(&mut self, ctx: &StepContext<'_>) -> Vec<Point> {
        let g = self.view.get(&self.gt, &ctx.fused.pose, &ctx.fused.spec);
        label_next_with_heading(ctx.v_t, ctx.heading, g, ctx.history, &self.cfg)
    }
}

fn to_output(labels: &[Point], ctx: &StepContext<'_>, prob: impl Fn(Point) -> f64) -> PredictorOutput {
    let half = ctx.roi.half();
    let vertices = labels
        .iter()
        .take(ctx.max_vertices)
        .map(|&l| {
            let d = clamp_to_roi(l - ctx.roi.center, half);
            RoiVertex { x: d.x, y: d.y, p: prob(l) }
        })
        .collect();
    PredictorOutput { vertices }
}

impl Predictor for OraclePredictor {
    fn predict(&mut self, ctx: &StepContext<'_>) -> Result<PredictorOutput, PredictError> {
        let labels = self.labels(ctx);
        Ok(to_output(&labels, ctx, |_| 1.0))
    }
}

/// Oracle whose confidence is the fused centerline heatmap at each label,
/// so it inherits the dropout and noise of the observed frames.
#[derive(Debug, Clone)]
pub struct DegradedOracle {
    inner: OraclePredictor,
}

impl DegradedOracle {
    pub fn new(gt: Graph, cfg: LabelConfig) -> Self {
        Self { inner: OraclePredictor::new(gt, cfg) }
    }
}

impl Predictor for DegradedOracle {
    fn predict(&mut self, ctx: &StepContext<'_>) -> Result<PredictorOutput, PredictError> {
        let labels = self.inner.labels(ctx);
        let hl = &ctx.fused.hl;
        Ok(to_output(&labels, ctx, |l| hl.bilinear(l.y, l.x).map_or(0.0, |v| (v as f64).clamp(0.0, 1.0))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty() -> Raster {
        Raster::zeros(200, 200)
    }

    fn mark_line(r: &mut Raster, a: Point, b: Point) {
        let n = (a.dist(b) * 4.0).ceil() as usize;
        for k in 0..=n {
            let p = a.lerp(b, k as f64 / n as f64);
            r.set(p.y.round() as usize, p.x.round() as usize, 1.0);
        }
    }

    fn split() -> Graph {
        // 0 -> 1 -> {2, 3}, split at (100, 100)
        Graph::from_parts(
            vec![Point::new(60.0, 100.0), Point::new(100.0, 100.0), Point::new(150.0, 100.0), Point::new(140.0, 140.0)],
            &[(0, 1), (1, 2), (1, 3)],
        )
        .unwrap()
    }

    #[test]
    fn far_from_graph_is_stop() {
        let g = Graph::polyline(&[Point::new(0.0, 100.0), Point::new(199.0, 100.0)]);
        assert!(label_next(Point::new(50.0, 120.0), &g, &empty(), &LabelConfig::default()).is_empty());
    }

    #[test]
    fn straight_lane_label_downstream() {
        let g = Graph::polyline(&[Point::new(0.0, 100.0), Point::new(30.0, 100.0), Point::new(199.0, 100.0)]);
        let l = label_next(Point::new(27.0, 101.0), &g, &empty(), &LabelConfig::default());
        assert_eq!(l.len(), 1);
        assert!(l[0].dist(Point::new(35.0, 100.0)) < 1e-9);
    }

    #[test]
    fn split_vertex_gives_one_label_per_branch() {
        let l = label_next(Point::new(100.0, 100.0), &split(), &empty(), &LabelConfig::default());
        assert_eq!(l.len(), 2);
        assert!(l[0].dist(Point::new(108.0, 100.0)) < 1e-9);
        let d = (Point::new(40.0, 40.0)).normalized() * 8.0;
        assert!(l[1].dist(Point::new(100.0, 100.0) + d) < 1e-9);
    }

    #[test]
    fn covered_branch_is_dropped() {
        let mut h = empty();
        mark_line(&mut h, Point::new(100.0, 100.0), Point::new(140.0, 140.0));
        let l = label_next(Point::new(100.0, 100.0), &split(), &h, &LabelConfig::default());
        assert_eq!(l.len(), 1);
        assert!(l[0].dist(Point::new(108.0, 100.0)) < 1e-9);
    }

    #[test]
    fn walk_stops_at_junction_before_step() {
        let l = label_next(Point::new(95.0, 100.0), &split(), &empty(), &LabelConfig::default());
        assert_eq!(l, vec![Point::new(100.0, 100.0)]);
    }

    #[test]
    fn crossing_history_does_not_hide_label() {
        let g = Graph::polyline(&[Point::new(0.0, 100.0), Point::new(199.0, 100.0)]);
        let mut h = empty();
        mark_line(&mut h, Point::new(108.0, 60.0), Point::new(108.0, 140.0));
        let l = label_next(Point::new(100.0, 100.0), &g, &h, &LabelConfig::default());
        assert_eq!(l.len(), 1);
    }
}
