//! The tracing agent: candidate management, history maps, ROI cropping,
//! the Stop/Move/Branch policy and cross-frame endpoint propagation.

use std::collections::{HashSet, VecDeque};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bev::BevGrid;
use crate::fusion::{fuse_window, FusionConfig};
use crate::geom::point_segment_distance;
use crate::predict::{Predictor, PredictorOutput, Roi, StepContext};
use crate::raster::Raster;
use crate::{Graph, GridSpec64, Point, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueueOrder {
    Lifo,
    Fifo,
    /// Seeded uniform pop.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub roi_size: usize,
    /// Vertex queries per step (N̂).
    pub max_vertices: usize,
    pub theta_v: f64,
    pub theta_peak: f64,
    pub nms_radius_px: f64,
    pub dedup_radius_m: f64,
    pub max_steps_instance: usize,
    pub max_steps_frame: usize,
    pub history_width_px: f64,
    pub queue: QueueOrder,
    /// Reach of the Stop attach rule, pixels.
    pub attach_radius_px: f64,
    /// Largest angle between heading and attach target, degrees.
    pub attach_angle_deg: f64,
    /// Accepted vertices this close to an aligned M_W vertex reuse it, px.
    pub join_radius_px: f64,
    /// Largest angle between the move and the joined vertex's edges, degrees.
    pub join_angle_deg: f64,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            roi_size: 64,
            max_vertices: 8,
            theta_v: 0.5,
            theta_peak: 0.3,
            nms_radius_px: 8.0,
            dedup_radius_m: 1.0,
            max_steps_instance: 500,
            max_steps_frame: 5000,
            history_width_px: 1.0,
            queue: QueueOrder::Lifo,
            attach_radius_px: 11.0,
            attach_angle_deg: 60.0,
            join_radius_px: 1.5,
            join_angle_deg: 30.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("invalid agent config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("no frames to trace")]
    NoFrames,
    #[error("vertex ({0}, {1}) lies outside the grid")]
    OutsideGrid(f64, f64),
    #[error(transparent)]
    Fusion(#[from] crate::fusion::FusionError),
}

impl AgentConfig {
    pub fn validate(&self, grid: &GridSpec64) -> Result<(), AgentError> {
        let bad = |f: &str, m: String| Err(AgentError::Config { field: format!("agent.{f}"), message: m });
        if self.roi_size < 4 || self.roi_size % 2 != 0 || self.roi_size > grid.height.min(grid.width) {
            return bad("roi_size", format!("must be even, >= 4 and <= grid size, got {}", self.roi_size));
        }
        if self.max_vertices == 0 {
            return bad("max_vertices", "must be >= 1".into());
        }
        for (f, v) in [("theta_v", self.theta_v), ("theta_peak", self.theta_peak)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(f, format!("must be in (0,1), got {v}"));
            }
        }
        for (f, v) in [
            ("nms_radius_px", self.nms_radius_px),
            ("dedup_radius_m", self.dedup_radius_m),
            ("history_width_px", self.history_width_px),
            ("attach_radius_px", self.attach_radius_px),
            ("attach_angle_deg", self.attach_angle_deg),
            ("join_radius_px", self.join_radius_px),
            ("join_angle_deg", self.join_angle_deg),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(f, format!("must be finite and >= 0, got {v}"));
            }
        }
        if self.max_steps_instance == 0 || self.max_steps_frame == 0 {
            return bad("max_steps_instance", "step budgets must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Peak,
    Endpoint,
    Branch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    /// World position.
    pub pos: Point,
    pub provenance: Provenance,
    /// M_W vertex the candidate sits on, if any.
    pub vertex: Option<usize>,
    /// World direction of travel when the candidate was created.
    pub heading: Option<Point>,
}

/// Action chosen by the policy for one predictor output.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Stop,
    Move(Point),
    Branch(Vec<Point>),
}

/// Maps the valid predictions (ROI offsets) to an action in grid pixels.
pub fn policy(out: &PredictorOutput, theta_v: f64, roi_center: Point) -> Action {
    let valid = out.valid(theta_v);
    match valid.len() {
        0 => Action::Stop,
        1 => Action::Move(roi_center + Point::new(valid[0].x, valid[0].y)),
        _ => Action::Branch(valid.iter().map(|v| roi_center + Point::new(v.x, v.y)).collect()),
    }
}

/// Non-maximum suppressed peaks of `r` at or above `threshold`, strongest
/// first, as (col, row) pixel points.
pub fn nms_peaks(r: &Raster, threshold: f32, radius: f64) -> Vec<Point> {
    let (h, w) = r.dims();
    let mut cands: Vec<(f32, usize)> = Vec::new();
    for row in 0..h {
        for col in 0..w {
            let v = r.get(row, col);
            if v < threshold {
                continue;
            }
            let mut is_max = true;
            'n: for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if (dr, dc) != (0, 0) && r.get_or_zero(row as i64 + dr, col as i64 + dc) > v {
                        is_max = false;
                        break 'n;
                    }
                }
            }
            if is_max {
                cands.push((v, row * w + col));
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<Point> = Vec::new();
    for (_, idx) in cands {
        let p = Point::new((idx % w) as f64, (idx / w) as f64);
        if out.iter().all(|q| q.dist(p) > radius) {
            out.push(p);
        }
    }
    out
}

fn distance_to_graph(g: &Graph, p: Point) -> f64 {
    let mut best = f64::INFINITY;
    for &(a, b) in g.edges() {
        best = best.min(point_segment_distance(p, g.vertex(a), g.vertex(b)));
    }
    for (i, &v) in g.vertices().iter().enumerate() {
        if g.degree(i) == 0 {
            best = best.min(v.dist(p));
        }
    }
    best
}

/// Candidate list for a frame: NMS peaks of H_I not already traced, then
/// the endpoints carried over from the previous frame. Endpoints leaving
/// the grid are dropped. The returned order is the pop priority: the
/// first element is popped first.
pub fn init_candidates(grid: &BevGrid, prev_endpoints: &[Candidate], mw: &Graph, cfg: &AgentConfig) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = prev_endpoints
        .iter()
        .filter(|c| {
            let q = locate(&grid.spec, &grid.pose, c.pos);
            grid.spec.contains_px(q.y, q.x)
        })
        .copied()
        .collect();
    for p in nms_peaks(&grid.hi, cfg.theta_peak as f32, cfg.nms_radius_px) {
        let world = grid.spec.px_to_world(&grid.pose, p);
        if distance_to_graph(mw, world) < cfg.dedup_radius_m {
            continue;
        }
        out.push(Candidate { pos: world, provenance: Provenance::Peak, vertex: None, heading: None });
    }
    out
}

/// Square crop of the fused channels plus the history map, centred on the
/// rounded `v_t` (grid pixels) and zero-padded outside the grid.
pub fn crop_roi(fused: &BevGrid, history: &Raster, v_t: Point, size: usize) -> Result<Roi, AgentError> {
    if !fused.spec.contains_px(v_t.y, v_t.x) {
        return Err(AgentError::OutsideGrid(v_t.x, v_t.y));
    }
    let center = Point::new(v_t.x.round(), v_t.y.round());
    let chans: Vec<&Raster> = fused.channels().chain(std::iter::once(history)).collect();
    let mut roi = Roi::zeros(chans.len(), size, center);
    let (r0, c0) = (center.y as i64 - (size / 2) as i64, center.x as i64 - (size / 2) as i64);
    for (c, ch) in chans.iter().enumerate() {
        for i in 0..size {
            for j in 0..size {
                roi.set(c, i, j, ch.get_or_zero(r0 + i as i64, c0 + j as i64));
            }
        }
    }
    Ok(roi)
}

/// Marks every pixel within `width * sqrt(2) / 2` of segment `a`-`b`.
pub fn mark_segment(r: &mut Raster, a: Point, b: Point, width: f64) {
    let rad = width * std::f64::consts::FRAC_1_SQRT_2;
    let (h, w) = (r.height() as f64, r.width() as f64);
    let r0 = (a.y.min(b.y) - rad).floor().max(0.0);
    let r1 = (a.y.max(b.y) + rad).ceil().min(h - 1.0);
    let c0 = (a.x.min(b.x) - rad).floor().max(0.0);
    let c1 = (a.x.max(b.x) + rad).ceil().min(w - 1.0);
    if r0 > r1 || c0 > c1 {
        return;
    }
    for row in r0 as usize..=r1 as usize {
        for col in c0 as usize..=c1 as usize {
            if point_segment_distance(Point::new(col as f64, row as f64), a, b) <= rad + 1e-9 {
                r.set(row, col, 1.0);
            }
        }
    }
}

/// Rasterizes M_W into the ego grid of `pose`.
pub fn render_history(mw: &Graph, pose: &Pose, spec: &GridSpec64, width: f64) -> Raster {
    let mut r = Raster::zeros(spec.height, spec.width);
    let px: Vec<Point> = mw.vertices().iter().map(|&p| spec.world_to_px(pose, p)).collect();
    for &(a, b) in mw.edges() {
        mark_segment(&mut r, px[a], px[b], width);
    }
    for (i, &p) in px.iter().enumerate() {
        if mw.degree(i) == 0 {
            mark_segment(&mut r, p, p, width);
        }
    }
    r
}

/// Point where segment `a`-`b` (a inside) leaves the closed grid rect.
fn clip_exit(a: Point, b: Point, spec: &GridSpec64) -> Point {
    let d = b - a;
    let mut t1 = 1.0f64;
    for (p, q) in [(-d.x, a.x), (d.x, spec.max_col() - a.x), (-d.y, a.y), (d.y, spec.max_row() - a.y)] {
        if p > 0.0 {
            t1 = t1.min(q / p);
        }
    }
    a + d * t1.clamp(0.0, 1.0)
}

/// Grid pixel of a world point; round-off just outside the border is
/// pulled back onto it.
fn locate(spec: &GridSpec64, pose: &Pose, p: Point) -> Point {
    const SLACK: f64 = 1e-6;
    let q = spec.world_to_px(pose, p);
    let pull = |v: f64, hi: f64| {
        if v < 0.0 && v > -SLACK {
            0.0
        } else if v > hi && v < hi + SLACK {
            hi
        } else {
            v
        }
    };
    Point::new(pull(q.x, spec.max_col()), pull(q.y, spec.max_row()))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameDiagnostics {
    pub frame: usize,
    pub candidates: usize,
    pub instances: usize,
    pub steps: usize,
    pub moves: usize,
    pub stops: usize,
    pub branches: usize,
    pub boundary_stops: usize,
    pub attaches: usize,
    pub joins: usize,
    pub degenerate_moves: usize,
    pub endpoints_emitted: usize,
    pub instance_budget_hits: usize,
    pub frame_budget_hit: bool,
    pub predictor_errors: usize,
    pub protocol_errors: usize,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub frames: Vec<FrameDiagnostics>,
    pub total_steps: usize,
    pub total_predictor_errors: usize,
    pub merged_endpoints: usize,
    pub pruned_spurs: usize,
    pub last_error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TraceResult {
    pub graph: Graph,
    pub diagnostics: Diagnostics,
}

/// Observes steps and may perturb accepted vertices (expert sampling).
pub trait AgentHook {
    fn on_step(&mut self, _frame: usize, _ctx: &StepContext<'_>, _out: &PredictorOutput) {}

    /// Applied to each accepted vertex (grid pixels) before it enters M_W.
    fn perturb(&mut self, p: Point) -> Point {
        p
    }
}

pub struct NoHook;

impl AgentHook for NoHook {}

/// Mutable state of a trace run.
pub struct AgentState {
    pub mw: Graph,
    pub queue: VecDeque<Candidate>,
    pub pending: Vec<Candidate>,
    pub history: Raster,
    next_tag: u32,
    rng: ChaCha8Rng,
    step_counter: u64,
}

impl AgentState {
    pub fn new(spec: &GridSpec64, seed: u64) -> Self {
        Self {
            mw: Graph::new(),
            queue: VecDeque::new(),
            pending: Vec::new(),
            history: Raster::zeros(spec.height, spec.width),
            next_tag: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            step_counter: 0,
        }
    }

    /// Queues candidates so the first element is popped first.
    pub fn load(&mut self, cands: Vec<Candidate>, order: QueueOrder) {
        for c in cands.into_iter().rev() {
            self.push_front_priority(c, order);
        }
    }

    fn push_front_priority(&mut self, c: Candidate, order: QueueOrder) {
        match order {
            QueueOrder::Lifo | QueueOrder::Random => self.queue.push_back(c),
            QueueOrder::Fifo => self.queue.push_front(c),
        }
    }

    fn push(&mut self, c: Candidate) {
        self.queue.push_back(c);
    }

    fn pop(&mut self, order: QueueOrder) -> Option<Candidate> {
        match order {
            QueueOrder::Lifo => self.queue.pop_back(),
            QueueOrder::Fifo => self.queue.pop_front(),
            QueueOrder::Random => {
                if self.queue.is_empty() {
                    None
                } else {
                    let i = self.rng.gen_range(0..self.queue.len());
                    self.queue.remove(i)
                }
            }
        }
    }
}

struct Frame<'a> {
    index: usize,
    fused: &'a BevGrid,
}

struct Instance {
    cur: Option<usize>,
    v_t: Point,
    heading: Option<Point>,
    tag: u32,
    members: HashSet<usize>,
}

struct Tracer<'a, P: Predictor + ?Sized, H: AgentHook + ?Sized> {
    cfg: &'a AgentConfig,
    predictor: &'a mut P,
    hook: &'a mut H,
    state: &'a mut AgentState,
}

impl<P: Predictor + ?Sized, H: AgentHook + ?Sized> Tracer<'_, P, H> {
    fn to_world(&self, f: &Frame<'_>, p: Point) -> Point {
        f.fused.spec.px_to_world(&f.fused.pose, p)
    }

    fn add_vertex(&mut self, f: &Frame<'_>, px: Point, tag: u32) -> usize {
        let w = self.to_world(f, px);
        let before = self.state.mw.len();
        let id = self.state.mw.add_or_merge_vertex(w);
        if id == before {
            self.state.mw.set_tag(id, Some(tag));
        }
        id
    }

    fn add_edge(&mut self, f: &Frame<'_>, a: usize, b: usize) {
        if a == b || self.state.mw.add_edge(a, b).is_err() {
            return;
        }
        let spec = &f.fused.spec;
        let pa = spec.world_to_px(&f.fused.pose, self.state.mw.vertex(a));
        let pb = spec.world_to_px(&f.fused.pose, self.state.mw.vertex(b));
        mark_segment(&mut self.state.history, pa, pb, self.cfg.history_width_px);
    }

    fn ensure_current(&mut self, f: &Frame<'_>, inst: &mut Instance) -> usize {
        match inst.cur {
            Some(v) => v,
            None => {
                let v = self.add_vertex(f, inst.v_t, inst.tag);
                inst.cur = Some(v);
                inst.members.insert(v);
                let p = inst.v_t;
                mark_segment(&mut self.state.history, p, p, self.cfg.history_width_px);
                v
            }
        }
    }

    fn emit_endpoint(&mut self, f: &Frame<'_>, inst: &Instance, diag: &mut FrameDiagnostics) {
        let heading = inst.heading.map(|h| f.fused.pose.rotate_to_world(h));
        self.state.pending.push(Candidate { pos: self.to_world(f, inst.v_t), provenance: Provenance::Endpoint, vertex: inst.cur, heading });
        diag.endpoints_emitted += 1;
    }

    /// Connects a stopped instance to an existing M_W vertex just ahead.
    fn try_attach(&mut self, f: &Frame<'_>, inst: &Instance) -> bool {
        let Some(cur) = inst.cur else { return false };
        let neigh: HashSet<usize> = self.state.mw.undirected_neighbors(cur).into_iter().collect();
        let cos_max = self.cfg.attach_angle_deg.to_radians().cos();
        let r = self.cfg.attach_radius_px * f.fused.spec.resolution;
        let here = self.state.mw.vertex(cur);
        let heading = inst.heading.map(|h| f.fused.pose.rotate_to_world(h).normalized());
        let mut best: Option<(f64, usize)> = None;
        for (i, &p) in self.state.mw.vertices().iter().enumerate() {
            if i == cur || inst.members.contains(&i) || neigh.contains(&i) || self.state.mw.tag(i) == Some(inst.tag) {
                continue;
            }
            let d = p.dist(here);
            if d > r || d == 0.0 {
                continue;
            }
            if let Some(h) = heading {
                if (p - here).normalized().dot(h) < cos_max {
                    continue;
                }
            }
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        if let Some((_, target)) = best {
            self.add_edge(f, cur, target);
            true
        } else {
            false
        }
    }

    /// Existing M_W vertex, outside the instance, near `target` and with an
    /// incident edge aligned to the move `from -> target`.
    fn find_join(&self, f: &Frame<'_>, inst: &Instance, from: Point, target: Point) -> Option<usize> {
        let spec = &f.fused.spec;
        let r = self.cfg.join_radius_px * spec.resolution;
        let world = self.to_world(f, target);
        let dir = f.fused.pose.rotate_to_world(target - from).normalized();
        let cos_max = self.cfg.join_angle_deg.to_radians().cos();
        let mw = &self.state.mw;
        let neigh: Vec<usize> = inst.cur.map(|c| mw.undirected_neighbors(c)).unwrap_or_default();
        let mut best: Option<(f64, usize)> = None;
        for (i, &p) in mw.vertices().iter().enumerate() {
            let d = p.dist(world);
            if d >= r || inst.members.contains(&i) || Some(i) == inst.cur || neigh.contains(&i) {
                continue;
            }
            let aligned = mw
                .out_neighbors(i)
                .iter()
                .map(|&k| (mw.vertex(k) - p).normalized())
                .chain(mw.in_neighbors(i).iter().map(|&k| (p - mw.vertex(k)).normalized()))
                .any(|e| e.dot(dir) >= cos_max);
            if aligned && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        best.map(|(_, i)| i)
    }

    fn run_instance(&mut self, f: &Frame<'_>, cand: Candidate, steps_frame: &mut usize, diag: &mut FrameDiagnostics) {
        let spec = f.fused.spec;
        let pose = f.fused.pose;
        let tag = self.state.next_tag;
        self.state.next_tag += 1;
        let mut inst = Instance {
            cur: cand.vertex,
            v_t: locate(&spec, &pose, cand.pos),
            heading: cand.heading.map(|h| pose.inverse().rotate_to_world(h)),
            tag,
            members: cand.vertex.into_iter().collect(),
        };
        diag.instances += 1;
        let half = (self.cfg.roi_size / 2) as f64;
        let mut steps = 0usize;
        loop {
            if steps >= self.cfg.max_steps_instance {
                diag.instance_budget_hits += 1;
                return;
            }
            if *steps_frame >= self.cfg.max_steps_frame {
                diag.frame_budget_hit = true;
                self.emit_endpoint(f, &inst, diag);
                return;
            }
            let roi = match crop_roi(f.fused, &self.state.history, inst.v_t, self.cfg.roi_size) {
                Ok(r) => r,
                Err(_) => return,
            };
            let step_id = self.state.step_counter;
            self.state.step_counter += 1;
            let ctx = StepContext {
                roi: &roi,
                v_t: inst.v_t,
                heading: inst.heading,
                fused: f.fused,
                history: &self.state.history,
                frame: f.index,
                step: step_id,
                theta_v: self.cfg.theta_v,
                max_vertices: self.cfg.max_vertices,
            };
            let out = self.predictor.predict(&ctx).and_then(|o| o.validate(half, self.cfg.max_vertices).map(|_| o));
            steps += 1;
            *steps_frame += 1;
            diag.steps += 1;
            let out = match out {
                Ok(o) => o,
                Err(e) => {
                    diag.predictor_errors += 1;
                    if e.is_protocol() {
                        diag.protocol_errors += 1;
                    }
                    return;
                }
            };
            self.hook.on_step(f.index, &ctx, &out);
            match policy(&out, self.cfg.theta_v, roi.center) {
                Action::Stop => {
                    diag.stops += 1;
                    if self.try_attach(f, &inst) {
                        diag.attaches += 1;
                    } else {
                        self.emit_endpoint(f, &inst, diag);
                    }
                    return;
                }
                Action::Move(target) => {
                    let target = self.hook.perturb(target);
                    if target.dist(inst.v_t) < 0.5 {
                        diag.degenerate_moves += 1;
                        diag.stops += 1;
                        self.emit_endpoint(f, &inst, diag);
                        return;
                    }
                    diag.moves += 1;
                    let cur = self.ensure_current(f, &mut inst);
                    let inside = spec.contains_px(target.y, target.x);
                    let next_px = if inside { target } else { clip_exit(inst.v_t, target, &spec) };
                    if let Some(w) = self.find_join(f, &inst, inst.v_t, next_px) {
                        self.add_edge(f, cur, w);
                        diag.joins += 1;
                        return;
                    }
                    inst.heading = Some(target - inst.v_t);
                    if next_px.dist(inst.v_t) >= 0.5 {
                        let v = self.add_vertex(f, next_px, tag);
                        self.add_edge(f, cur, v);
                        inst.members.insert(v);
                        inst.cur = Some(v);
                        inst.v_t = next_px;
                    }
                    if !inside {
                        diag.boundary_stops += 1;
                        self.emit_endpoint(f, &inst, diag);
                        return;
                    }
                }
                Action::Branch(targets) => {
                    diag.branches += 1;
                    let cur = self.ensure_current(f, &mut inst);
                    for t in targets {
                        let t = self.hook.perturb(t);
                        let p = if spec.contains_px(t.y, t.x) { t } else { clip_exit(inst.v_t, t, &spec) };
                        if p.dist(inst.v_t) < 0.5 {
                            continue;
                        }
                        if let Some(w) = self.find_join(f, &inst, inst.v_t, p) {
                            self.add_edge(f, cur, w);
                            diag.joins += 1;
                            continue;
                        }
                        let v = self.add_vertex(f, p, tag);
                        self.add_edge(f, cur, v);
                        inst.members.insert(v);
                        let heading = pose.rotate_to_world(t - inst.v_t);
                        self.state.push(Candidate {
                            pos: self.state.mw.vertex(v),
                            provenance: Provenance::Branch,
                            vertex: Some(v),
                            heading: Some(heading),
                        });
                    }
                    return;
                }
            }
        }
    }
}

/// Traces one frame: pops candidates until the queue is empty or the
/// frame budget runs out. Remaining endpoint and branch candidates are
/// carried to the next frame.
pub fn trace_frame<P: Predictor + ?Sized, H: AgentHook + ?Sized>(
    index: usize,
    fused: &BevGrid,
    state: &mut AgentState,
    predictor: &mut P,
    hook: &mut H,
    cfg: &AgentConfig,
) -> FrameDiagnostics {
    let mut diag = FrameDiagnostics { frame: index, candidates: state.queue.len(), ..Default::default() };
    let f = Frame { index, fused };
    let mut tracer = Tracer { cfg, predictor, hook, state };
    let mut steps_frame = 0usize;
    while let Some(c) = tracer.state.pop(cfg.queue) {
        if steps_frame >= cfg.max_steps_frame {
            diag.frame_budget_hit = true;
            if c.provenance != Provenance::Peak {
                tracer.state.pending.push(c);
            }
            continue;
        }
        let px = locate(&fused.spec, &fused.pose, c.pos);
        if !fused.spec.contains_px(px.y, px.x) {
            if c.provenance != Provenance::Peak {
                tracer.state.pending.push(c);
            }
            continue;
        }
        if c.provenance == Provenance::Peak && distance_to_graph(&tracer.state.mw, c.pos) < cfg.dedup_radius_m {
            continue;
        }
        tracer.run_instance(&f, c, &mut steps_frame, &mut diag);
    }
    diag
}

/// Runs the agent over a frame sequence and returns the cleaned M_W.
pub fn trace_sequence<P: Predictor + ?Sized>(
    frames: &[BevGrid],
    predictor: &mut P,
    cfg: &AgentConfig,
    fusion: &FusionConfig,
) -> Result<TraceResult, AgentError> {
    trace_sequence_with(frames, predictor, cfg, fusion, &mut NoHook)
}

pub fn trace_sequence_with<P: Predictor + ?Sized, H: AgentHook + ?Sized>(
    frames: &[BevGrid],
    predictor: &mut P,
    cfg: &AgentConfig,
    fusion: &FusionConfig,
    hook: &mut H,
) -> Result<TraceResult, AgentError> {
    let first = frames.first().ok_or(AgentError::NoFrames)?;
    cfg.validate(&first.spec)?;
    let mut state = AgentState::new(&first.spec, cfg.seed);
    let mut diagnostics = Diagnostics::default();
    for t in 0..frames.len() {
        let start = Instant::now();
        let fused = fuse_window(frames, t, fusion)?;
        state.history = render_history(&state.mw, &fused.pose, &fused.spec, cfg.history_width_px);
        let pending = std::mem::take(&mut state.pending);
        let leftover: Vec<Candidate> = state.queue.drain(..).collect();
        let mut cands = init_candidates(&frames[t], &pending, &state.mw, cfg);
        cands.extend(leftover);
        state.load(cands, cfg.queue);
        let mut d = trace_frame(t, &fused, &mut state, predictor, hook, cfg);
        d.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        diagnostics.total_steps += d.steps;
        diagnostics.total_predictor_errors += d.predictor_errors;
        diagnostics.frames.push(d);
    }
    let (graph, merged, pruned) = cleanup(&state.mw, cfg.dedup_radius_m);
    diagnostics.merged_endpoints = merged;
    diagnostics.pruned_spurs = pruned;
    Ok(TraceResult { graph, diagnostics })
}

/// Final clean-up of M_W: dangling vertices within `radius` of another
/// non-adjacent vertex are merged into it, then single-edge spurs hanging
/// off junctions are removed. Returns the graph and both counts.
pub fn cleanup(mw: &Graph, radius: f64) -> (Graph, usize, usize) {
    let n = mw.len();
    let mut target: Vec<usize> = (0..n).collect();
    let mut merged = 0;
    for i in 0..n {
        if mw.degree(i) != 1 {
            continue;
        }
        let neigh: HashSet<usize> = mw.undirected_neighbors(i).into_iter().collect();
        let p = mw.vertex(i);
        let best = (0..n)
            .filter(|&j| j != i && !neigh.contains(&j) && target[j] == j && mw.degree(j) > 0)
            .map(|j| (mw.vertex(j).dist(p), j))
            .filter(|&(d, _)| d < radius)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some((_, j)) = best {
            target[i] = j;
            merged += 1;
        }
    }
    let mut g = Graph::new();
    let mut remap = vec![usize::MAX; n];
    for i in 0..n {
        if target[i] == i {
            remap[i] = g.add_vertex_tagged(mw.vertex(i), mw.tag(i));
        }
    }
    for &(a, b) in mw.edges() {
        let (a, b) = (remap[target[a]], remap[target[b]]);
        if a != b {
            let _ = g.add_edge(a, b);
        }
    }
    // a spur is a single edge from a junction to a leaf, where the junction
    // still has two longer arms
    let leaf = |i: usize| g.degree(i) == 1;
    let mut keep = vec![true; g.len()];
    let mut pruned = 0;
    for i in 0..g.len() {
        if !leaf(i) {
            continue;
        }
        let nb = g.undirected_neighbors(i)[0];
        let arms = g.undirected_neighbors(nb).into_iter().filter(|&k| !leaf(k)).count();
        if g.is_junction(nb) && arms >= 2 {
            keep[i] = false;
            pruned += 1;
        }
    }
    // isolated vertices carry no centerline
    for (i, k) in keep.iter_mut().enumerate() {
        if g.degree(i) == 0 {
            *k = false;
        }
    }
    (g.induced(&keep), merged, pruned)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predict::RoiVertex;

    fn out(ps: &[f64]) -> PredictorOutput {
        PredictorOutput { vertices: ps.iter().enumerate().map(|(i, &p)| RoiVertex { x: i as f64 + 1.0, y: 0.0, p }).collect() }
    }

    #[test]
    fn policy_table() {
        let c = Point::new(10.0, 10.0);
        assert_eq!(policy(&out(&[0.1, 0.4]), 0.5, c), Action::Stop);
        assert_eq!(policy(&out(&[0.9]), 0.5, c), Action::Move(Point::new(11.0, 10.0)));
        assert!(matches!(policy(&out(&[0.9, 0.6, 0.5]), 0.5, c), Action::Branch(v) if v.len() == 3));
    }

    #[test]
    fn nms_keeps_higher_of_close_bumps() {
        let mut r = Raster::zeros(20, 20);
        r.set(5, 5, 0.8);
        r.set(5, 7, 0.9);
        r.set(15, 15, 0.5);
        let p = nms_peaks(&r, 0.3, 5.0);
        assert_eq!(p, vec![Point::new(7.0, 5.0), Point::new(15.0, 15.0)]);
        assert!(nms_peaks(&Raster::zeros(20, 20), 0.3, 5.0).is_empty());
    }

    #[test]
    fn init_excludes_traced_peaks() {
        let spec = GridSpec64::default();
        let mut g = BevGrid::empty(spec, Pose::identity(), 1);
        g.hi.set(100, 120, 1.0);
        g.hi.set(40, 40, 1.0);
        let mw = Graph::polyline(&[Point::new(5.0, 0.0), Point::new(6.0, 0.0)]);
        let c = init_candidates(&g, &[], &mw, &AgentConfig::default());
        assert_eq!(c.len(), 1);
        assert!(c[0].pos.dist(Point::new(-15.0, -15.0)) < 1e-9);
        assert!(init_candidates(&BevGrid::empty(spec, Pose::identity(), 1), &[], &mw, &AgentConfig::default()).is_empty());
    }

    #[test]
    fn crop_centre_and_corner() {
        let spec = GridSpec64::default();
        let mut g = BevGrid::empty(spec, Pose::identity(), 0);
        g.hl = Raster::filled(200, 200, 0.5);
        g.hl.set(100, 100, 0.9);
        let hist = Raster::zeros(200, 200);
        let r = crop_roi(&g, &hist, Point::new(100.2, 99.8), 64).unwrap();
        assert_eq!(r.channels, 3);
        assert_eq!(r.get(0, 32, 32), 0.9);
        assert!(r.channel(0).iter().all(|&v| v >= 0.5));
        let r = crop_roi(&g, &hist, Point::new(0.0, 0.0), 64).unwrap();
        let padded = r.channel(0).iter().filter(|&&v| v == 0.0).count();
        assert_eq!(padded, 64 * 64 - 32 * 32);
        assert!(crop_roi(&g, &hist, Point::new(-1.0, 5.0), 64).is_err());
    }

    #[test]
    fn cleanup_prunes_junction_spur() {
        let g = Graph::from_parts(
            vec![
                Point::new(-2.0, 0.0),
                Point::new(0.0, 0.0),
                Point::new(2.0, 0.0),
                Point::new(4.0, 0.0),
                Point::new(6.0, 0.0),
                Point::new(2.0, 2.0),
            ],
            &[(0, 1), (1, 2), (2, 3), (3, 4), (2, 5)],
        )
        .unwrap();
        let (c, _, pruned) = cleanup(&g, 0.1);
        assert_eq!(pruned, 1);
        assert_eq!(c.len(), 5);
        assert_eq!(c.edge_count(), 4);
    }
}
