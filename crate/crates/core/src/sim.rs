//! Synthetic scenes: ground-truth centerline graphs, ego trajectories and
//! per-frame BEV rasters standing in for a learned BEV segmentation stage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bev::BevGrid;
use crate::geom::{point_segment_distance, EgoPose};
use crate::raster::Raster;
use crate::{Graph, GridSpec64, Point, Pose};

/// Vertex spacing (meters) of generated centerlines.
pub const VERTEX_STEP: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("unsatisfiable scene: {0}")]
    Unsatisfiable(String),
}

fn cfg_err(field: &str, message: impl Into<String>) -> SimError {
    SimError::Config { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    Straight,
    Curve,
    SplitMerge,
    FourWay,
    /// Any of the other kinds with randomized lane count, curvature,
    /// crossing angle and feature placement.
    Composite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Gaussian falloff of the centerline heatmap, pixels.
    pub blur_sigma_px: f64,
    /// Uniform additive noise amplitude.
    pub additive: f64,
    /// Probability that a heatmap patch is zeroed.
    pub dropout: f64,
    /// Side length of dropout patches, pixels.
    pub patch_px: usize,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { blur_sigma_px: 1.5, additive: 0.0, dropout: 0.0, patch_px: 16 }
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn moderate() -> Self {
        Self { blur_sigma_px: 1.5, additive: 0.1, dropout: 0.05, patch_px: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub kind: SceneKind,
    /// Lanes per road (both travel directions together).
    pub lanes: usize,
    /// Lateral distance between neighbouring lanes, meters.
    pub lane_spacing: f64,
    /// Length of each road, meters.
    pub extent: f64,
    /// Ego displacement per frame, meters.
    pub ego_speed: f64,
    pub frames: usize,
    /// Bound of the uniform lateral ego offset, meters.
    pub ego_jitter: f64,
    pub noise: NoiseModel,
    pub seed: u64,
    pub grid: GridSpec64,
    /// Gaussian sigma of initial-vertex bumps, pixels.
    pub vertex_sigma_px: f64,
    pub orientation_channel: bool,
    /// Rotate the whole scene by a random angle.
    pub rotate: bool,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            kind: SceneKind::Composite,
            lanes: 2,
            lane_spacing: 3.5,
            extent: 120.0,
            ego_speed: 1.5,
            frames: 40,
            ego_jitter: 0.0,
            noise: NoiseModel::default(),
            seed: 0,
            grid: GridSpec64::default(),
            vertex_sigma_px: 2.0,
            orientation_channel: true,
            rotate: true,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.frames < 1 {
            return Err(cfg_err("scene.frames", "must be >= 1"));
        }
        if !(self.extent > 0.0) || !self.extent.is_finite() {
            return Err(cfg_err("scene.extent", format!("must be > 0, got {}", self.extent)));
        }
        if self.lanes < 1 {
            return Err(cfg_err("scene.lanes", "must be >= 1"));
        }
        if !(self.lane_spacing > 0.0) {
            return Err(cfg_err("scene.lane_spacing", "must be > 0"));
        }
        if !(self.ego_speed >= 0.0) {
            return Err(cfg_err("scene.ego_speed", "must be >= 0"));
        }
        if !(self.ego_jitter >= 0.0) {
            return Err(cfg_err("scene.ego_jitter", "must be >= 0"));
        }
        if !(self.noise.blur_sigma_px > 0.0) {
            return Err(cfg_err("scene.noise.blur_sigma_px", "must be > 0"));
        }
        for (name, v) in [("additive", self.noise.additive), ("dropout", self.noise.dropout)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(cfg_err(&format!("scene.noise.{name}"), format!("must be in [0,1], got {v}")));
            }
        }
        if self.noise.patch_px == 0 {
            return Err(cfg_err("scene.noise.patch_px", "must be > 0"));
        }
        if !(self.vertex_sigma_px > 0.0) {
            return Err(cfg_err("scene.vertex_sigma_px", "must be > 0"));
        }
        self.grid.validate().map_err(|m| cfg_err("scene.grid", m))
    }

    pub fn raster_config(&self) -> RasterConfig {
        RasterConfig { noise: self.noise.clone(), vertex_sigma_px: self.vertex_sigma_px, orientation_channel: self.orientation_channel }
    }

    pub fn feature_channels(&self) -> usize {
        1 + usize::from(self.orientation_channel)
    }
}

/// Ground truth and ego trajectory of a generated scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub graph: Graph,
    pub poses: Vec<Pose>,
    /// Concrete kind (resolves `Composite`).
    pub kind: SceneKind,
}

impl Scene {
    /// Renders every frame with the config's noise model.
    pub fn render(&self, cfg: &SceneConfig) -> Vec<BevGrid> {
        let rc = cfg.raster_config();
        self.poses
            .iter()
            .enumerate()
            .map(|(t, pose)| rasterize_frame(&self.graph, pose, &cfg.grid, &rc, derive_seed(cfg.seed, 1, t as u64)))
            .collect()
    }
}

/// Mixes a base seed with a stream id and index (splitmix64 finaliser).
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(0x94D0_49BB_1331_11EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Builder {
    g: Graph,
}

impl Builder {
    fn new() -> Self {
        Self { g: Graph::new() }
    }

    /// Adds the polyline `pts`, reusing `first`/`last` vertex ids when given.
    fn chain(&mut self, pts: &[Point], first: Option<usize>, last: Option<usize>) -> (usize, usize) {
        assert!(pts.len() >= 2);
        let mut ids = Vec::with_capacity(pts.len());
        ids.push(first.unwrap_or_else(|| self.g.add_vertex(pts[0])));
        for &p in &pts[1..pts.len() - 1] {
            ids.push(self.g.add_vertex(p));
        }
        ids.push(last.unwrap_or_else(|| self.g.add_vertex(pts[pts.len() - 1])));
        for w in ids.windows(2) {
            self.g.add_edge(w[0], w[1]).expect("chain edge");
        }
        (ids[0], ids[ids.len() - 1])
    }
}

fn sample_line(a: Point, b: Point) -> Vec<Point> {
    let n = (a.dist(b) / VERTEX_STEP).ceil().max(1.0) as usize;
    (0..=n).map(|k| a.lerp(b, k as f64 / n as f64)).collect()
}

fn sample_fn(f: impl Fn(f64) -> Point, approx_len: f64) -> Vec<Point> {
    let n = (approx_len / VERTEX_STEP).ceil().max(1.0) as usize;
    (0..=n).map(|k| f(k as f64 / n as f64)).collect()
}

fn bezier(p0: Point, p1: Point, p2: Point, p3: Point) -> impl Fn(f64) -> Point {
    move |t| {
        let u = 1.0 - t;
        p0 * (u * u * u) + p1 * (3.0 * u * u * t) + p2 * (3.0 * u * t * t) + p3 * (t * t * t)
    }
}

fn lane_offsets(n: usize, spacing: f64) -> Vec<f64> {
    (0..n).map(|k| (k as f64 - (n as f64 - 1.0) / 2.0) * spacing).collect()
}

/// Lanes `0..forward_count` travel along the road direction.
fn forward_count(n: usize) -> usize {
    n.div_ceil(2)
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

struct Layout {
    graph: Graph,
    ego_path: Vec<Point>,
}

fn gen_straight(lanes: usize, spacing: f64, extent: f64) -> Layout {
    let half = extent / 2.0;
    let nf = forward_count(lanes);
    let mut b = Builder::new();
    let mut ego_path = Vec::new();
    for (k, &y) in lane_offsets(lanes, spacing).iter().enumerate() {
        let mut pts = sample_line(Point::new(-half, y), Point::new(half, y));
        if k >= nf {
            pts.reverse();
        }
        b.chain(&pts, None, None);
        if k + 1 == nf {
            ego_path = pts;
        }
    }
    Layout { graph: b.g, ego_path }
}

fn gen_curve(lanes: usize, spacing: f64, extent: f64, radius: f64) -> Layout {
    let half = extent / 2.0;
    let nf = forward_count(lanes);
    let mut b = Builder::new();
    let mut ego_path = Vec::new();
    for (k, &y) in lane_offsets(lanes, spacing).iter().enumerate() {
        let f = |t: f64| {
            let s = -half + t * extent;
            let a = s / radius;
            let base = Point::new(radius * a.sin(), radius * (1.0 - a.cos()));
            base + Point::new(-a.sin(), a.cos()) * y
        };
        let mut pts = sample_fn(f, extent);
        if k >= nf {
            pts.reverse();
        }
        b.chain(&pts, None, None);
        if k + 1 == nf {
            ego_path = pts;
        }
    }
    Layout { graph: b.g, ego_path }
}

fn gen_split_merge(lanes: usize, spacing: f64, extent: f64, x_split: f64, span: f64) -> Layout {
    let half = extent / 2.0;
    let nf = forward_count(lanes);
    let offsets = lane_offsets(lanes, spacing);
    let transition = (span / 2.0).min(15.0);
    let x_merge = x_split + span;
    let mut b = Builder::new();
    let mut ego_path = Vec::new();
    for (k, &y) in offsets.iter().enumerate() {
        if k == 0 {
            let s = b.g.add_vertex(Point::new(x_split, y));
            let m = b.g.add_vertex(Point::new(x_merge, y));
            let p1 = sample_line(Point::new(-half, y), Point::new(x_split, y));
            let p2 = sample_line(Point::new(x_split, y), Point::new(x_merge, y));
            let p3 = sample_line(Point::new(x_merge, y), Point::new(half, y));
            b.chain(&p1, None, Some(s));
            b.chain(&p2, Some(s), Some(m));
            b.chain(&p3, Some(m), None);
            let side = |x: f64| {
                let w = smoothstep((x - x_split) / transition).min(smoothstep((x_merge - x) / transition));
                Point::new(x, y - spacing * w)
            };
            let pts = sample_fn(|t| side(x_split + t * span), span);
            b.chain(&pts, Some(s), Some(m));
            if nf == 1 {
                ego_path = [&p1[..], &p2[1..], &p3[1..]].concat();
            }
        } else {
            let mut pts = sample_line(Point::new(-half, y), Point::new(half, y));
            if k >= nf {
                pts.reverse();
            }
            b.chain(&pts, None, None);
            if k + 1 == nf {
                ego_path = pts;
            }
        }
    }
    Layout { graph: b.g, ego_path }
}

struct FourWayParams {
    lanes: usize,
    spacing: f64,
    extent: f64,
    center_x: f64,
    cross_angle: f64,
}

fn gen_four_way(p: &FourWayParams) -> Layout {
    let half = p.extent / 2.0;
    let n = p.lanes;
    let nf = forward_count(n);
    let offsets = lane_offsets(n, p.spacing);
    let origin = Point::new(p.center_x, 0.0);
    let dirs = [Point::new(1.0, 0.0), Point::new(p.cross_angle.cos(), p.cross_angle.sin())];
    let normals = [Point::new(0.0, 1.0), Point::new(-p.cross_angle.sin(), p.cross_angle.cos())];
    let box_half = (n as f64 * p.spacing / 2.0 + 4.0) / p.cross_angle.sin().abs().max(0.3);

    struct Lane {
        road: usize,
        forward: bool,
        y: f64,
        travel: Point,
        in_pt: Point,
        out_pt: Point,
        in_id: usize,
        out_id: usize,
    }

    let mut b = Builder::new();
    let mut lanes_out: Vec<Lane> = Vec::new();
    let mut ego_path = Vec::new();
    for road in 0..2 {
        for (k, &y) in offsets.iter().enumerate() {
            let forward = k < nf;
            let line = |t: f64| origin + normals[road] * y + dirs[road] * t;
            let sgn = if forward { 1.0 } else { -1.0 };
            let far_start = line(-sgn * half);
            let in_pt = line(-sgn * box_half);
            let out_pt = line(sgn * box_half);
            let far_end = line(sgn * half);
            let approach = sample_line(far_start, in_pt);
            let exit = sample_line(out_pt, far_end);
            let (_, in_id) = b.chain(&approach, None, None);
            let (out_id, _) = b.chain(&exit, None, None);
            let straight = sample_line(in_pt, out_pt);
            b.chain(&straight, Some(in_id), Some(out_id));
            if road == 0 && k + 1 == nf {
                ego_path = [&approach[..], &straight[1..], &exit[1..]].concat();
            }
            lanes_out.push(Lane { road, forward, y, travel: dirs[road] * sgn, in_pt, out_pt, in_id, out_id });
        }
    }

    // rightmost lane of a travel group has the smallest offset along the
    // travel-left normal
    let extreme = |road: usize, forward: bool, rightmost: bool| -> Option<usize> {
        let key = |l: &Lane| if forward { l.y } else { -l.y };
        let it = lanes_out.iter().enumerate().filter(|(_, l)| l.road == road && l.forward == forward);
        if rightmost {
            it.min_by(|a, b| key(a.1).total_cmp(&key(b.1))).map(|(i, _)| i)
        } else {
            it.max_by(|a, b| key(a.1).total_cmp(&key(b.1))).map(|(i, _)| i)
        }
    };
    let groups: Vec<(usize, bool)> = (0..2).flat_map(|r| [(r, true), (r, false)]).collect();
    let mut turns = Vec::new();
    for &(road, fwd) in &groups {
        let left_enabled = fwd;
        for &(road2, fwd2) in &groups {
            if road2 == road {
                continue;
            }
            let (Some(src_r), Some(dst_r)) = (extreme(road, fwd, true), extreme(road2, fwd2, true)) else {
                continue;
            };
            let turn = lanes_out[src_r].travel.cross(lanes_out[dst_r].travel);
            if turn < 0.0 {
                turns.push((src_r, dst_r));
            } else if left_enabled {
                if let (Some(s), Some(d)) = (extreme(road, fwd, false), extreme(road2, fwd2, false)) {
                    turns.push((s, d));
                }
            }
        }
    }
    for (s, d) in turns {
        let (src, dst) = (&lanes_out[s], &lanes_out[d]);
        let span = src.in_pt.dist(dst.out_pt);
        let h = 0.55 * span / std::f64::consts::SQRT_2;
        let f = bezier(src.in_pt, src.in_pt + src.travel * h, dst.out_pt - dst.travel * h, dst.out_pt);
        let pts = sample_fn(f, span * 1.2);
        let (sid, did) = (src.in_id, dst.out_id);
        b.chain(&pts, Some(sid), Some(did));
    }
    Layout { graph: b.g, ego_path }
}

fn poses_along(path: &[Point], cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Pose>, SimError> {
    let mut cum = vec![0.0];
    for w in path.windows(2) {
        cum.push(cum.last().unwrap() + w[0].dist(w[1]));
    }
    let total = *cum.last().unwrap();
    let travel = cfg.ego_speed * (cfg.frames as f64 - 1.0);
    if travel > total {
        return Err(SimError::Unsatisfiable(format!(
            "ego travel {travel:.1} m exceeds the {total:.1} m lane available (extent {})",
            cfg.extent
        )));
    }
    let start = (total - travel) / 2.0;
    let mut poses = Vec::with_capacity(cfg.frames);
    let mut seg = 0;
    for t in 0..cfg.frames {
        let s = start + t as f64 * cfg.ego_speed;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let (a, b) = (path[seg], path[seg + 1]);
        let len = cum[seg + 1] - cum[seg];
        let u = if len > 0.0 { ((s - cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        let dir = (b - a).normalized();
        let mut p = a.lerp(b, u);
        if cfg.ego_jitter > 0.0 {
            let off = rng.gen_range(-cfg.ego_jitter..=cfg.ego_jitter);
            p += Point::new(-dir.y, dir.x) * off;
        }
        poses.push(EgoPose::new(p.x, p.y, dir.y.atan2(dir.x)));
    }
    Ok(poses)
}

/// Generates the ground-truth graph and ego poses of a scene.
pub fn generate_scene(cfg: &SceneConfig) -> Result<Scene, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0, 0));
    let mut kind = cfg.kind;
    let mut lanes = cfg.lanes;
    let mut cross_angle = std::f64::consts::FRAC_PI_2;
    if kind == SceneKind::Composite {
        kind = [SceneKind::Straight, SceneKind::Curve, SceneKind::SplitMerge, SceneKind::FourWay][rng.gen_range(0..4)];
        lanes = rng.gen_range(1..=3);
        cross_angle = rng.gen_range(65f64..=115.0).to_radians();
    }
    let extent = cfg.extent;
    let layout = match kind {
        SceneKind::Straight => gen_straight(lanes, cfg.lane_spacing, extent),
        SceneKind::Curve => {
            let r = rng.gen_range(50.0..150.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            gen_curve(lanes, cfg.lane_spacing, extent, r)
        }
        SceneKind::SplitMerge => {
            let span = rng.gen_range(30.0..45.0f64).min(extent * 0.8);
            let lo = -extent / 2.0 + 1.0;
            let hi = (extent / 2.0 - span - 1.0).max(lo);
            let x_split = rng.gen_range(-25.0..-10.0f64).clamp(lo, hi);
            if span < 4.0 {
                return Err(SimError::Unsatisfiable(format!("extent {extent} too short for a split")));
            }
            gen_split_merge(lanes, cfg.lane_spacing, extent, x_split, span)
        }
        SceneKind::FourWay => {
            let lanes = lanes.min(2);
            let params = FourWayParams { lanes, spacing: cfg.lane_spacing, extent, center_x: rng.gen_range(-8.0..8.0), cross_angle };
            let box_half = lanes as f64 * cfg.lane_spacing / 2.0 + 4.0;
            if extent / 2.0 <= box_half + VERTEX_STEP + params.center_x.abs() {
                return Err(SimError::Unsatisfiable(format!("extent {extent} too short for an intersection")));
            }
            gen_four_way(&params)
        }
        SceneKind::Composite => unreachable!(),
    };
    let theta = if cfg.rotate { rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI) } else { 0.0 };
    let rot = Pose::new(0.0, 0.0, theta);
    let graph = layout.graph.map_points(|p| rot.ego_to_world(p));
    let path: Vec<Point> = layout.ego_path.iter().map(|&p| rot.ego_to_world(p)).collect();
    let poses = poses_along(&path, cfg, &mut rng)?;
    Ok(Scene { graph, poses, kind })
}

/// Rendering parameters for `rasterize_frame`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterConfig {
    pub noise: NoiseModel,
    pub vertex_sigma_px: f64,
    pub orientation_channel: bool,
}

impl Default for RasterConfig {
    fn default() -> Self {
        SceneConfig::default().raster_config()
    }
}

fn stamp_gaussian(r: &mut Raster, center: Point, sigma: f64) {
    let reach = 4.0 * sigma;
    let (h, w) = (r.height() as f64, r.width() as f64);
    let r0 = (center.y - reach).floor().max(0.0);
    let r1 = (center.y + reach).ceil().min(h - 1.0);
    let c0 = (center.x - reach).floor().max(0.0);
    let c1 = (center.x + reach).ceil().min(w - 1.0);
    if r0 > r1 || c0 > c1 {
        return;
    }
    for row in r0 as usize..=r1 as usize {
        for col in c0 as usize..=c1 as usize {
            let d2 = center.dist_sq(Point::new(col as f64, row as f64));
            r.max_at(row, col, (-d2 / (2.0 * sigma * sigma)).exp() as f32);
        }
    }
}

/// Renders one BEV frame of `gt` seen from `pose`.
///
/// The graph is first expressed in pixel coordinates of the ego grid and
/// rendered there, so rendering under a pose equals rendering the
/// pose-transformed graph under the identity pose.
pub fn rasterize_frame(gt: &Graph, pose: &Pose, spec: &GridSpec64, rc: &RasterConfig, seed: u64) -> BevGrid {
    let (h, w) = (spec.height, spec.width);
    let px = gt.map_points(|p| spec.world_to_px(pose, p));
    let sigma = rc.noise.blur_sigma_px;
    let reach = 4.0 * sigma;
    let mut hl = Raster::zeros(h, w);
    let mut orient = Raster::zeros(h, w);
    for &(ia, ib) in px.edges() {
        let (a, b) = (px.vertex(ia), px.vertex(ib));
        let r0 = (a.y.min(b.y) - reach).floor().max(0.0);
        let r1 = (a.y.max(b.y) + reach).ceil().min(h as f64 - 1.0);
        let c0 = (a.x.min(b.x) - reach).floor().max(0.0);
        let c1 = (a.x.max(b.x) + reach).ceil().min(w as f64 - 1.0);
        if r0 > r1 || c0 > c1 {
            continue;
        }
        let d = b - a;
        let angle = ((d.y.atan2(d.x) + std::f64::consts::PI) / (2.0 * std::f64::consts::PI)) as f32;
        for row in r0 as usize..=r1 as usize {
            for col in c0 as usize..=c1 as usize {
                let dist = point_segment_distance(Point::new(col as f64, row as f64), a, b);
                let v = (-dist * dist / (2.0 * sigma * sigma)).exp() as f32;
                if v > hl.get(row, col) {
                    hl.set(row, col, v);
                    orient.set(row, col, angle);
                }
            }
        }
    }
    for (o, &v) in orient.data_mut().iter_mut().zip(hl.data()) {
        if v < 0.05 {
            *o = 0.0;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if rc.noise.additive > 0.0 {
        let a = rc.noise.additive as f32;
        for v in hl.data_mut() {
            *v = (*v + rng.gen_range(-a..=a)).clamp(0.0, 1.0);
        }
    }
    if rc.noise.dropout > 0.0 {
        let p = rc.noise.patch_px;
        for pr in (0..h).step_by(p) {
            for pc in (0..w).step_by(p) {
                if rng.gen::<f64>() < rc.noise.dropout {
                    for row in pr..(pr + p).min(h) {
                        for col in pc..(pc + p).min(w) {
                            hl.set(row, col, 0.0);
                            orient.set(row, col, 0.0);
                        }
                    }
                }
            }
        }
    }

    let mut hi = Raster::zeros(h, w);
    for c in initial_vertex_truth_px(&px, spec) {
        stamp_gaussian(&mut hi, c, rc.vertex_sigma_px);
    }
    let mut features = vec![hl.clone()];
    if rc.orientation_channel {
        features.push(orient);
    }
    BevGrid { spec: *spec, pose: *pose, hl, hi, features }
}

/// Points where the heatmap of initial vertices should fire, in pixel
/// coordinates (x = col, y = row): boundary crossings where a directed
/// edge enters the grid, plus lane starts (in-degree 0) inside the grid.
pub fn initial_vertex_truth(gt: &Graph, pose: &Pose, spec: &GridSpec64) -> Vec<Point> {
    let px = gt.map_points(|p| spec.world_to_px(pose, p));
    initial_vertex_truth_px(&px, spec)
}

fn initial_vertex_truth_px(px: &Graph, spec: &GridSpec64) -> Vec<Point> {
    let (xmax, ymax) = (spec.max_col(), spec.max_row());
    let inside = |p: Point| spec.contains_px(p.y, p.x);
    let mut out = Vec::new();
    for &(ia, ib) in px.edges() {
        let (a, b) = (px.vertex(ia), px.vertex(ib));
        if inside(a) {
            continue;
        }
        let d = b - a;
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        let mut ok = true;
        for (p, q) in [(-d.x, a.x), (d.x, xmax - a.x), (-d.y, a.y), (d.y, ymax - a.y)] {
            if p == 0.0 {
                if q < 0.0 {
                    ok = false;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
            }
        }
        if ok && t0 <= t1 && (t1 > t0 || inside(b)) {
            out.push(a.lerp(b, t0));
        }
    }
    for i in 0..px.len() {
        if px.in_degree(i) == 0 && inside(px.vertex(i)) {
            out.push(px.vertex(i));
        }
    }
    out
}

/// Part of `gt` inside the union of the BEV footprints of `poses`,
/// resampled at `spacing` meters.
pub fn clip_to_footprint(gt: &Graph, poses: &[Pose], spec: &GridSpec64, spacing: f64) -> Graph {
    let dense = gt.resample(spacing).expect("positive spacing");
    let keep: Vec<bool> = dense
        .vertices()
        .iter()
        .map(|&p| {
            poses.iter().any(|pose| {
                let c = spec.ego_to_pixel(pose.world_to_ego(p));
                c.in_bounds
            })
        })
        .collect();
    dense.induced(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: SceneKind, lanes: usize) -> SceneConfig {
        SceneConfig { kind, lanes, ..SceneConfig::default() }
    }

    #[test]
    fn straight_single_lane_is_polyline_with_colinear_poses() {
        let s = generate_scene(&cfg(SceneKind::Straight, 1)).unwrap();
        let g = &s.graph;
        assert_eq!(g.edge_count(), g.len() - 1);
        assert!((0..g.len()).all(|i| g.in_degree(i) <= 1 && g.out_degree(i) <= 1));
        assert_eq!(s.poses.len(), 40);
        let a = s.poses[0].position();
        let dir = (s.poses[39].position() - a).normalized();
        for p in &s.poses {
            assert!((p.position() - a).cross(dir).abs() < 1e-9);
            assert!((p.yaw - s.poses[0].yaw).abs() < 1e-9);
        }
    }

    #[test]
    fn four_way_has_branching_junctions() {
        let s = generate_scene(&cfg(SceneKind::FourWay, 2)).unwrap();
        let g = &s.graph;
        assert!((0..g.len()).any(|i| g.out_degree(i) >= 2));
        assert!((0..g.len()).any(|i| g.in_degree(i) >= 2));
        assert!(g.validate(None).is_ok());
    }

    #[test]
    fn split_merge_has_split_and_merge() {
        let s = generate_scene(&cfg(SceneKind::SplitMerge, 2)).unwrap();
        let g = &s.graph;
        assert_eq!((0..g.len()).filter(|&i| g.out_degree(i) == 2).count(), 1);
        assert_eq!((0..g.len()).filter(|&i| g.in_degree(i) == 2).count(), 1);
    }

    #[test]
    fn deterministic_for_seed() {
        let c = SceneConfig { seed: 7, ..SceneConfig::default() };
        assert_eq!(generate_scene(&c).unwrap(), generate_scene(&c).unwrap());
    }

    #[test]
    fn rejects_bad_extent() {
        let c = SceneConfig { extent: -1.0, ..SceneConfig::default() };
        assert!(matches!(generate_scene(&c), Err(SimError::Config { field, .. }) if field == "scene.extent"));
        let c = SceneConfig { extent: 30.0, kind: SceneKind::Straight, ..SceneConfig::default() };
        assert!(matches!(generate_scene(&c), Err(SimError::Unsatisfiable(_))));
    }

    #[test]
    fn empty_graph_renders_zero() {
        let g = rasterize_frame(&Graph::new(), &Pose::identity(), &GridSpec64::default(), &RasterConfig::default(), 1);
        assert_eq!(g.hl.max_value(), 0.0);
        assert_eq!(g.hi.max_value(), 0.0);
    }

    #[test]
    fn full_dropout_zeroes_heatmap() {
        let s = generate_scene(&cfg(SceneKind::Straight, 2)).unwrap();
        let rc = RasterConfig { noise: NoiseModel { dropout: 1.0, ..NoiseModel::default() }, ..RasterConfig::default() };
        let g = rasterize_frame(&s.graph, &s.poses[5], &GridSpec64::default(), &rc, 3);
        assert_eq!(g.hl.max_value(), 0.0);
        assert!(g.validate().is_ok());
    }

    #[test]
    fn lane_start_inside_grid_is_initial_vertex() {
        let g = Graph::polyline(&[Point::new(0.0, 0.0), Point::new(10.0, 0.0)]);
        let pts = initial_vertex_truth(&g, &Pose::identity(), &GridSpec64::default());
        assert_eq!(pts, vec![Point::new(100.0, 100.0)]);
    }

    #[test]
    fn crossing_lane_enters_once_on_upstream_boundary() {
        let g = Graph::polyline(&[Point::new(-40.0, 2.0), Point::new(40.0, 2.0)]);
        let pts = initial_vertex_truth(&g, &Pose::identity(), &GridSpec64::default());
        assert_eq!(pts.len(), 1);
        assert!((pts[0].x - 0.0).abs() < 1e-9 && (pts[0].y - 108.0).abs() < 1e-9);
    }
}
