#![allow(dead_code)]

use lanegraph::metrics::{f1, MetricConfig};
use lanegraph::{Graph, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random connected-ish graph in pixel units with `n` vertices.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> Graph {
    let mut g = Graph::new();
    for _ in 0..n {
        g.add_vertex(Point::new(rng.gen_range(0.0..extent), rng.gen_range(0.0..extent)));
    }
    for v in 1..n {
        let u = rng.gen_range(0..v);
        if rng.gen_bool(0.5) {
            g.add_edge(u, v).unwrap();
        } else {
            g.add_edge(v, u).unwrap();
        }
    }
    for _ in 0..n / 4 {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b && !g.has_edge(b, a) {
            g.add_edge(a, b).unwrap();
        }
    }
    g
}

/// A prediction near `gt`: jittered copy of a random subset plus clutter.
pub fn random_prediction(rng: &mut ChaCha8Rng, gt: &Graph, extent: f64) -> Graph {
    let mut g = Graph::new();
    let mut map = vec![None; gt.len()];
    for (i, &p) in gt.vertices().iter().enumerate() {
        if rng.gen_bool(0.75) {
            let j = Point::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            map[i] = Some(g.add_vertex(p + j));
        }
    }
    for &(a, b) in gt.edges() {
        if let (Some(x), Some(y)) = (map[a], map[b]) {
            if rng.gen_bool(0.8) {
                g.add_edge(x, y).unwrap();
            }
        }
    }
    let extra = rng.gen_range(0..6);
    for _ in 0..extra {
        let v = g.add_vertex(Point::new(rng.gen_range(0.0..extent), rng.gen_range(0.0..extent)));
        if v > 0 {
            g.add_edge(rng.gen_range(0..v), v).unwrap();
        }
    }
    g
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// All-pairs shortest paths by Floyd-Warshall.
fn apsp(g: &Graph, directed: bool) -> Vec<Vec<f64>> {
    let n = g.len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for &(a, b) in g.edges() {
        let w = g.vertex(a).dist(g.vertex(b));
        d[a][b] = d[a][b].min(w);
        if !directed {
            d[b][a] = d[b][a].min(w);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// (P-P, P-R, P-F, T-P, T-R, T-F) computed by exhaustive search on graphs
/// already in pixel units.
pub fn brute_force_scores(pred: &Graph, gt: &Graph, cfg: &MetricConfig) -> [f64; 6] {
    let delta = cfg.delta_px;
    let close = |a: Point, b: Point| a.dist(b) < delta;
    let pp = if pred.is_empty() {
        0.0
    } else {
        pred.vertices().iter().filter(|&&p| gt.vertices().iter().any(|&g| close(p, g))).count() as f64 / pred.len() as f64
    };
    let pr = if gt.is_empty() {
        0.0
    } else {
        gt.vertices().iter().filter(|&&g| pred.vertices().iter().any(|&p| close(p, g))).count() as f64 / gt.len() as f64
    };
    if pred.is_empty() || gt.is_empty() {
        return [pp, pr, f1(pp, pr), 0.0, 0.0, 0.0];
    }
    let dg = apsp(gt, cfg.directed);
    let dp = apsp(pred, cfg.directed);
    let (mut sp, mut sr, mut sf) = (0.0, 0.0, 0.0);
    for q in 0..gt.len() {
        let qp = gt.vertex(q);
        let mut best = 0;
        for i in 1..pred.len() {
            if pred.vertex(i).dist_sq(qp) < pred.vertex(best).dist_sq(qp) {
                best = i;
            }
        }
        let gb: Vec<usize> = (0..gt.len()).filter(|&v| dg[q][v] <= cfg.epsilon_px).collect();
        let pb: Vec<usize> = (0..pred.len()).filter(|&v| dp[best][v] <= cfg.epsilon_px).collect();
        let p = pb.iter().filter(|&&v| gb.iter().any(|&u| close(pred.vertex(v), gt.vertex(u)))).count() as f64 / pb.len() as f64;
        let r = gb.iter().filter(|&&u| pb.iter().any(|&v| close(pred.vertex(v), gt.vertex(u)))).count() as f64 / gb.len() as f64;
        sp += p;
        sr += r;
        sf += f1(p, r);
    }
    let n = gt.len() as f64;
    [pp, pr, f1(pp, pr), sp / n, sr / n, sf / n]
}

/// A generated scene with its rendered frames and footprint-clipped truth.
pub struct Fixture {
    pub cfg: lanegraph::sim::SceneConfig,
    pub scene: lanegraph::sim::Scene,
    pub frames: Vec<lanegraph::bev::BevGrid>,
    pub truth: Graph,
}

pub fn fixture(cfg: lanegraph::sim::SceneConfig) -> Fixture {
    use lanegraph::sim::{clip_to_footprint, generate_scene};
    let scene = generate_scene(&cfg).unwrap();
    let frames = scene.render(&cfg);
    let truth = clip_to_footprint(&scene.graph, &scene.poses, &cfg.grid, 0.25);
    Fixture { cfg, scene, frames, truth }
}

/// Grid whose channels sample smooth world-anchored fields, so warps of
/// it can be compared like with like.
pub fn smooth_grid(spec: lanegraph::GridSpec64, pose: lanegraph::Pose, phase: f64) -> lanegraph::bev::BevGrid {
    let mut g = lanegraph::bev::BevGrid::empty(spec, pose, 1);
    for r in 0..spec.height {
        for c in 0..spec.width {
            let p = spec.px_to_world(&pose, Point::new(c as f64, r as f64));
            let v = 0.5 + 0.25 * (0.15 * p.x + phase).sin() + 0.25 * (0.11 * p.y).cos();
            g.hl.set(r, c, v as f32);
            g.hi.set(r, c, (0.5 + 0.5 * (0.07 * (p.x + p.y)).sin()) as f32);
            g.features[0].set(r, c, (v * v) as f32);
        }
    }
    g
}

/// Largest channel difference between a frame and its round trip through
/// `via`, over pixels whose bilinear support stayed inside both grids.
pub fn double_warp_error(a: &lanegraph::bev::BevGrid, via: lanegraph::Pose) -> f32 {
    use lanegraph::fusion::warp_grid;
    let there = warp_grid(a, &via);
    let b = lanegraph::bev::BevGrid::from_channels(a.spec, via, there.channels.clone());
    let back = warp_grid(&b, &a.pose);
    let (h, w) = (a.spec.height, a.spec.width);
    let mut worst = 0f32;
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            if back.mask.get(r, c) == 0.0 {
                continue;
            }
            let q = a.spec.world_to_px(&via, a.spec.px_to_world(&a.pose, Point::new(c as f64, r as f64)));
            let ok = |x: f64, y: f64| there.mask.bilinear(y, x).is_some_and(|m| m >= 1.0);
            if !(ok(q.x.floor(), q.y.floor()) && ok(q.x.ceil(), q.y.ceil()) && ok(q.x.floor(), q.y.ceil()) && ok(q.x.ceil(), q.y.floor())) {
                continue;
            }
            for (x, y) in back.channels.iter().zip(a.channels()) {
                worst = worst.max((x.get(r, c) - y.get(r, c)).abs());
            }
        }
    }
    worst
}
