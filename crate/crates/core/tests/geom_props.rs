mod common;

use common::{random_graph, rng};
use lanegraph::geom::{graph_to_text, round_sig9, CenterlineGraph, EgoPose, GraphFile, GridSpec, Point2, PointIndex};
use lanegraph::{Graph, Point, Pose};
use proptest::prelude::*;

fn pts() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..80)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn index_nearest_matches_scan(points in pts(), q in (-80.0f64..80.0, -80.0f64..80.0), cell in 0.3f64..20.0) {
        let ps: Vec<Point> = points.iter().map(|&(x, y)| Point::new(x, y)).collect();
        let idx = PointIndex::new(&ps, cell);
        let q = Point::new(q.0, q.1);
        let mut best = 0;
        for i in 1..ps.len() {
            if ps[i].dist_sq(q) < ps[best].dist_sq(q) {
                best = i;
            }
        }
        let (i, d) = idx.nearest(q).unwrap();
        prop_assert_eq!(i, best);
        prop_assert!((d - ps[best].dist(q)).abs() < 1e-12);
    }

    #[test]
    fn index_within_matches_scan(points in pts(), q in (-60.0f64..60.0, -60.0f64..60.0), r in 0.0f64..30.0) {
        let ps: Vec<Point> = points.iter().map(|&(x, y)| Point::new(x, y)).collect();
        let idx = PointIndex::new(&ps, 2.0);
        let q = Point::new(q.0, q.1);
        let want: Vec<usize> = (0..ps.len()).filter(|&i| ps[i].dist_sq(q) < r * r).collect();
        prop_assert_eq!(idx.within(q, r), want.clone());
        prop_assert_eq!(idx.any_within(q, r), !want.is_empty());
    }

    #[test]
    fn resample_keeps_length_and_vertices(seed in 0u64..5000, n in 2usize..25, spacing in 0.2f64..7.0) {
        let g = random_graph(&mut rng(seed), n, 40.0);
        let r = g.resample(spacing).unwrap();
        prop_assert!((r.total_length() - g.total_length()).abs() <= 1e-9 * g.total_length().max(1.0));
        prop_assert_eq!(&r.vertices()[..g.len()], g.vertices());
        for e in 0..r.edge_count() {
            prop_assert!(r.edge_length(e) <= spacing * (1.0 + 1e-9));
        }
        prop_assert!(r.validate(Some(spacing * (1.0 + 1e-9))).is_ok());
    }

    #[test]
    fn file_round_trip_is_stable(seed in 0u64..5000, n in 1usize..30) {
        let g = random_graph(&mut rng(seed), n, 1000.0);
        let text = graph_to_text(&g);
        let back: Graph = GraphFile::from_text(&text).unwrap().to_graph().unwrap();
        prop_assert_eq!(back.edges(), g.edges());
        for (a, b) in back.vertices().iter().zip(g.vertices()) {
            prop_assert_eq!(a.x, round_sig9(b.x));
            prop_assert_eq!(a.y, round_sig9(b.y));
        }
        prop_assert_eq!(graph_to_text(&back), text);
    }

    #[test]
    fn pose_round_trips(x in -100.0f64..100.0, y in -100.0f64..100.0, yaw in -7.0f64..7.0, px in -50.0f64..50.0, py in -50.0f64..50.0) {
        let pose = Pose::new(x, y, yaw);
        let p = Point::new(px, py);
        let back = pose.ego_to_world(pose.world_to_ego(p));
        prop_assert!(back.dist(p) < 1e-9);
        let id = pose.compose(&pose.inverse());
        prop_assert!(id.x.abs() < 1e-9 && id.y.abs() < 1e-9);
        let spec = GridSpec::new(200, 160, 0.25);
        let q = spec.px_to_world(&pose, spec.world_to_px(&pose, p));
        prop_assert!(q.dist(p) < 1e-9);
    }

    #[test]
    fn geodesic_ball_contains_source_and_is_sorted(seed in 0u64..5000, n in 2usize..30, eps in 0.0f64..60.0) {
        let g = random_graph(&mut rng(seed), n, 40.0);
        for src in 0..g.len() {
            let b = g.geodesic_ball(src, eps, lanegraph::geom::Direction::Undirected);
            prop_assert!(b.contains(&src));
            prop_assert!(b.windows(2).all(|w| w[0] < w[1]));
        }
    }
}

#[test]
fn grid_centre_is_ego_origin() {
    let spec = GridSpec::new(200, 200, 0.25);
    let c = spec.ego_to_px_point(Point::new(0.0, 0.0));
    assert_eq!((c.x, c.y), (100.0, 100.0));
    // +x moves right by 1/resolution columns
    let p = spec.ego_to_px_point(Point::new(1.0, 0.0));
    assert_eq!((p.x, p.y), (104.0, 100.0));
}

#[test]
fn generic_over_f32() {
    let g: CenterlineGraph<f32> = CenterlineGraph::polyline(&[Point2::new(0.0f32, 0.0), Point2::new(10.0, 0.0), Point2::new(10.0, 5.0)]);
    let r = g.resample(1.0).unwrap();
    assert_eq!(r.len(), 16);
    assert!((r.total_length() - 15.0).abs() < 1e-4);
    let pose = EgoPose::new(1.0f32, 2.0, 0.5);
    let p = Point2::new(3.0f32, -1.0);
    assert!(pose.ego_to_world(pose.world_to_ego(p)).dist(p) < 1e-5);
}

#[test]
fn merge_radius_dedups_vertices() {
    let mut g = Graph::new();
    let a = g.add_or_merge_vertex(Point::new(1.0, 1.0));
    let b = g.add_or_merge_vertex(Point::new(1.0 + 1e-7, 1.0));
    assert_eq!(a, b);
    assert!(g.add_edge(a, a).is_err());
}
