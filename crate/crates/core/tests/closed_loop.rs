mod common;

use common::fixture;
use lanegraph::agent::{trace_sequence, AgentConfig, QueueOrder};
use lanegraph::fusion::FusionConfig;
use lanegraph::metrics::{evaluate, MetricConfig};
use lanegraph::predict::{LabelConfig, OraclePredictor, WalkerPredictor};
use lanegraph::scene_io::{read_scene, write_scene};
use lanegraph::sim::{generate_scene, NoiseModel, SceneConfig, SceneKind};

fn noiseless(kind: SceneKind, seed: u64, lanes: usize) -> SceneConfig {
    SceneConfig { kind, seed, lanes, noise: NoiseModel::noiseless(), ..SceneConfig::default() }
}

#[test]
fn simulation_is_deterministic() {
    for kind in [SceneKind::Composite, SceneKind::FourWay] {
        let cfg = SceneConfig { kind, seed: 17, noise: NoiseModel::moderate(), ..SceneConfig::default() };
        let (a, b) = (common::fixture(cfg.clone()), common::fixture(cfg.clone()));
        assert_eq!(a.scene, b.scene);
        assert_eq!(a.frames, b.frames);
        let other = generate_scene(&SceneConfig { seed: 18, ..cfg }).unwrap();
        assert_ne!(other, a.scene);
    }
}

#[test]
fn scene_directory_round_trip() {
    let f = fixture(SceneConfig { kind: SceneKind::SplitMerge, seed: 4, frames: 5, ..SceneConfig::default() });
    let dir = tempfile::tempdir().unwrap();
    write_scene(dir.path(), &f.frames, Some(&f.scene.graph), Some(&f.cfg), Some(f.scene.kind)).unwrap();
    let back = read_scene(dir.path()).unwrap();
    assert_eq!(back.frames.len(), 5);
    for (x, y) in back.frames.iter().zip(&f.frames) {
        assert_eq!(x.pose, y.pose);
        for (a, b) in x.channels().zip(y.channels()) {
            assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }
    let truth = back.clipped_truth(0.25).unwrap();
    let r = evaluate(&truth, &f.truth, &MetricConfig::default());
    assert_eq!((r.p_f, r.t_f), (1.0, 1.0));
}

#[test]
fn straight_lane_traces_to_one_polyline() {
    let f = fixture(noiseless(SceneKind::Straight, 0, 1));
    let mut oracle = OraclePredictor::new(f.scene.graph.clone(), LabelConfig::default());
    let res = trace_sequence(&f.frames, &mut oracle, &AgentConfig::default(), &FusionConfig::default()).unwrap();
    let g = &res.graph;
    let comp = g.components();
    assert!(comp.iter().all(|&c| c == comp[0]), "more than one component");
    assert!((0..g.len()).all(|v| g.degree(v) <= 2));
    assert_eq!((0..g.len()).filter(|&v| g.degree(v) == 1).count(), 2);
    let r = evaluate(g, &f.truth, &MetricConfig::default());
    assert!(r.p_f >= 0.99 && r.t_f >= 0.99, "{r:?}");
}

#[test]
fn oracle_handles_every_scene_kind() {
    let m = MetricConfig::default();
    for (kind, seed, pf, tf) in [
        (SceneKind::Curve, 1, 0.99, 0.95),
        (SceneKind::SplitMerge, 2, 0.95, 0.90),
        (SceneKind::FourWay, 3, 0.95, 0.90),
        (SceneKind::Composite, 4, 0.95, 0.90),
    ] {
        let f = fixture(noiseless(kind, seed, 2));
        let mut oracle = OraclePredictor::new(f.scene.graph.clone(), LabelConfig::default());
        let res = trace_sequence(&f.frames, &mut oracle, &AgentConfig::default(), &FusionConfig::default()).unwrap();
        let r = evaluate(&res.graph, &f.truth, &m);
        assert!(r.p_f >= pf && r.t_f >= tf, "{kind:?}: {r:?}");
        assert_eq!(res.diagnostics.frames.len(), 40);
        assert_eq!(res.diagnostics.total_predictor_errors, 0);
    }
}

#[test]
fn queue_orders_agree_on_the_result() {
    let f = fixture(noiseless(SceneKind::FourWay, 9, 2));
    let m = MetricConfig::default();
    for queue in [QueueOrder::Lifo, QueueOrder::Fifo, QueueOrder::Random] {
        let mut oracle = OraclePredictor::new(f.scene.graph.clone(), LabelConfig::default());
        let cfg = AgentConfig { queue, seed: 3, ..AgentConfig::default() };
        let res = trace_sequence(&f.frames, &mut oracle, &cfg, &FusionConfig::default()).unwrap();
        let r = evaluate(&res.graph, &f.truth, &m);
        assert!(r.p_f >= 0.95 && r.t_f >= 0.90, "{queue:?}: {r:?}");
    }
}

#[test]
fn walker_follows_plain_roads() {
    let m = MetricConfig::default();
    for (kind, seed) in [(SceneKind::Straight, 5), (SceneKind::Curve, 6)] {
        let f = fixture(noiseless(kind, seed, 2));
        let res = trace_sequence(&f.frames, &mut WalkerPredictor::default(), &AgentConfig::default(), &FusionConfig::default()).unwrap();
        let r = evaluate(&res.graph, &f.truth, &m);
        assert!(r.p_f >= 0.90, "{kind:?}: {r:?}");
    }
}

#[test]
fn tracing_is_deterministic() {
    let f = fixture(SceneConfig { kind: SceneKind::FourWay, seed: 12, noise: NoiseModel::moderate(), ..SceneConfig::default() });
    let run = || {
        let mut w = WalkerPredictor::default();
        let cfg = AgentConfig { queue: QueueOrder::Random, seed: 5, ..AgentConfig::default() };
        trace_sequence(&f.frames, &mut w, &cfg, &FusionConfig::default()).unwrap().graph
    };
    let (a, b) = (run(), run());
    assert_eq!(a.vertices(), b.vertices());
    assert_eq!(a.edges(), b.edges());
}

#[test]
fn empty_frame_list_is_an_error() {
    let mut w = WalkerPredictor::default();
    assert!(trace_sequence(&[], &mut w, &AgentConfig::default(), &FusionConfig::default()).is_err());
}
