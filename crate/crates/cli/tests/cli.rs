use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lanegraph::geom::write_graph;
use lanegraph::Graph;

fn lanegraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lanegraph")).args(args).env_remove("LANEGRAPH_OUT").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = lanegraph(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Relative path to contents for every file under `root`.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

const SMALL: [&str; 4] = ["--set", "scene.frames=6", "--set", "scene.extent=40"];

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--out", p(dir)];
    args.extend(SMALL);
    args.extend(extra);
    ok(&args);
}

/// Parses eval's table into (name, seven scores).
fn table(stdout: &str) -> Vec<(String, Vec<f64>)> {
    let mut lines = stdout.lines();
    assert!(lines.next().unwrap().starts_with("name\tP-P"));
    lines
        .map(|l| {
            let cols: Vec<&str> = l.split('\t').collect();
            (cols[0].to_string(), cols[1..7].iter().map(|c| c.parse().unwrap()).collect())
        })
        .collect()
}

#[test]
fn simulate_is_deterministic_and_writes_all_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate(&a, &["--seed", "17"]);
    simulate(&b, &["--seed", "17"]);
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(!ta.is_empty());
    assert_eq!(ta, tb);
    let hi = ta.keys().filter(|k| k.to_str().unwrap().ends_with("_hi.pfm")).count();
    assert_eq!(hi, 6);

    let c = tmp.path().join("c");
    simulate(&c, &["--seed", "18"]);
    assert_ne!(ta, tree(&c));
}

#[test]
fn default_scene_has_forty_frames() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["simulate", "--out", p(tmp.path())]);
    let hi = tree(tmp.path()).keys().filter(|k| k.to_str().unwrap().ends_with("_hi.pfm")).count();
    assert_eq!(hi, 40);
}

#[test]
fn bad_extent_is_a_validation_error_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lanegraph(&["simulate", "--out", p(tmp.path()), "--set", "scene.extent=-1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scene.extent"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lanegraph(&["simulate", "--out", p(tmp.path()), "--set", "scene.bogus=1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let file = tmp.path().join("run.toml");
    std::fs::write(&file, "seed = 3\n[agent]\ntheta = 0.4\n").unwrap();
    let out = lanegraph(&["simulate", "--out", p(tmp.path()), "--config", p(&file)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_lists_every_config_section() {
    let help = ok(&["--help"]);
    for key in [
        "seed",
        "predictor",
        "scene.grid.resolution",
        "fusion.tau",
        "agent.theta_v",
        "label.noise_px",
        "walker.step_px",
        "external.timeout_ms",
        "metrics.epsilon_px",
        "baseline.threshold",
    ] {
        assert!(help.contains(key), "--help misses {key}");
    }
}

#[test]
fn missing_external_predictor_exits_with_protocol_code() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    simulate(&scene, &[]);
    let out = lanegraph(&[
        "trace",
        p(&scene),
        "--out",
        p(&tmp.path().join("trace")),
        "--predictor",
        "external",
        "--set",
        "external.command=[\"/definitely/not/here\"]",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/definitely/not/here"));
}

#[test]
fn eval_of_identical_graphs_is_all_ones() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    simulate(&scene, &[]);
    let g = scene.join("graph.json");
    let rows = table(&ok(&["eval", p(&g), p(&g)]));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].1, vec![1.0; 6]);
}

#[test]
fn eval_of_empty_prediction_is_all_zeros() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    simulate(&scene, &[]);
    let empty = tmp.path().join("empty.json");
    write_graph(&Graph::new(), &empty).unwrap();
    let rows = table(&ok(&["eval", p(&empty), p(&scene.join("graph.json"))]));
    assert_eq!(rows[0].1, vec![0.0; 6]);
}

#[test]
fn multi_scene_eval_appends_the_mean_row() {
    let tmp = tempfile::tempdir().unwrap();
    let (scenes, traced, report) = (tmp.path().join("scenes"), tmp.path().join("traced"), tmp.path().join("report"));
    ok(&[
        "simulate",
        "--out",
        p(&scenes),
        "--scenes",
        "3",
        "--set",
        "scene.frames=6",
        "--set",
        "scene.extent=40",
        "--set",
        "scene.noise.additive=0.2",
        "--seed",
        "5",
    ]);
    ok(&["baseline", p(&scenes), "--out", p(&traced), "--workers", "2"]);
    std::fs::create_dir_all(&report).unwrap();
    let rows = table(&ok(&["eval", p(&traced), p(&scenes), "--out", p(&report)]));
    assert_eq!(rows.len(), 4);
    let names: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
    assert_eq!(names, ["scene_000", "scene_001", "scene_002", "mean"]);
    for k in 0..6 {
        let mean = rows[..3].iter().map(|r| r.1[k]).sum::<f64>() / 3.0;
        assert!((rows[3].1[k] - mean).abs() < 2e-6, "column {k}: {} vs {mean}", rows[3].1[k]);
    }
    assert!(report.join("report.json").is_file());
    assert!(report.join("report.tsv").is_file());
}

#[test]
fn trace_then_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let (scene, traced) = (tmp.path().join("scene"), tmp.path().join("traced"));
    simulate(&scene, &["--set", "scene.kind=\"curve\"", "--set", "scene.rotate=false"]);
    for predictor in ["oracle", "walker"] {
        let out = traced.join(predictor);
        ok(&["trace", p(&scene), "--out", p(&out), "--predictor", predictor]);
        let rows = table(&ok(&["eval", p(&out), p(&scene)]));
        assert!(rows[0].1[2] >= 0.9, "{predictor}: P-F {}", rows[0].1[2]);
    }
}

#[test]
fn render_of_empty_graph_is_a_framed_blank_canvas() {
    let tmp = tempfile::tempdir().unwrap();
    let (empty, png) = (tmp.path().join("empty.json"), tmp.path().join("empty.png"));
    write_graph(&Graph::new(), &empty).unwrap();
    ok(&["render", p(&empty), "--out", p(&png)]);
    let img = image::open(&png).unwrap().to_rgb8();
    assert!(img.width() > 2 && img.height() > 2);
    let centre = *img.get_pixel(img.width() / 2, img.height() / 2);
    let corner = *img.get_pixel(0, 0);
    assert_ne!(centre, corner);
    let distinct: std::collections::HashSet<_> = img.pixels().collect();
    assert_eq!(distinct.len(), 2);
}

#[test]
fn render_overlays_prediction_on_scene() {
    let tmp = tempfile::tempdir().unwrap();
    let (scene, traced, png) = (tmp.path().join("scene"), tmp.path().join("traced"), tmp.path().join("overlay.png"));
    simulate(&scene, &[]);
    ok(&["trace", p(&scene), "--out", p(&traced)]);
    ok(&["render", p(&scene), p(&traced.join("scene").join("graph.json")), "--out", p(&png)]);
    let img = image::open(&png).unwrap().to_rgb8();
    let distinct: std::collections::HashSet<_> = img.pixels().collect();
    assert!(distinct.len() > 3);
}
