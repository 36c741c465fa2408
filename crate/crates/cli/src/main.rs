//! `lanegraph` command-line driver.

mod config;
mod render;

use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use lanegraph::agent::{trace_sequence, AgentConfig, QueueOrder, TraceResult};
use lanegraph::baseline::baseline_pipeline;
use lanegraph::expert::{channel_names, coverage_audit, sample_scene, write_dataset, CoverageReport, SamplerConfig};
use lanegraph::fsutil::write_atomic;
use lanegraph::geom::{read_graph, write_graph};
use lanegraph::metrics::{evaluate, MetricReport};
use lanegraph::predict::{DegradedOracle, ExternalPredictor, OraclePredictor, PredictError, Predictor, WalkerPredictor};
use lanegraph::scene_io::{read_scene, write_scene, SceneData, GRAPH_FILE, SCENE_FILE};
use lanegraph::sim::generate_scene;
use lanegraph::Graph;
use rayon::prelude::*;
use serde::Serialize;

use config::{ConfigError, PredictorKind, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "lanegraph", version, about = "Lane-centerline graph extraction from BEV heatmap sequences")]
#[command(after_long_help = config::config_help())]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set agent.theta_v=0.4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Master seed (overrides the `seed` key).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Predictor for trace runs (overrides the `predictor` key).
    #[arg(long, global = true, value_enum)]
    predictor: Option<PredictorKind>,
    /// Scenes processed in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate synthetic scenes.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long, env = "LANEGRAPH_OUT")]
        out: PathBuf,
        /// Number of scenes; more than one writes scene_NNN subdirectories.
        #[arg(long, default_value_t = 1)]
        scenes: usize,
    },
    /// Trace scenes with the selected predictor.
    Trace {
        #[command(flatten)]
        common: Common,
        /// Scene directories, or directories of scenes.
        #[arg(required = true)]
        scenes: Vec<PathBuf>,
        #[arg(long, env = "LANEGRAPH_OUT")]
        out: PathBuf,
    },
    /// Write a behavior-cloning dataset from oracle traces.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(required = true)]
        scenes: Vec<PathBuf>,
        #[arg(long, env = "LANEGRAPH_OUT")]
        out: PathBuf,
    },
    /// Score predicted graphs against ground truth.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Predicted graph file, or a trace output directory.
        pred: PathBuf,
        /// Ground-truth graph file, scene directory, or directory of scenes.
        gt: PathBuf,
        /// Also write report.json and report.tsv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the threshold-and-skeletonize baseline.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(required = true)]
        scenes: Vec<PathBuf>,
        #[arg(long, env = "LANEGRAPH_OUT")]
        out: PathBuf,
    },
    /// Draw scenes, heatmaps (.pfm) and graphs (.json) into a PNG.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output PNG file.
        #[arg(long)]
        out: PathBuf,
        /// Scale when only graphs are given.
        #[arg(long, default_value_t = 4.0)]
        px_per_m: f64,
    },
}

enum Failure {
    Validation(String),
    Runtime(anyhow::Error),
    Protocol(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Validation(e.0)
    }
}

type Res<T> = Result<T, Failure>;

fn load_config(c: &Common) -> Res<RunConfig> {
    let mut overrides = c.overrides.clone();
    if let Some(s) = c.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(p) = c.predictor {
        let name = serde_json::to_value(p).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        overrides.push(format!("predictor=\"{name}\""));
    }
    Ok(config::load(c.config.as_deref(), &overrides)?)
}

fn pool(workers: usize) -> Res<rayon::ThreadPool> {
    if workers == 0 {
        return Err(Failure::Validation("--workers must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| Failure::Runtime(e.into()))
}

/// Scene directories named by `paths`, expanding directories of scenes.
fn expand_scenes(paths: &[PathBuf]) -> Res<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.join(SCENE_FILE).exists() {
            out.push(p.clone());
            continue;
        }
        let rd = std::fs::read_dir(p).map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?;
        let mut subs: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|d| d.join(SCENE_FILE).exists()).collect();
        if subs.is_empty() {
            return Err(Failure::Validation(format!("{} holds no scene", p.display())));
        }
        subs.sort();
        out.extend(subs);
    }
    Ok(out)
}

fn scene_name(p: &Path) -> String {
    p.canonicalize().ok().and_then(|c| c.file_name().map(|n| n.to_string_lossy().into_owned())).unwrap_or_else(|| "scene".into())
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> anyhow::Result<()> {
    let bytes = serde_json::to_vec_pretty(v)?;
    write_atomic(path, &bytes).with_context(|| format!("writing {}", path.display()))
}

fn read(dir: &Path) -> Res<SceneData> {
    read_scene(dir).map_err(|e| Failure::Runtime(anyhow!(e)))
}

fn run_parallel<T: Send>(workers: usize, scenes: &[PathBuf], f: impl Fn(usize, &Path) -> Res<T> + Sync) -> Res<Vec<T>> {
    let pool = pool(workers)?;
    pool.install(|| scenes.par_iter().enumerate().map(|(i, s)| f(i, s)).collect::<Vec<_>>()).into_iter().collect()
}

fn cmd_simulate(common: &Common, out: &Path, scenes: usize) -> Res<()> {
    let cfg = load_config(common)?;
    cfg.validate(&cfg.scene.grid)?;
    let dirs: Vec<PathBuf> =
        if scenes == 1 { vec![out.to_path_buf()] } else { (0..scenes).map(|i| out.join(format!("scene_{i:03}"))).collect() };
    run_parallel(common.workers, &dirs, |i, dir| {
        let mut sc = cfg.scene.clone();
        sc.seed = cfg.seed.wrapping_add(i as u64);
        let scene = generate_scene(&sc).map_err(|e| Failure::Validation(e.to_string()))?;
        let frames = scene.render(&sc);
        write_scene(dir, &frames, Some(&scene.graph), Some(&sc), Some(scene.kind)).map_err(|e| Failure::Runtime(anyhow!(e)))?;
        println!("{}: {:?}, {} frames, {} vertices", dir.display(), scene.kind, frames.len(), scene.graph.len());
        Ok(())
    })?;
    Ok(())
}

fn make_predictor(cfg: &RunConfig, scene: &SceneData) -> Res<Box<dyn Predictor>> {
    let need_gt =
        || scene.graph.clone().ok_or_else(|| Failure::Validation(format!("predictor {:?} needs the scene's {GRAPH_FILE}", cfg.predictor)));
    Ok(match cfg.predictor {
        PredictorKind::Oracle => Box::new(OraclePredictor::new(need_gt()?, cfg.label.clone())),
        PredictorKind::Degraded => Box::new(DegradedOracle::new(need_gt()?, cfg.label.clone())),
        PredictorKind::Walker => Box::new(WalkerPredictor::new(cfg.walker.clone())),
        PredictorKind::External => {
            let c = scene.frames.first().map_or(2, |f| f.channel_count()) + 1;
            let s = cfg.agent.roi_size;
            let p = ExternalPredictor::spawn(&cfg.external, [c, s, s]).map_err(|e| match e {
                PredictError::Invalid(m) => Failure::Validation(m),
                other => Failure::Protocol(format!("external predictor: {other}")),
            })?;
            Box::new(p)
        }
    })
}

fn cmd_trace(common: &Common, scenes: &[PathBuf], out: &Path) -> Res<()> {
    let cfg = load_config(common)?;
    let scenes = expand_scenes(scenes)?;
    run_parallel(common.workers, &scenes, |_, dir| {
        let scene = read(dir)?;
        cfg.validate(&scene.meta.grid)?;
        let mut pred = make_predictor(&cfg, &scene)?;
        let TraceResult { graph, diagnostics } =
            trace_sequence(&scene.frames, &mut pred, &cfg.agent, &cfg.fusion).map_err(|e| Failure::Runtime(anyhow!(e)))?;
        let od = out.join(scene_name(dir));
        write_graph(&graph, &od.join(GRAPH_FILE)).map_err(|e| Failure::Runtime(anyhow!(e)))?;
        write_json(&od.join("diagnostics.json"), &diagnostics)?;
        println!(
            "{}: {} vertices, {} edges, {} steps, {} predictor errors",
            od.display(),
            graph.len(),
            graph.edge_count(),
            diagnostics.total_steps,
            diagnostics.total_predictor_errors
        );
        Ok(())
    })?;
    Ok(())
}

#[derive(Serialize)]
struct CoverageRow {
    scene: String,
    samples: usize,
    #[serde(flatten)]
    report: CoverageReport,
}

fn cmd_sample(common: &Common, scenes: &[PathBuf], out: &Path) -> Res<()> {
    let cfg = load_config(common)?;
    let scenes = expand_scenes(scenes)?;
    // sampling is breadth-first regardless of agent.queue
    let agent = AgentConfig { queue: QueueOrder::Fifo, ..cfg.agent.clone() };
    let scfg = SamplerConfig { label: cfg.label.clone(), agent, fusion: cfg.fusion.clone() };
    let parts = run_parallel(common.workers, &scenes, |i, dir| {
        let scene = read(dir)?;
        cfg.validate(&scene.meta.grid)?;
        let gt = scene.graph.as_ref().ok_or_else(|| Failure::Validation(format!("{} has no {GRAPH_FILE}", dir.display())))?;
        let name = scene_name(dir);
        let s = sample_scene(&name, gt, &scene.frames, &scfg, cfg.seed.wrapping_add(i as u64)).map_err(|e| Failure::Runtime(anyhow!(e)))?;
        let radius = cfg.label.step_px * scene.meta.grid.resolution;
        let clipped = scene.clipped_truth(scene.meta.grid.resolution).unwrap_or_default();
        let report = coverage_audit(&clipped, &s.samples, &scene.frames, radius);
        let feats = scene.frames.first().map_or(0, |f| f.features.len());
        Ok((CoverageRow { scene: name, samples: s.samples.len(), report }, s.samples, feats))
    })?;
    let feats = parts.first().map_or(0, |p| p.2);
    let mut all = Vec::new();
    let mut rows = Vec::new();
    for (row, samples, _) in parts {
        println!("{}: {} samples, coverage {:.4}", row.scene, row.samples, row.report.fraction);
        all.extend(samples);
        rows.push(row);
    }
    write_dataset(out, &all, channel_names(feats), cfg.seed, cfg.label.noise_px).map_err(|e| Failure::Runtime(anyhow!(e)))?;
    write_json(&out.join("coverage.json"), &rows)?;
    println!("{}: {} samples", out.display(), all.len());
    Ok(())
}

fn load_graph(p: &Path) -> Res<Graph> {
    read_graph(p).map_err(|e| Failure::Runtime(anyhow!("{}: {e}", p.display())))
}

/// Prediction for scene `name` under `pred`: a file, `pred/graph.json` or
/// `pred/<name>/graph.json`. Missing predictions count as empty graphs.
fn find_prediction(pred: &Path, name: &str) -> Res<Graph> {
    if pred.is_file() {
        return load_graph(pred);
    }
    for c in [pred.join(name).join(GRAPH_FILE), pred.join(GRAPH_FILE)] {
        if c.is_file() {
            return load_graph(&c);
        }
    }
    eprintln!("warning: no prediction for {name} under {}, scoring an empty graph", pred.display());
    Ok(Graph::new())
}

fn cmd_eval(common: &Common, pred: &Path, gt: &Path, out: Option<&Path>) -> Res<()> {
    let cfg = load_config(common)?;
    cfg.metrics.validate().map_err(|(f, m)| Failure::Validation(format!("invalid config field `{f}`: {m}")))?;
    let mut rows: Vec<(String, MetricReport)> = Vec::new();
    if gt.is_file() {
        let g = load_graph(gt)?;
        let p = if pred.is_file() { load_graph(pred)? } else { find_prediction(pred, "")? };
        rows.push((scene_name(gt), evaluate(&p, &g, &cfg.metrics)));
    } else {
        let scenes = expand_scenes(&[gt.to_path_buf()])?;
        let reports = run_parallel(common.workers, &scenes, |_, dir| {
            let scene = read(dir)?;
            let name = scene_name(dir);
            let truth = scene
                .clipped_truth(cfg.metrics.resolution)
                .ok_or_else(|| Failure::Validation(format!("{} has no {GRAPH_FILE}", dir.display())))?;
            let p = find_prediction(pred, &name)?;
            Ok((name, evaluate(&p, &truth, &cfg.metrics)))
        })?;
        rows.extend(reports);
    }
    let mut table = String::from(MetricReport::HEADER);
    table.push('\n');
    for (n, r) in &rows {
        table.push_str(&r.row(n));
        table.push('\n');
    }
    let reports: Vec<MetricReport> = rows.iter().map(|r| r.1.clone()).collect();
    let mean = if rows.len() > 1 { MetricReport::mean(&reports) } else { None };
    if let Some(m) = &mean {
        table.push_str(&m.row("mean"));
        table.push('\n');
    }
    print!("{table}");
    if let Some(o) = out {
        #[derive(Serialize)]
        struct Report<'a> {
            scenes: Vec<(&'a str, &'a MetricReport)>,
            mean: Option<&'a MetricReport>,
        }
        let r = Report { scenes: rows.iter().map(|(n, r)| (n.as_str(), r)).collect(), mean: mean.as_ref() };
        write_json(&o.join("report.json"), &r)?;
        write_atomic(&o.join("report.tsv"), table.as_bytes()).map_err(|e| Failure::Runtime(e.into()))?;
    }
    Ok(())
}

fn cmd_baseline(common: &Common, scenes: &[PathBuf], out: &Path) -> Res<()> {
    let cfg = load_config(common)?;
    cfg.baseline.validate().map_err(|(f, m)| Failure::Validation(format!("invalid config field `{f}`: {m}")))?;
    let scenes = expand_scenes(scenes)?;
    run_parallel(common.workers, &scenes, |_, dir| {
        let scene = read(dir)?;
        let g = baseline_pipeline(&scene.frames, &cfg.baseline);
        let od = out.join(scene_name(dir));
        write_graph(&g, &od.join(GRAPH_FILE)).map_err(|e| Failure::Runtime(anyhow!(e)))?;
        println!("{}: {} vertices, {} edges", od.display(), g.len(), g.edge_count());
        Ok(())
    })?;
    Ok(())
}

fn cmd_render(inputs: &[PathBuf], out: &Path, px_per_m: f64) -> Res<()> {
    if !(px_per_m > 0.0) {
        return Err(Failure::Validation("--px-per-m must be > 0".into()));
    }
    let inputs =
        inputs.iter().map(|p| render::classify(p)).collect::<anyhow::Result<Vec<_>>>().map_err(|e| Failure::Validation(e.to_string()))?;
    let img = render::render(&inputs, px_per_m)?;
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png).map_err(|e| Failure::Runtime(e.into()))?;
    write_atomic(out, &bytes).map_err(|e| Failure::Runtime(e.into()))?;
    println!("{}: {}x{}", out.display(), img.width(), img.height());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Simulate { common, out, scenes } => cmd_simulate(common, out, *scenes),
        Cmd::Trace { common, scenes, out } => cmd_trace(common, scenes, out),
        Cmd::Sample { common, scenes, out } => cmd_sample(common, scenes, out),
        Cmd::Eval { common, pred, gt, out } => cmd_eval(common, pred, gt, out.as_deref()),
        Cmd::Baseline { common, scenes, out } => cmd_baseline(common, scenes, out),
        Cmd::Render { common: _, inputs, out, px_per_m } => cmd_render(inputs, out, *px_per_m),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Protocol(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
