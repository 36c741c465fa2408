use std::path::Path;

use lanegraph::agent::{AgentConfig, AgentError};
use lanegraph::baseline::VectorizeConfig;
use lanegraph::fusion::FusionConfig;
use lanegraph::metrics::MetricConfig;
use lanegraph::predict::{ExternalConfig, LabelConfig, WalkerConfig};
use lanegraph::sim::{SceneConfig, SimError};
use lanegraph::GridSpec64;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    Oracle,
    Degraded,
    Walker,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub predictor: PredictorKind,
    pub scene: SceneConfig,
    pub fusion: FusionConfig,
    pub agent: AgentConfig,
    pub label: LabelConfig,
    pub walker: WalkerConfig,
    pub external: ExternalConfig,
    pub metrics: MetricConfig,
    pub baseline: VectorizeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            predictor: PredictorKind::Oracle,
            scene: SceneConfig::default(),
            fusion: FusionConfig::default(),
            agent: AgentConfig::default(),
            label: LabelConfig::default(),
            walker: WalkerConfig::default(),
            external: ExternalConfig::default(),
            metrics: MetricConfig::default(),
            baseline: VectorizeConfig::default(),
        }
    }
}

/// Every config key with a short description, shown by `--help`.
pub const FIELD_DOCS: &[(&str, &str)] = &[
    ("seed", "master seed; scene i of a run uses seed + i"),
    ("predictor", "oracle | degraded | walker | external"),
    ("scene.kind", "straight | curve | split-merge | four-way | composite"),
    ("scene.lanes", "lanes per road"),
    ("scene.lane_spacing", "lateral lane distance, m"),
    ("scene.extent", "road length, m"),
    ("scene.ego_speed", "ego displacement per frame, m"),
    ("scene.frames", "number of frames"),
    ("scene.ego_jitter", "bound of the lateral ego offset, m"),
    ("scene.noise.blur_sigma_px", "heatmap falloff, px"),
    ("scene.noise.additive", "uniform additive heatmap noise"),
    ("scene.noise.dropout", "probability of zeroing a heatmap patch"),
    ("scene.noise.patch_px", "dropout patch side, px"),
    ("scene.seed", "ignored; set from the master seed"),
    ("scene.grid.height", "BEV rows"),
    ("scene.grid.width", "BEV columns"),
    ("scene.grid.resolution", "metres per pixel"),
    ("scene.vertex_sigma_px", "initial-vertex bump sigma, px"),
    ("scene.orientation_channel", "emit the edge orientation channel"),
    ("scene.rotate", "rotate the scene by a random angle"),
    ("fusion.tau", "temporal window half-size"),
    ("fusion.window", "centered | causal"),
    ("agent.roi_size", "ROI side, px (even)"),
    ("agent.max_vertices", "vertex queries per step"),
    ("agent.theta_v", "vertex probability threshold"),
    ("agent.theta_peak", "initial-vertex peak threshold"),
    ("agent.nms_radius_px", "peak suppression radius, px"),
    ("agent.dedup_radius_m", "peaks this close to the graph are skipped; endpoint merge radius, m"),
    ("agent.max_steps_instance", "step budget per instance"),
    ("agent.max_steps_frame", "step budget per frame"),
    ("agent.history_width_px", "width of the history trace, px"),
    ("agent.queue", "lifo | fifo | random; sampling always uses fifo"),
    ("agent.attach_radius_px", "reach of the Stop attach rule, px"),
    ("agent.attach_angle_deg", "largest heading deviation when attaching, deg"),
    ("agent.join_radius_px", "snap distance onto existing vertices, px"),
    ("agent.join_angle_deg", "largest edge deviation when joining, deg"),
    ("agent.seed", "ignored; set from the master seed"),
    ("label.step_px", "label arc length, px"),
    ("label.match_radius_px", "largest distance to the truth that yields labels, px"),
    ("label.coverage_radius_px", "history radius of the explored test, px"),
    ("label.noise_px", "uniform trajectory noise when sampling, px"),
    ("walker.step_px", "probe circle radius, px"),
    ("walker.theta_peak", "minimum heatmap value of a direction"),
    ("walker.suppress_deg", "window suppressed around history hits, deg"),
    ("walker.separation_deg", "minimum separation of outputs, deg"),
    ("walker.max_vertices", "output cap"),
    ("external.command", "predictor program and arguments"),
    ("external.timeout_ms", "per-message timeout, ms"),
    ("external.run_id", "run identifier sent with requests"),
    ("metrics.delta_px", "match threshold, px"),
    ("metrics.epsilon_px", "geodesic ball radius, px"),
    ("metrics.spacing_px", "resampling spacing, px"),
    ("metrics.resolution", "metres per evaluation pixel"),
    ("metrics.directed", "grow geodesic balls along edge direction"),
    ("baseline.threshold", "binarization threshold, (0,1)"),
    ("baseline.min_component_px", "smallest kept component, px"),
    ("baseline.spur_prune_px", "pruned spur length, px"),
    ("baseline.simplify_px", "polyline simplification tolerance, px"),
];

pub fn config_help() -> String {
    let defaults = toml::to_string(&RunConfig::default()).unwrap_or_default();
    let mut s = String::from("Configuration keys (TOML file via --config, override with --set key=value):\n");
    for (k, d) in FIELD_DOCS {
        s.push_str(&format!("  {k:<28} {d}\n"));
    }
    s.push_str("\nDefaults:\n");
    for line in defaults.lines() {
        s.push_str("  ");
        s.push_str(line);
        s.push('\n');
    }
    s
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

/// Sets `path` (dotted) to `value`, creating tables on the way.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<(), ConfigError> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| ConfigError(format!("override `{assignment}` is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur.entry(k.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(ConfigError(format!("`{path}`: `{k}` is not a table"))),
        };
    }
    cur.insert(keys[keys.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Reads the optional file, applies overrides in order and decodes.
pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut table = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError(format!("cannot read {}: {e}", p.display())))?;
            text.parse::<Table>().map_err(|e| ConfigError(format!("{}: {e}", p.display())))?
        }
        None => Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let mut cfg: RunConfig = table.try_into().map_err(|e| ConfigError(format!("config: {e}")))?;
    cfg.scene.seed = cfg.seed;
    cfg.agent.seed = cfg.seed;
    Ok(cfg)
}

fn field(f: String, m: String) -> ConfigError {
    ConfigError(format!("invalid config field `{f}`: {m}"))
}

impl RunConfig {
    /// Validates every section; the agent is checked against `grid`.
    pub fn validate(&self, grid: &GridSpec64) -> Result<(), ConfigError> {
        match self.scene.validate() {
            Err(SimError::Config { field: f, message }) => return Err(field(f, message)),
            Err(e) => return Err(ConfigError(e.to_string())),
            Ok(()) => {}
        }
        match self.agent.validate(grid) {
            Err(AgentError::Config { field: f, message }) => return Err(field(f, message)),
            Err(e) => return Err(ConfigError(e.to_string())),
            Ok(()) => {}
        }
        self.label.validate().map_err(|(f, m)| field(f, m))?;
        self.metrics.validate().map_err(|(f, m)| field(f, m))?;
        self.baseline.validate().map_err(|(f, m)| field(f, m))?;
        if self.predictor == PredictorKind::External && self.external.command.is_empty() {
            return Err(field("external.command".into(), "required for the external predictor".into()));
        }
        Ok(())
    }
}
