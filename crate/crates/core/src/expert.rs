//! Behavior-cloning data generation: the agent loop driven by the oracle,
//! with uniform noise on accepted vertices, recording one sample per step.

use std::collections::{HashMap, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{trace_sequence_with, AgentConfig, AgentError, AgentHook, QueueOrder, TraceResult};
use crate::bev::BevGrid;
use crate::fsutil::write_atomic;
use crate::fusion::FusionConfig;
use crate::geom::PointIndex;
use crate::predict::{LabelConfig, OraclePredictor, PredictError, Predictor, PredictorOutput, Roi, RoiVertex, StepContext};
use crate::sim::derive_seed;
use crate::{Graph, Point};

const NOISE_STREAM: u64 = 0x5a4d;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad dataset: {0}")]
    Format(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

/// `v + (u1, u2)` with both components uniform in `[-magnitude, magnitude]`.
pub fn inject_noise<R: Rng + ?Sized>(v: Point, magnitude: f64, rng: &mut R) -> Point {
    if magnitude <= 0.0 {
        return v;
    }
    let u1 = rng.gen_range(-magnitude..=magnitude);
    let u2 = rng.gen_range(-magnitude..=magnitude);
    Point::new(v.x + u1, v.y + u2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub scene_id: String,
    pub frame: usize,
    pub step: u64,
    /// v_t in world metres.
    pub v_t: [f64; 2],
    /// Grid pixel (x = column, y = row) the ROI and labels are centred on.
    pub center_px: [f64; 2],
    /// ROI-relative label offsets in pixels (x along columns, y along rows).
    pub labels: Vec<[f64; 2]>,
    pub stop: bool,
    pub dims: [usize; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub meta: SampleMeta,
    /// `c x h x w`, channel order as in the manifest.
    pub roi: Vec<f32>,
}

impl TrainingSample {
    pub fn labels(&self) -> impl Iterator<Item = Point> + '_ {
        self.meta.labels.iter().map(|l| Point::new(l[0], l[1]))
    }

    pub fn validate(&self) -> Result<(), String> {
        let [c, h, w] = self.meta.dims;
        if self.roi.len() != c * h * w {
            return Err(format!("tensor has {} values, dims {:?}", self.roi.len(), self.meta.dims));
        }
        let half = (h / 2) as f64;
        if self.meta.labels.iter().any(|l| l[0].abs() > half || l[1].abs() > half) {
            return Err("label outside ROI".into());
        }
        if self.meta.stop != self.meta.labels.is_empty() {
            return Err("stop flag disagrees with labels".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub label: LabelConfig,
    pub agent: AgentConfig,
    pub fusion: FusionConfig,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            label: LabelConfig::default(),
            agent: AgentConfig { queue: QueueOrder::Fifo, ..AgentConfig::default() },
            fusion: FusionConfig::default(),
        }
    }
}

struct Recorder {
    scene_id: String,
    noise: f64,
    rng: ChaCha8Rng,
    samples: Vec<TrainingSample>,
}

impl AgentHook for Recorder {
    fn on_step(&mut self, frame: usize, ctx: &StepContext<'_>, out: &PredictorOutput) {
        let w = ctx.fused.spec.px_to_world(&ctx.fused.pose, ctx.v_t);
        let labels: Vec<[f64; 2]> = out.valid(ctx.theta_v).iter().map(|v| [v.x, v.y]).collect();
        self.samples.push(TrainingSample {
            meta: SampleMeta {
                scene_id: self.scene_id.clone(),
                frame,
                step: ctx.step,
                v_t: [w.x, w.y],
                center_px: [ctx.roi.center.x, ctx.roi.center.y],
                stop: labels.is_empty(),
                labels,
                dims: [ctx.roi.channels, ctx.roi.size, ctx.roi.size],
            },
            roi: ctx.roi.data.clone(),
        });
    }

    fn perturb(&mut self, p: Point) -> Point {
        inject_noise(p, self.noise, &mut self.rng)
    }
}

pub struct SampledScene {
    pub samples: Vec<TrainingSample>,
    /// The expert trajectory (cleaned M_W).
    pub trace: TraceResult,
}

/// Runs the oracle-driven agent over `frames` and records every step.
/// The queue order in `cfg.agent` sets the traversal (FIFO by default).
pub fn sample_scene(scene_id: &str, gt: &Graph, frames: &[BevGrid], cfg: &SamplerConfig, seed: u64) -> Result<SampledScene, AgentError> {
    let mut oracle = OraclePredictor::new(gt.clone(), cfg.label.clone());
    let mut rec = Recorder {
        scene_id: scene_id.to_string(),
        noise: cfg.label.noise_px,
        rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, NOISE_STREAM, 0)),
        samples: Vec::new(),
    };
    let trace = trace_sequence_with(frames, &mut oracle, &cfg.agent, &cfg.fusion, &mut rec)?;
    Ok(SampledScene { samples: rec.samples, trace })
}

/// Channel names of a ROI built from `features` extra channels.
pub fn channel_names(features: usize) -> Vec<String> {
    let mut names = vec!["hl".to_string(), "hi".to_string()];
    for i in 0..features {
        names.push(match i {
            0 => "feature0_hl".to_string(),
            1 => "feature1_orientation".to_string(),
            _ => format!("feature{i}"),
        });
    }
    names.push("history".to_string());
    names
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub offset: u64,
    pub meta_len: u64,
    pub blob_len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub samples: usize,
    pub dims: Option<[usize; 3]>,
    pub channels: Vec<String>,
    pub dtype: String,
    pub layout: String,
    pub label_units: String,
    pub seed: u64,
    pub noise_px: f64,
    pub scenes: Vec<String>,
}

pub const SAMPLES_FILE: &str = "samples.bin";
pub const INDEX_FILE: &str = "index.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `samples.bin`, `index.json` and `manifest.json` into `dir`.
/// Each record is a JSON metadata line followed by the little-endian f32
/// tensor.
pub fn write_dataset(
    dir: &Path,
    samples: &[TrainingSample],
    channels: Vec<String>,
    seed: u64,
    noise_px: f64,
) -> Result<Manifest, DatasetError> {
    let mut bin = Vec::new();
    let mut index = Vec::with_capacity(samples.len());
    for s in samples {
        let offset = bin.len() as u64;
        let mut line = serde_json::to_vec(&s.meta).map_err(|e| DatasetError::Format(e.to_string()))?;
        line.push(b'\n');
        bin.extend_from_slice(&line);
        for v in &s.roi {
            bin.extend_from_slice(&v.to_le_bytes());
        }
        index.push(IndexEntry { offset, meta_len: line.len() as u64, blob_len: (s.roi.len() * 4) as u64 });
    }
    let mut scenes: Vec<String> = samples.iter().map(|s| s.meta.scene_id.clone()).collect();
    scenes.dedup();
    let manifest = Manifest {
        format: "lanegraph-samples-v1".into(),
        samples: samples.len(),
        dims: samples.first().map(|s| s.meta.dims),
        channels,
        dtype: "f32le".into(),
        layout: "chw".into(),
        label_units: "roi pixels relative to centre, x = column, y = row".into(),
        seed,
        noise_px,
        scenes,
    };
    let p = dir.join(SAMPLES_FILE);
    write_atomic(&p, &bin).map_err(io_err(&p))?;
    let p = dir.join(INDEX_FILE);
    let text = serde_json::to_vec_pretty(&index).map_err(|e| DatasetError::Format(e.to_string()))?;
    write_atomic(&p, &text).map_err(io_err(&p))?;
    let p = dir.join(MANIFEST_FILE);
    let text = serde_json::to_vec_pretty(&manifest).map_err(|e| DatasetError::Format(e.to_string()))?;
    write_atomic(&p, &text).map_err(io_err(&p))?;
    Ok(manifest)
}

/// Reads every record back using the index file.
pub fn read_dataset(dir: &Path) -> Result<Vec<TrainingSample>, DatasetError> {
    let ip = dir.join(INDEX_FILE);
    let index: Vec<IndexEntry> =
        serde_json::from_slice(&std::fs::read(&ip).map_err(io_err(&ip))?).map_err(|e| DatasetError::Format(format!("index: {e}")))?;
    let bp = dir.join(SAMPLES_FILE);
    let mut rd = BufReader::new(File::open(&bp).map_err(io_err(&bp))?);
    let mut out = Vec::with_capacity(index.len());
    for e in index {
        rd.seek(SeekFrom::Start(e.offset)).map_err(io_err(&bp))?;
        let mut line = String::new();
        rd.read_line(&mut line).map_err(io_err(&bp))?;
        if line.len() as u64 != e.meta_len {
            return Err(DatasetError::Format(format!("record at {} has a bad metadata length", e.offset)));
        }
        let meta: SampleMeta = serde_json::from_str(line.trim_end()).map_err(|err| DatasetError::Format(err.to_string()))?;
        let mut blob = vec![0u8; e.blob_len as usize];
        rd.read_exact(&mut blob).map_err(io_err(&bp))?;
        let roi = blob.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let s = TrainingSample { meta, roi };
        s.validate().map_err(DatasetError::Format)?;
        out.push(s);
    }
    Ok(out)
}

/// Lookup-table predictor over recorded samples, keyed by frame and v_t.
/// Unknown states answer with an empty output.
#[derive(Debug, Clone, Default)]
pub struct ReplayPredictor {
    table: HashMap<(usize, i64, i64), VecDeque<Vec<[f64; 2]>>>,
    pub misses: usize,
}

fn key(frame: usize, w: Point) -> (usize, i64, i64) {
    (frame, (w.x * 1e6).round() as i64, (w.y * 1e6).round() as i64)
}

impl ReplayPredictor {
    pub fn new(samples: &[TrainingSample]) -> Self {
        let mut table: HashMap<_, VecDeque<_>> = HashMap::new();
        for s in samples {
            let k = key(s.meta.frame, Point::new(s.meta.v_t[0], s.meta.v_t[1]));
            table.entry(k).or_default().push_back(s.meta.labels.clone());
        }
        Self { table, misses: 0 }
    }
}

impl Predictor for ReplayPredictor {
    fn predict(&mut self, ctx: &StepContext<'_>) -> Result<PredictorOutput, PredictError> {
        let w = ctx.fused.spec.px_to_world(&ctx.fused.pose, ctx.v_t);
        let Some(labels) = self.table.get_mut(&key(ctx.frame, w)).and_then(|q| q.pop_front()) else {
            self.misses += 1;
            return Ok(PredictorOutput::empty());
        };
        Ok(PredictorOutput { vertices: labels.iter().map(|l| RoiVertex { x: l[0], y: l[1], p: 1.0 }).collect() })
    }
}

/// World position of a ROI-relative label of `sample`.
pub fn label_world(sample: &TrainingSample, label: Point, frame: &BevGrid) -> Point {
    let c = Point::new(sample.meta.center_px[0], sample.meta.center_px[1]);
    frame.spec.px_to_world(&frame.pose, c + label)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub covered_length: f64,
    pub total_length: f64,
    pub fraction: f64,
}

/// Fraction of `gt` arc length (already clipped to the footprint) within
/// `radius` metres of some sample segment v_t -> label. `frames` supplies
/// the pose of each sample's frame.
pub fn coverage_audit(gt: &Graph, samples: &[TrainingSample], frames: &[BevGrid], radius: f64) -> CoverageReport {
    const SPACING: f64 = 0.1;
    let mut pts = Vec::new();
    for s in samples {
        let Some(frame) = frames.get(s.meta.frame) else { continue };
        let a = Point::new(s.meta.v_t[0], s.meta.v_t[1]);
        for l in s.labels() {
            let b = label_world(s, l, frame);
            let n = (a.dist(b) / SPACING).ceil().max(1.0) as usize;
            pts.extend((0..=n).map(|k| a.lerp(b, k as f64 / n as f64)));
        }
    }
    let index = PointIndex::new(&pts, radius.max(SPACING));
    let reach = radius + SPACING / 2.0;
    let (mut covered, mut total) = (0.0, 0.0);
    for &(ia, ib) in gt.edges() {
        let (a, b) = (gt.vertex(ia), gt.vertex(ib));
        let len = a.dist(b);
        let n = (len / SPACING).ceil().max(1.0) as usize;
        for k in 0..n {
            let m = a.lerp(b, (k as f64 + 0.5) / n as f64);
            let piece = len / n as f64;
            total += piece;
            if index.any_within(m, reach) {
                covered += piece;
            }
        }
    }
    let fraction = if total > 0.0 { covered / total } else { 1.0 };
    CoverageReport { covered_length: covered, total_length: total, fraction }
}

/// Rebuilds the ROI of a sample.
pub fn sample_roi(sample: &TrainingSample) -> Roi {
    let [c, h, _] = sample.meta.dims;
    let center = Point::new(sample.meta.center_px[0], sample.meta.center_px[1]);
    Roi { channels: c, size: h, data: sample.roi.clone(), center }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = Point::new(3.25, -1.5);
        assert_eq!(inject_noise(p, 0.0, &mut rng), p);
    }

    #[test]
    fn noise_reproducible_and_bounded() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100).map(|_| inject_noise(Point::zero(), 2.0, &mut rng)).collect::<Vec<_>>()
        };
        let a = draw(9);
        assert_eq!(a, draw(9));
        assert!(a.iter().all(|p| p.x.abs() <= 2.0 && p.y.abs() <= 2.0));
    }

    #[test]
    fn channel_order() {
        assert_eq!(channel_names(2), ["hl", "hi", "feature0_hl", "feature1_orientation", "history"]);
    }
}
