//! On-disk scene directory:
//!
//! ```text
//! scene.json               metadata, grid, poses, channel names
//! graph.json               ground-truth graph (optional)
//! frames/NNNN_<chan>.pfm   one PFM per frame and channel
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bev::BevGrid;
use crate::fsutil::write_atomic;
use crate::geom::{read_graph, write_graph, GraphFileError};
use crate::raster::{Raster, RasterError};
use crate::sim::{clip_to_footprint, SceneConfig, SceneKind};
use crate::{Graph, GridSpec64, Pose};

pub const SCENE_FILE: &str = "scene.json";
pub const GRAPH_FILE: &str = "graph.json";
pub const FRAMES_DIR: &str = "frames";

#[derive(Debug, Error)]
pub enum SceneIoError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad scene file {path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Graph(#[from] GraphFileError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneMeta {
    pub format: String,
    pub kind: Option<SceneKind>,
    pub seed: Option<u64>,
    pub grid: GridSpec64,
    pub channels: Vec<String>,
    pub poses: Vec<Pose>,
    pub config: Option<SceneConfig>,
}

/// A scene as read from disk.
#[derive(Debug, Clone)]
pub struct SceneData {
    pub meta: SceneMeta,
    pub frames: Vec<BevGrid>,
    pub graph: Option<Graph>,
}

impl SceneData {
    /// G* restricted to the union of frame footprints.
    pub fn clipped_truth(&self, spacing: f64) -> Option<Graph> {
        self.graph.as_ref().map(|g| clip_to_footprint(g, &self.meta.poses, &self.meta.grid, spacing))
    }
}

pub fn frame_channel_names(features: usize) -> Vec<String> {
    let mut v = vec!["hl".to_string(), "hi".to_string()];
    v.extend((0..features).map(|i| format!("f{i}")));
    v
}

fn frame_path(dir: &Path, t: usize, chan: &str) -> PathBuf {
    dir.join(FRAMES_DIR).join(format!("{t:04}_{chan}.pfm"))
}

/// Writes a scene directory; existing files are replaced atomically.
pub fn write_scene(
    dir: &Path,
    frames: &[BevGrid],
    graph: Option<&Graph>,
    config: Option<&SceneConfig>,
    kind: Option<SceneKind>,
) -> Result<(), SceneIoError> {
    let first = frames.first().ok_or_else(|| SceneIoError::Format { path: dir.display().to_string(), message: "no frames".into() })?;
    let channels = frame_channel_names(first.features.len());
    for (t, f) in frames.iter().enumerate() {
        for (name, r) in channels.iter().zip(f.channels()) {
            r.write_pfm(&frame_path(dir, t, name))?;
        }
    }
    if let Some(g) = graph {
        write_graph(g, &dir.join(GRAPH_FILE))?;
    }
    let meta = SceneMeta {
        format: "lanegraph-scene-v1".into(),
        kind,
        seed: config.map(|c| c.seed),
        grid: first.spec,
        channels,
        poses: frames.iter().map(|f| f.pose).collect(),
        config: config.cloned(),
    };
    let p = dir.join(SCENE_FILE);
    let text =
        serde_json::to_vec_pretty(&meta).map_err(|e| SceneIoError::Format { path: p.display().to_string(), message: e.to_string() })?;
    write_atomic(&p, &text).map_err(|source| SceneIoError::Io { path: p.display().to_string(), source })
}

pub fn read_scene(dir: &Path) -> Result<SceneData, SceneIoError> {
    let p = dir.join(SCENE_FILE);
    let bytes = std::fs::read(&p).map_err(|source| SceneIoError::Io { path: p.display().to_string(), source })?;
    let meta: SceneMeta =
        serde_json::from_slice(&bytes).map_err(|e| SceneIoError::Format { path: p.display().to_string(), message: e.to_string() })?;
    if meta.channels.len() < 2 {
        return Err(SceneIoError::Format { path: p.display().to_string(), message: "need hl and hi channels".into() });
    }
    meta.grid.validate().map_err(|message| SceneIoError::Format { path: p.display().to_string(), message })?;
    let mut frames = Vec::with_capacity(meta.poses.len());
    for (t, pose) in meta.poses.iter().enumerate() {
        let mut chans = Vec::with_capacity(meta.channels.len());
        for name in &meta.channels {
            let fp = frame_path(dir, t, name);
            let r = Raster::read_pfm(&fp)?;
            if r.dims() != (meta.grid.height, meta.grid.width) {
                return Err(SceneIoError::Format {
                    path: fp.display().to_string(),
                    message: format!("raster is {:?}, grid is {}x{}", r.dims(), meta.grid.height, meta.grid.width),
                });
            }
            chans.push(r);
        }
        frames.push(BevGrid::from_channels(meta.grid, *pose, chans));
    }
    let gp = dir.join(GRAPH_FILE);
    let graph = if gp.exists() { Some(read_graph(&gp)?) } else { None };
    Ok(SceneData { meta, frames, graph })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::generate_scene;

    #[test]
    fn round_trip() {
        let cfg = SceneConfig { frames: 3, grid: GridSpec64::new(40, 50, 0.5), ..SceneConfig::default() };
        let scene = generate_scene(&cfg).unwrap();
        let frames = scene.render(&cfg);
        let dir = tempfile::tempdir().unwrap();
        write_scene(dir.path(), &frames, Some(&scene.graph), Some(&cfg), Some(scene.kind)).unwrap();
        let back = read_scene(dir.path()).unwrap();
        assert_eq!(back.frames, frames);
        assert_eq!(back.meta.config.as_ref(), Some(&cfg));
        assert_eq!(back.graph.unwrap().len(), scene.graph.len());
    }
}
