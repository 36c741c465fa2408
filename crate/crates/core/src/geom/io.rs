//! Text serialization of centerline graphs.
//!
//! Coordinates are written with 9 significant digits, so writing a graph
//! that was read from a file reproduces the file byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::graph::{CenterlineGraph, GraphError};
use super::point::Point2;
use crate::scalar::Scalar;

pub const GRAPH_FORMAT: &str = "lanegraph.graph";
pub const GRAPH_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GraphFileError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed graph document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported graph document {0} v{1}")]
    Version(String, u32),
    #[error("vertex ids must be 0..n in order; found {found} at position {expected}")]
    VertexId { expected: usize, found: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexRecord {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<u32>,
}

/// On-disk graph document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub format: String,
    pub version: u32,
    pub vertices: Vec<VertexRecord>,
    pub edges: Vec<[usize; 2]>,
}

/// Rounds to 9 significant decimal digits.
pub fn round_sig9(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { 0.0 } else { v };
    }
    format!("{v:.8e}").parse().expect("formatted float parses")
}

impl GraphFile {
    pub fn from_graph<T: Scalar>(g: &CenterlineGraph<T>) -> Self {
        let vertices = g
            .vertices()
            .iter()
            .enumerate()
            .map(|(id, p)| VertexRecord { id, x: round_sig9(p.x.to_f64_lossy()), y: round_sig9(p.y.to_f64_lossy()), tag: g.tag(id) })
            .collect();
        let edges = g.edges().iter().map(|&(a, b)| [a, b]).collect();
        Self { format: GRAPH_FORMAT.into(), version: GRAPH_VERSION, vertices, edges }
    }

    pub fn to_graph<T: Scalar>(&self) -> Result<CenterlineGraph<T>, GraphFileError> {
        if self.format != GRAPH_FORMAT || self.version != GRAPH_VERSION {
            return Err(GraphFileError::Version(self.format.clone(), self.version));
        }
        let mut g = CenterlineGraph::new();
        for (i, v) in self.vertices.iter().enumerate() {
            if v.id != i {
                return Err(GraphFileError::VertexId { expected: i, found: v.id });
            }
            g.add_vertex_tagged(Point2::new(T::c(v.x), T::c(v.y)), v.tag);
        }
        for e in &self.edges {
            g.add_edge(e[0], e[1])?;
        }
        Ok(g)
    }

    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("graph document serializes");
        s.push('\n');
        s
    }

    pub fn from_text(s: &str) -> Result<Self, GraphFileError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn read(path: &Path) -> Result<Self, GraphFileError> {
        let s = std::fs::read_to_string(path).map_err(|source| GraphFileError::Io { path: path.display().to_string(), source })?;
        Self::from_text(&s)
    }

    pub fn write(&self, path: &Path) -> Result<(), GraphFileError> {
        crate::fsutil::write_atomic(path, self.to_text().as_bytes())
            .map_err(|source| GraphFileError::Io { path: path.display().to_string(), source })
    }
}

pub fn graph_to_text<T: Scalar>(g: &CenterlineGraph<T>) -> String {
    GraphFile::from_graph(g).to_text()
}

pub fn read_graph(path: &Path) -> Result<CenterlineGraph<f64>, GraphFileError> {
    GraphFile::read(path)?.to_graph()
}

pub fn write_graph<T: Scalar>(g: &CenterlineGraph<T>, path: &Path) -> Result<(), GraphFileError> {
    GraphFile::from_graph(g).write(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_byte_exact() {
        let g =
            CenterlineGraph::from_parts(vec![Point2::new(0.1 + 0.2, -1.0 / 3.0), Point2::new(12345.678901234, 2e-12)], &[(0, 1)]).unwrap();
        let text = graph_to_text(&g);
        let back: CenterlineGraph<f64> = GraphFile::from_text(&text).unwrap().to_graph().unwrap();
        assert_eq!(graph_to_text(&back), text);
        assert!((back.vertex(0).x - 0.3).abs() < 1e-9);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_ids() {
        let bad = r#"{"format":"lanegraph.graph","version":1,"vertices":[],"edges":[],"extra":1}"#;
        assert!(GraphFile::from_text(bad).is_err());
        let ids = r#"{"format":"lanegraph.graph","version":1,"vertices":[{"id":3,"x":0,"y":0}],"edges":[]}"#;
        let f = GraphFile::from_text(ids).unwrap();
        assert!(matches!(f.to_graph::<f64>(), Err(GraphFileError::VertexId { .. })));
        let lp = r#"{"format":"lanegraph.graph","version":1,"vertices":[{"id":0,"x":0,"y":0}],"edges":[[0,0]]}"#;
        let f = GraphFile::from_text(lp).unwrap();
        assert!(matches!(f.to_graph::<f64>(), Err(GraphFileError::Graph(GraphError::SelfLoop(0)))));
    }
}
