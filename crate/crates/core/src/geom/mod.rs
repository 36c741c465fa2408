//! Geometric substrate: points, SE(2) poses, BEV grid geometry and the
//! directed centerline graph.

mod graph;
mod index;
mod io;
mod point;
mod pose;

pub use graph::{BallSearch, CenterlineGraph, Direction, GraphError, MERGE_RADIUS};
pub use index::PointIndex;
pub use io::{graph_to_text, read_graph, round_sig9, write_graph, GraphFile, GraphFileError};
pub use point::{point_segment_distance, project_on_segment, Point2};
pub use pose::{normalize_angle, EgoPose, GridSpec, PixelCoord};
