use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use thiserror::Error;

use super::point::Point2;
use crate::scalar::Scalar;

/// Two vertices closer than this (meters) are considered duplicates.
pub const MERGE_RADIUS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("vertex index {0} out of range ({1} vertices)")]
    VertexOutOfRange(usize, usize),
    #[error("self-loop edge on vertex {0}")]
    SelfLoop(usize),
    #[error("vertices {0} and {1} are duplicates (closer than the merge radius)")]
    DuplicateVertex(usize, usize),
    #[error("edge {0}->{1} has length {2} above the maximum {3}")]
    EdgeTooLong(usize, usize, f64, f64),
    #[error("non-finite coordinate on vertex {0}")]
    NonFinite(usize),
    #[error("graph is empty")]
    Empty,
    #[error("resample spacing must be > 0, got {0}")]
    BadSpacing(f64),
}

/// Edge traversal used by reachability queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    Directed,
    #[default]
    Undirected,
}

/// Directed geometric graph of lane centerlines. Vertices carry 2-D
/// coordinates and an optional instance tag.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CenterlineGraph<T> {
    vertices: Vec<Point2<T>>,
    tags: Vec<Option<u32>>,
    edges: Vec<(usize, usize)>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
}

#[derive(Clone, Copy)]
struct HeapEntry<T> {
    dist: T,
    vertex: usize,
}

impl<T: Scalar> PartialEq for HeapEntry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Scalar> Eq for HeapEntry<T> {}
impl<T: Scalar> PartialOrd for HeapEntry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for HeapEntry<T> {
    // min-heap on distance, then vertex index
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.partial_cmp(&self.dist).unwrap_or(Ordering::Equal).then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl<T: Scalar> CenterlineGraph<T> {
    pub fn new() -> Self {
        Self { vertices: Vec::new(), tags: Vec::new(), edges: Vec::new(), out_adj: Vec::new(), in_adj: Vec::new() }
    }

    /// Builds a graph from raw parts, checking edge references.
    pub fn from_parts(vertices: Vec<Point2<T>>, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut g = Self::new();
        for p in vertices {
            g.add_vertex(p);
        }
        for &(a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    /// Chain a-b-c-... of consecutive points.
    pub fn polyline(points: &[Point2<T>]) -> Self {
        let mut g = Self::new();
        let ids: Vec<usize> = points.iter().map(|&p| g.add_vertex(p)).collect();
        for w in ids.windows(2) {
            g.add_edge(w[0], w[1]).expect("polyline vertices are distinct indices");
        }
        g
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[Point2<T>] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> Point2<T> {
        self.vertices[i]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn tag(&self, i: usize) -> Option<u32> {
        self.tags[i]
    }

    pub fn tags(&self) -> &[Option<u32>] {
        &self.tags
    }

    pub fn set_tag(&mut self, i: usize, tag: Option<u32>) {
        self.tags[i] = tag;
    }

    pub fn add_vertex(&mut self, p: Point2<T>) -> usize {
        self.add_vertex_tagged(p, None)
    }

    pub fn add_vertex_tagged(&mut self, p: Point2<T>, tag: Option<u32>) -> usize {
        self.vertices.push(p);
        self.tags.push(tag);
        self.out_adj.push(Vec::new());
        self.in_adj.push(Vec::new());
        self.vertices.len() - 1
    }

    /// Index of the first vertex within `radius` of `p`, if any.
    pub fn find_vertex(&self, p: Point2<T>, radius: T) -> Option<usize> {
        let r2 = radius * radius;
        self.vertices.iter().position(|v| v.dist_sq(p) <= r2)
    }

    /// Adds `p` unless a vertex already sits within the merge radius.
    pub fn add_or_merge_vertex(&mut self, p: Point2<T>) -> usize {
        match self.find_vertex(p, T::c(MERGE_RADIUS)) {
            Some(i) => i,
            None => self.add_vertex(p),
        }
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.out_adj.get(a).is_some_and(|o| o.contains(&b))
    }

    /// Adds the directed edge a->b. Duplicate edges are ignored.
    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<(), GraphError> {
        let n = self.vertices.len();
        if a >= n {
            return Err(GraphError::VertexOutOfRange(a, n));
        }
        if b >= n {
            return Err(GraphError::VertexOutOfRange(b, n));
        }
        if a == b {
            return Err(GraphError::SelfLoop(a));
        }
        if self.has_edge(a, b) {
            return Ok(());
        }
        self.edges.push((a, b));
        self.out_adj[a].push(b);
        self.in_adj[b].push(a);
        Ok(())
    }

    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out_adj[i]
    }

    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.in_adj[i]
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out_adj[i].len()
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.in_adj[i].len()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.out_degree(i) + self.in_degree(i)
    }

    pub fn is_junction(&self, i: usize) -> bool {
        self.degree(i) >= 3
    }

    /// Distinct neighbours ignoring direction.
    pub fn undirected_neighbors(&self, i: usize) -> Vec<usize> {
        let mut n: Vec<usize> = self.out_adj[i].iter().chain(self.in_adj[i].iter()).copied().collect();
        n.sort_unstable();
        n.dedup();
        n
    }

    pub fn edge_length(&self, e: usize) -> T {
        let (a, b) = self.edges[e];
        self.vertices[a].dist(self.vertices[b])
    }

    pub fn total_length(&self) -> T {
        (0..self.edges.len()).map(|e| self.edge_length(e)).sum()
    }

    /// Checks the structural invariants. `max_segment` additionally bounds
    /// every edge length.
    pub fn validate(&self, max_segment: Option<T>) -> Result<(), GraphError> {
        for (i, v) in self.vertices.iter().enumerate() {
            if !v.is_finite() {
                return Err(GraphError::NonFinite(i));
            }
        }
        let mut order: Vec<usize> = (0..self.vertices.len()).collect();
        order.sort_by(|&a, &b| self.vertices[a].x.partial_cmp(&self.vertices[b].x).unwrap_or(Ordering::Equal));
        let r = T::c(MERGE_RADIUS);
        for (k, &i) in order.iter().enumerate() {
            for &j in &order[k + 1..] {
                if self.vertices[j].x - self.vertices[i].x > r {
                    break;
                }
                if self.vertices[i].dist(self.vertices[j]) <= r {
                    return Err(GraphError::DuplicateVertex(i.min(j), i.max(j)));
                }
            }
        }
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            if let Some(m) = max_segment {
                let l = self.edge_length(e);
                if l > m {
                    return Err(GraphError::EdgeTooLong(a, b, l.to_f64_lossy(), m.to_f64_lossy()));
                }
            }
        }
        Ok(())
    }

    /// Subdivides every edge into equal pieces no longer than `spacing`.
    /// Original vertices (so junctions and endpoints) are kept exactly and
    /// already-short edges are untouched, which makes the operation
    /// idempotent.
    pub fn resample(&self, spacing: T) -> Result<Self, GraphError> {
        if !(spacing > T::zero()) || !spacing.is_finite() {
            return Err(GraphError::BadSpacing(spacing.to_f64_lossy()));
        }
        let mut out = Self::new();
        for (i, &v) in self.vertices.iter().enumerate() {
            out.add_vertex_tagged(v, self.tags[i]);
        }
        for &(a, b) in &self.edges {
            let pa = self.vertices[a];
            let pb = self.vertices[b];
            let len = pa.dist(pb);
            let pieces = (len / spacing - T::c(1e-9)).ceil().max(T::one());
            let n = pieces.to_usize().unwrap_or(1).max(1);
            let mut prev = a;
            for k in 1..n {
                let t = T::c(k as f64) / pieces;
                let id = out.add_vertex_tagged(pa.lerp(pb, t), self.tags[a]);
                out.add_edge(prev, id)?;
                prev = id;
            }
            out.add_edge(prev, b)?;
        }
        Ok(out)
    }

    /// All vertices whose shortest-path distance from `source` is at most
    /// `eps`, sorted by index. The source is always included.
    pub fn geodesic_ball(&self, source: usize, eps: T, direction: Direction) -> Vec<usize> {
        BallSearch::new(self, direction).ball(source, eps).to_vec()
    }

    /// Globally nearest vertex by linear scan; ties go to the lowest index.
    pub fn nearest_vertex(&self, p: Point2<T>) -> Result<(usize, T), GraphError> {
        let mut best: Option<(usize, T)> = None;
        for (i, v) in self.vertices.iter().enumerate() {
            let d = v.dist_sq(p);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, d)| (i, d.sqrt())).ok_or(GraphError::Empty)
    }

    /// Applies `f` to every vertex, keeping topology and tags.
    pub fn map_points<U: Scalar>(&self, mut f: impl FnMut(Point2<T>) -> Point2<U>) -> CenterlineGraph<U> {
        CenterlineGraph {
            vertices: self.vertices.iter().map(|&p| f(p)).collect(),
            tags: self.tags.clone(),
            edges: self.edges.clone(),
            out_adj: self.out_adj.clone(),
            in_adj: self.in_adj.clone(),
        }
    }

    /// Induced subgraph on vertices where `keep[i]` holds; indices are
    /// compacted in order.
    pub fn induced(&self, keep: &[bool]) -> Self {
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut out = Self::new();
        for (i, &k) in keep.iter().enumerate() {
            if k {
                remap[i] = out.add_vertex_tagged(self.vertices[i], self.tags[i]);
            }
        }
        for &(a, b) in &self.edges {
            if keep[a] && keep[b] {
                out.add_edge(remap[a], remap[b]).expect("remapped edge valid");
            }
        }
        out
    }

    /// Removes the listed edges, keeping all vertices.
    pub fn without_edges(&self, drop: &[(usize, usize)]) -> Self {
        let mut out = Self::new();
        for (i, &v) in self.vertices.iter().enumerate() {
            out.add_vertex_tagged(v, self.tags[i]);
        }
        for &(a, b) in &self.edges {
            if !drop.contains(&(a, b)) {
                out.add_edge(a, b).expect("edge valid");
            }
        }
        out
    }

    /// Appends `other`, returning the index offset of its vertices.
    pub fn extend(&mut self, other: &Self) -> usize {
        let off = self.vertices.len();
        for (i, &v) in other.vertices.iter().enumerate() {
            self.add_vertex_tagged(v, other.tags[i]);
        }
        for &(a, b) in &other.edges {
            self.add_edge(a + off, b + off).expect("edge valid");
        }
        off
    }

    /// Weakly connected component label per vertex, labels in discovery
    /// order.
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.vertices.len()];
        let mut next = 0;
        for s in 0..self.vertices.len() {
            if label[s] != usize::MAX {
                continue;
            }
            let mut q = VecDeque::from([s]);
            label[s] = next;
            while let Some(u) = q.pop_front() {
                for &v in self.out_adj[u].iter().chain(self.in_adj[u].iter()) {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        q.push_back(v);
                    }
                }
            }
            next += 1;
        }
        label
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type P = Point2<f64>;

    fn chain(n: usize, step: f64) -> CenterlineGraph<f64> {
        let pts: Vec<P> = (0..n).map(|i| P::new(i as f64 * step, 0.0)).collect();
        CenterlineGraph::polyline(&pts)
    }

    fn y_junction() -> CenterlineGraph<f64> {
        CenterlineGraph::from_parts(
            vec![P::new(0.0, 0.0), P::new(5.0, 0.0), P::new(9.0, 3.0), P::new(9.0, -3.0)],
            &[(0, 1), (1, 2), (1, 3)],
        )
        .unwrap()
    }

    #[test]
    fn rejects_self_loop_and_bad_index() {
        let mut g = chain(2, 1.0);
        assert_eq!(g.add_edge(0, 0), Err(GraphError::SelfLoop(0)));
        assert_eq!(g.add_edge(0, 5), Err(GraphError::VertexOutOfRange(5, 2)));
    }

    #[test]
    fn validate_finds_duplicates() {
        let g = CenterlineGraph::from_parts(vec![P::new(1.0, 1.0), P::new(1.0, 1.0 + 1e-9)], &[]).unwrap();
        assert_eq!(g.validate(None), Err(GraphError::DuplicateVertex(0, 1)));
        assert!(chain(4, 1.0).validate(Some(1.0)).is_ok());
        assert!(chain(4, 1.5).validate(Some(1.0)).is_err());
    }

    #[test]
    fn resample_single_segment() {
        let g = CenterlineGraph::polyline(&[P::new(0.0, 0.0), P::new(10.0, 0.0)]);
        let r = g.resample(1.0).unwrap();
        assert_eq!(r.len(), 11);
        assert_eq!(r.edge_count(), 10);
        assert!(r.validate(Some(1.0)).is_ok());
    }

    #[test]
    fn resample_keeps_junction_degree() {
        let r = y_junction().resample(0.5).unwrap();
        assert_eq!(r.vertex(1), P::new(5.0, 0.0));
        assert_eq!(r.degree(1), 3);
        assert_eq!((0..r.len()).filter(|&i| r.is_junction(i)).count(), 1);
    }

    #[test]
    fn resample_empty_and_bad_spacing() {
        let g = CenterlineGraph::<f64>::new();
        assert!(g.resample(1.0).unwrap().is_empty());
        assert_eq!(g.resample(0.0), Err(GraphError::BadSpacing(0.0)));
    }

    #[test]
    fn ball_zero_radius_is_source() {
        assert_eq!(y_junction().geodesic_ball(1, 0.0, Direction::Undirected), vec![1]);
    }

    #[test]
    fn ball_on_chain() {
        let g = chain(10, 1.0);
        assert_eq!(g.geodesic_ball(2, 3.5, Direction::Directed), vec![2, 3, 4, 5]);
        assert_eq!(g.geodesic_ball(2, 3.5, Direction::Undirected), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn nearest_vertex_ties_and_empty() {
        let pts: Vec<P> = (0..10).map(|i| P::new(i as f64, 0.0)).collect();
        let g = CenterlineGraph::from_parts(pts, &[]).unwrap();
        let (i, d) = g.nearest_vertex(P::new(4.5, 0.0)).unwrap();
        assert_eq!((i, d), (4, 0.5));
        assert_eq!(g.nearest_vertex(P::new(7.0, 0.0)).unwrap(), (7, 0.0));
        assert_eq!(CenterlineGraph::<f64>::new().nearest_vertex(P::zero()), Err(GraphError::Empty));
    }

    #[test]
    fn nearest_vertex_tie_by_index_nonadjacent() {
        let g = CenterlineGraph::from_parts(
            vec![
                P::new(9.0, 9.0),
                P::new(8.0, 8.0),
                P::new(-1.0, 0.0),
                P::new(7.0, 7.0),
                P::new(6.0, 6.0),
                P::new(5.0, 5.0),
                P::new(4.0, 4.0),
                P::new(1.0, 0.0),
            ],
            &[],
        )
        .unwrap();
        assert_eq!(g.nearest_vertex(P::new(0.0, 0.0)).unwrap().0, 2);
    }

    #[test]
    fn components_are_weak() {
        let mut g = y_junction();
        g.add_vertex(P::new(50.0, 50.0));
        assert_eq!(g.components(), vec![0, 0, 0, 0, 1]);
    }
}

/// Repeated geodesic-ball queries on one graph, reusing the distance
/// buffer between calls.
pub struct BallSearch<'a, T> {
    graph: &'a CenterlineGraph<T>,
    direction: Direction,
    dist: Vec<T>,
    heap: BinaryHeap<HeapEntry<T>>,
    ball: Vec<usize>,
}

impl<'a, T: Scalar> BallSearch<'a, T> {
    pub fn new(graph: &'a CenterlineGraph<T>, direction: Direction) -> Self {
        Self { graph, direction, dist: vec![T::infinity(); graph.len()], heap: BinaryHeap::new(), ball: Vec::new() }
    }

    /// Same result as [`CenterlineGraph::geodesic_ball`].
    pub fn ball(&mut self, source: usize, eps: T) -> &[usize] {
        let g = self.graph;
        for &i in &self.ball {
            self.dist[i] = T::infinity();
        }
        self.ball.clear();
        self.dist[source] = T::zero();
        self.heap.push(HeapEntry { dist: T::zero(), vertex: source });
        // every vertex that gets a finite distance is popped once, so the
        // ball doubles as the reset list
        while let Some(HeapEntry { dist: d, vertex: u }) = self.heap.pop() {
            if d > self.dist[u] {
                continue;
            }
            self.ball.push(u);
            let undirected = self.direction == Direction::Undirected;
            let ins: &[usize] = if undirected { &g.in_adj[u] } else { &[] };
            for &v in g.out_adj[u].iter().chain(ins) {
                let nd = d + g.vertices[u].dist(g.vertices[v]);
                if nd <= eps && nd < self.dist[v] {
                    self.dist[v] = nd;
                    self.heap.push(HeapEntry { dist: nd, vertex: v });
                }
            }
        }
        self.ball.sort_unstable();
        &self.ball
    }
}
