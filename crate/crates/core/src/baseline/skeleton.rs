//! Zhang-Suen thinning and skeleton tracing.

use std::collections::{HashMap, HashSet};

use super::{Mask, OFFSETS8};
use crate::geom::point_segment_distance;
use crate::{Graph, Point};

/// Neighbours P2..P9 clockwise from north.
fn ring(m: &Mask, r: usize, c: usize) -> [bool; 8] {
    OFFSETS8.map(|(dr, dc)| m.get_i(r as i64 + dr, c as i64 + dc))
}

/// Number of 0 -> 1 transitions around the 8-neighbourhood: 1 at
/// endpoints, 2 along curves, 3 or more at junctions.
pub fn crossing_number(m: &Mask, r: usize, c: usize) -> usize {
    let p = ring(m, r, c);
    (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count()
}

/// Two-subiteration Zhang-Suen thinning until no pixel changes.
pub fn skeletonize(mask: &Mask) -> Mask {
    let mut m = mask.clone();
    let mut del = Vec::new();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            del.clear();
            for r in 0..m.height {
                for c in 0..m.width {
                    if !m.get(r, c) {
                        continue;
                    }
                    let p = ring(&m, r, c);
                    let b = p.iter().filter(|&&v| v).count();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
                    if a != 1 {
                        continue;
                    }
                    // p[0]=N p[2]=E p[4]=S p[6]=W
                    let ok = if pass == 0 {
                        !(p[0] && p[2] && p[4]) && !(p[2] && p[4] && p[6])
                    } else {
                        !(p[0] && p[2] && p[6]) && !(p[0] && p[4] && p[6])
                    };
                    if ok {
                        del.push((r, c));
                    }
                }
            }
            for &(r, c) in &del {
                m.set(r, c, false);
            }
            changed |= !del.is_empty();
        }
        if !changed {
            return m;
        }
    }
}

/// A traced skeleton branch in pixel coordinates (x = column, y = row)
/// between two node pixels. Loops start and end on the same node.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonPath {
    pub from: usize,
    pub to: usize,
    pub points: Vec<Point>,
}

impl SkeletonPath {
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].dist(w[1])).sum()
    }
}

/// Pixel adjacency of a skeleton: 4-neighbours, plus diagonal neighbours
/// not already joined through a shared 4-neighbour.
fn pixel_graph(skel: &Mask) -> Vec<Vec<usize>> {
    let (h, w) = (skel.height, skel.width);
    let mut adj = vec![Vec::new(); h * w];
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            if !skel.get_i(r, c) {
                continue;
            }
            for (dr, dc) in OFFSETS8 {
                if !skel.get_i(r + dr, c + dc) {
                    continue;
                }
                if dr != 0 && dc != 0 && (skel.get_i(r + dr, c) || skel.get_i(r, c + dc)) {
                    continue;
                }
                adj[r as usize * w + c as usize].push((r + dr) as usize * w + (c + dc) as usize);
            }
        }
    }
    adj
}

/// Splits a skeleton into node pixels (pixel-graph degree other than 2,
/// plus one anchor per node-less cycle) and the chains between them.
/// Returns node pixels, their pixel-graph degrees and the paths.
pub fn trace_skeleton(skel: &Mask) -> (Vec<Point>, Vec<usize>, Vec<SkeletonPath>) {
    let w = skel.width;
    let adj = pixel_graph(skel);
    let px = |i: usize| Point::new((i % w) as f64, (i / w) as f64);
    let mut node_of: HashMap<usize, usize> = HashMap::new();
    let mut nodes = Vec::new();
    let mut degree = Vec::new();
    for i in 0..adj.len() {
        if skel.data[i] && adj[i].len() != 2 {
            node_of.insert(i, nodes.len());
            nodes.push(px(i));
            degree.push(adj[i].len());
        }
    }
    let mut used: HashSet<(usize, usize)> = HashSet::new();
    let edge = |a: usize, b: usize| (a.min(b), a.max(b));
    let mut paths = Vec::new();
    let follow = |start: usize, first: usize, node_of: &HashMap<usize, usize>, used: &mut HashSet<(usize, usize)>| {
        let mut points = vec![px(start), px(first)];
        used.insert(edge(start, first));
        let (mut prev, mut cur) = (start, first);
        while !node_of.contains_key(&cur) {
            let next = adj[cur].iter().copied().find(|&n| n != prev && !used.contains(&edge(cur, n)));
            let Some(next) = next else { break };
            used.insert(edge(cur, next));
            points.push(px(next));
            (prev, cur) = (cur, next);
        }
        SkeletonPath { from: node_of[&start], to: node_of[&cur], points }
    };
    let starts: Vec<usize> = node_of.keys().copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    for &i in &starts {
        for &j in &adj[i] {
            if !used.contains(&edge(i, j)) {
                paths.push(follow(i, j, &node_of, &mut used));
            }
        }
    }
    // cycles without any node pixel
    for i in 0..adj.len() {
        if !skel.data[i] || adj[i].iter().all(|&j| used.contains(&edge(i, j))) {
            continue;
        }
        node_of.insert(i, nodes.len());
        nodes.push(px(i));
        degree.push(adj[i].len());
        let j = adj[i][0];
        paths.push(follow(i, j, &node_of, &mut used));
    }
    (nodes, degree, paths)
}

fn douglas_peucker(pts: &[Point], tol: f64, out: &mut Vec<Point>) {
    let (a, b) = (pts[0], pts[pts.len() - 1]);
    let mut best = (0, -1.0);
    for (k, &p) in pts.iter().enumerate().take(pts.len() - 1).skip(1) {
        let d = point_segment_distance(p, a, b);
        if d > best.1 {
            best = (k, d);
        }
    }
    if best.1 > tol {
        douglas_peucker(&pts[..=best.0], tol, out);
        out.pop();
        douglas_peucker(&pts[best.0..], tol, out);
    } else {
        out.push(a);
        out.push(b);
    }
}

fn simplify(pts: &[Point], tol: f64) -> Vec<Point> {
    if pts.len() <= 2 {
        return pts.to_vec();
    }
    let mut out = Vec::new();
    if pts[0].dist(pts[pts.len() - 1]) < 1e-9 {
        // loop: split at the farthest point so both halves are open
        let far = (1..pts.len() - 1).max_by(|&i, &j| pts[i].dist(pts[0]).total_cmp(&pts[j].dist(pts[0]))).unwrap_or(1);
        douglas_peucker(&pts[..=far], tol, &mut out);
        out.pop();
        douglas_peucker(&pts[far..], tol, &mut out);
    } else {
        douglas_peucker(pts, tol, &mut out);
    }
    out
}

/// Graph of a 1-px skeleton: node pixels become vertices (isolated pixels
/// stay isolated) and chains become polylines. Endpoint-to-junction branches shorter than `spur_px`
/// are dropped and polylines are simplified within `tol_px`. Edge
/// directions follow the tracing order and carry no meaning.
pub fn skeleton_to_graph(skel: &Mask, spur_px: f64, tol_px: f64) -> Graph {
    let (nodes, degree, mut paths) = trace_skeleton(skel);
    if spur_px > 0.0 {
        paths.retain(|p| {
            let spur = (degree[p.from] == 1 && degree[p.to] >= 3) || (degree[p.to] == 1 && degree[p.from] >= 3);
            !(spur && p.length() < spur_px)
        });
    }
    let mut g = Graph::new();
    let mut vid: Vec<Option<usize>> = vec![None; nodes.len()];
    let mut node = |g: &mut Graph, k: usize| *vid[k].get_or_insert_with(|| g.add_vertex(nodes[k]));
    for k in (0..nodes.len()).filter(|&k| degree[k] == 0) {
        node(&mut g, k);
    }
    for p in &paths {
        let pts = simplify(&p.points, tol_px);
        let mut prev = node(&mut g, p.from);
        for (k, &q) in pts.iter().enumerate().skip(1) {
            let v = if k == pts.len() - 1 { node(&mut g, p.to) } else { g.add_vertex(q) };
            if v != prev && !g.has_edge(v, prev) && !g.has_edge(prev, v) {
                let _ = g.add_edge(prev, v);
            }
            prev = v;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> Mask {
        let mut m = Mask::new(rows.len(), rows[0].len());
        for (r, line) in rows.iter().enumerate() {
            for (c, ch) in line.chars().enumerate() {
                m.set(r, c, ch == '#');
            }
        }
        m
    }

    #[test]
    fn line_is_fixed_point() {
        let m = mask_from(&["..........", ".########.", ".........."]);
        assert_eq!(skeletonize(&m), m);
        let g = skeleton_to_graph(&m, 0.0, 0.5);
        assert_eq!((g.len(), g.edge_count()), (2, 1));
    }

    #[test]
    fn plus_sign() {
        let m = mask_from(&[
            ".....#.....",
            ".....#.....",
            ".....#.....",
            ".....#.....",
            ".....#.....",
            "###########",
            ".....#.....",
            ".....#.....",
            ".....#.....",
            ".....#.....",
            ".....#.....",
        ]);
        let sk = skeletonize(&m);
        let g = skeleton_to_graph(&sk, 0.0, 0.5);
        assert_eq!(g.len(), 5, "{:?}", g.vertices());
        assert_eq!(g.edge_count(), 4);
    }

    #[test]
    fn ring_without_nodes() {
        let m = mask_from(&["......", "..##..", ".#..#.", ".#..#.", "..##..", "......"]);
        let sk = skeletonize(&m);
        let g = skeleton_to_graph(&sk, 0.0, 0.0);
        assert!(g.edge_count() >= 3);
    }
}
