use super::point::Point2;
use crate::scalar::Scalar;

/// Uniform-grid bucket index over a fixed point set.
#[derive(Debug, Clone)]
pub struct PointIndex<T> {
    points: Vec<Point2<T>>,
    origin: Point2<T>,
    cell: T,
    cols: i64,
    rows: i64,
    buckets: Vec<Vec<usize>>,
}

impl<T: Scalar> PointIndex<T> {
    pub fn new(points: &[Point2<T>], cell: T) -> Self {
        let cell = if cell > T::zero() { cell } else { T::one() };
        let (mut lo, mut hi) = (Point2::new(T::infinity(), T::infinity()), Point2::new(T::neg_infinity(), T::neg_infinity()));
        for p in points {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if points.is_empty() {
            lo = Point2::zero();
            hi = Point2::zero();
        }
        let cols = ((hi.x - lo.x) / cell).floor().to_i64().unwrap_or(0) + 1;
        let rows = ((hi.y - lo.y) / cell).floor().to_i64().unwrap_or(0) + 1;
        let mut idx = Self { points: points.to_vec(), origin: lo, cell, cols, rows, buckets: vec![Vec::new(); (cols * rows) as usize] };
        for (i, &p) in points.iter().enumerate() {
            let (cx, cy) = idx.cell_of(p);
            let b = (cy * idx.cols + cx) as usize;
            idx.buckets[b].push(i);
        }
        idx
    }

    pub fn points(&self) -> &[Point2<T>] {
        &self.points
    }

    fn cell_of(&self, p: Point2<T>) -> (i64, i64) {
        let cx = ((p.x - self.origin.x) / self.cell).floor().to_i64().unwrap_or(0);
        let cy = ((p.y - self.origin.y) / self.cell).floor().to_i64().unwrap_or(0);
        (cx.clamp(0, self.cols - 1), cy.clamp(0, self.rows - 1))
    }

    fn raw_cell(&self, p: Point2<T>) -> (i64, i64) {
        let cx = ((p.x - self.origin.x) / self.cell).floor().to_f64_lossy();
        let cy = ((p.y - self.origin.y) / self.cell).floor().to_f64_lossy();
        let lim = 1e12;
        (cx.clamp(-lim, lim) as i64, cy.clamp(-lim, lim) as i64)
    }

    fn bucket(&self, cx: i64, cy: i64) -> &[usize] {
        if cx < 0 || cy < 0 || cx >= self.cols || cy >= self.rows {
            return &[];
        }
        &self.buckets[(cy * self.cols + cx) as usize]
    }

    /// Exact nearest point; ties go to the lowest index.
    pub fn nearest(&self, p: Point2<T>) -> Option<(usize, T)> {
        if self.points.is_empty() {
            return None;
        }
        let (px, py) = self.raw_cell(p);
        // rings needed to cover the whole grid from the query cell
        let reach = [px, self.cols - 1 - px, py, self.rows - 1 - py].iter().map(|d| d.abs()).max().unwrap_or(0) + self.cols.max(self.rows);
        let mut best: Option<(usize, T)> = None;
        let consider = |i: usize, best: &mut Option<(usize, T)>| {
            let d = self.points[i].dist_sq(p);
            match best {
                Some((bi, bd)) if d > *bd || (d == *bd && i > *bi) => {}
                _ => *best = Some((i, d)),
            }
        };
        for k in 0..=reach {
            for cy in (py - k)..=(py + k) {
                if cy < 0 || cy >= self.rows {
                    continue;
                }
                if (cy - py).abs() == k {
                    for cx in (px - k).max(0)..=(px + k).min(self.cols - 1) {
                        for &i in self.bucket(cx, cy) {
                            consider(i, &mut best);
                        }
                    }
                } else {
                    for cx in [px - k, px + k] {
                        for &i in self.bucket(cx, cy) {
                            consider(i, &mut best);
                        }
                    }
                }
            }
            if let Some((_, bd)) = best {
                let bound = self.cell * T::c(k as f64);
                if bd < bound * bound {
                    break;
                }
            }
        }
        best.map(|(i, d)| (i, d.sqrt()))
    }

    /// Indices of all points with distance strictly below `r`, ascending.
    pub fn within(&self, p: Point2<T>, r: T) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_candidate(p, r, |i| {
            if self.points[i].dist_sq(p) < r * r {
                out.push(i);
            }
            false
        });
        out.sort_unstable();
        out
    }

    /// True if some point lies strictly closer than `r`.
    pub fn any_within(&self, p: Point2<T>, r: T) -> bool {
        let mut found = false;
        self.for_each_candidate(p, r, |i| {
            found = self.points[i].dist_sq(p) < r * r;
            found
        });
        found
    }

    fn for_each_candidate(&self, p: Point2<T>, r: T, mut f: impl FnMut(usize) -> bool) {
        if self.points.is_empty() {
            return;
        }
        let (x0, y0) = self.raw_cell(Point2::new(p.x - r, p.y - r));
        let (x1, y1) = self.raw_cell(Point2::new(p.x + r, p.y + r));
        for cy in y0.max(0)..=y1.min(self.rows - 1) {
            for cx in x0.max(0)..=x1.min(self.cols - 1) {
                for &i in self.bucket(cx, cy) {
                    if f(i) {
                        return;
                    }
                }
            }
        }
    }
}
