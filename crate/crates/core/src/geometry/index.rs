//! Static k-d tree answering exact closed-ball radius queries.

use super::cloud::{dist2, Point, PointCloud};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Immutable spatial index over the points of one cloud.
///
/// Radius queries return the indices of every point with
/// `dist2(p, q) <= r * r`, duplicates included, in ascending index order.
#[derive(Debug, Clone)]
pub struct NeighborhoodIndex {
    points: Vec<Point>,
    order: Vec<usize>,
    /// `points` permuted into tree order so leaves scan contiguous memory.
    tree_points: Vec<Point>,
    nodes: Vec<Node>,
    dim: usize,
}

/// Builds the index; fails on an empty cloud.
pub fn build_index(cloud: &PointCloud) -> Result<NeighborhoodIndex> {
    NeighborhoodIndex::from_points(cloud.points().to_vec(), cloud.dim())
}

impl NeighborhoodIndex {
    pub fn from_points(points: Vec<Point>, dim: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let mut index = Self {
            order: (0..points.len()).collect(),
            points,
            tree_points: Vec::new(),
            nodes: Vec::new(),
            dim,
        };
        let n = index.points.len();
        index.build(0, n);
        index.tree_points = index.order.iter().map(|&i| index.points[i]).collect();
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let axis = self.widest_axis(start, end);
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let value = self.points[self.order[mid]][axis];
        // placeholder, patched once children exist
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    fn widest_axis(&self, start: usize, end: usize) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for axis in 0..self.dim {
            let (lo, hi) = self.order[start..end]
                .iter()
                .map(|&i| self.points[i][axis])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if hi - lo > best.1 {
                best = (axis, hi - lo);
            }
        }
        best.0
    }

    /// Indices of all points within the closed ball of radius `r`, ascending.
    pub fn radius_query(&self, q: &Point, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.radius_query_into(q, r, &mut out);
        out
    }

    /// As [`radius_query`](Self::radius_query), reusing `out`.
    pub fn radius_query_into(&self, q: &Point, r: f64, out: &mut Vec<usize>) {
        out.clear();
        self.visit(q, r, |k, _| out.push(self.order[k]));
        out.sort_unstable();
    }

    /// Coordinates of the points in the closed ball, in unspecified order.
    pub(crate) fn radius_points_into(&self, q: &Point, r: f64, out: &mut Vec<Point>) {
        out.clear();
        self.visit(q, r, |_, p| out.push(*p));
    }

    /// Calls `f(tree_position, point)` for every point within `r` of `q`.
    fn visit(&self, q: &Point, r: f64, mut f: impl FnMut(usize, &Point)) {
        if r < 0.0 || r.is_nan() {
            return;
        }
        let r2 = r * r;
        let mut stack = Vec::with_capacity(64);
        stack.push(0usize);
        while let Some(id) = stack.pop() {
            match self.nodes[id] {
                Node::Leaf { start, end } => {
                    for (k, p) in self.tree_points[start..end].iter().enumerate() {
                        if dist2(p, q) <= r2 {
                            f(start + k, p);
                        }
                    }
                }
                Node::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    // Left holds coords <= value, right holds coords >= value.
                    // Rounding is monotone, so pruning on the rounded square of
                    // the gap never drops a point that dist2 would accept.
                    let gap = q[axis] - value;
                    let prune = gap * gap > r2;
                    if !(prune && gap > 0.0) {
                        stack.push(left);
                    }
                    if !(prune && gap < 0.0) {
                        stack.push(right);
                    }
                }
            }
        }
    }

    /// Nearest point within `r` (ties broken by lowest index).
    pub fn nearest_within(&self, q: &Point, r: f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for i in self.radius_query(q, r) {
            let d = dist2(&self.points[i], q);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Point], q: &Point, r: f64) -> Vec<usize> {
        (0..points.len()).filter(|&i| dist2(&points[i], q) <= r * r).collect()
    }

    #[test]
    fn empty_cloud_is_an_error() {
        let c = PointCloud::new(3, vec![], Point::zeros()).unwrap();
        assert!(matches!(build_index(&c), Err(Error::EmptyCloud)));
    }

    #[test]
    fn zero_radius_includes_the_point() {
        let c = PointCloud::from_coords(3, &[1.0, 2.0, 3.0], &[0.0; 3]).unwrap();
        let idx = build_index(&c).unwrap();
        assert_eq!(idx.radius_query(&Point::new(1.0, 2.0, 3.0), 0.0), vec![0]);
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dim in [2, 3] {
            let pts: Vec<Point> = (0..500)
                .map(|_| {
                    let z = if dim == 3 { rng.random_range(-5.0..5.0) } else { 0.0 };
                    Point::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), z)
                })
                .collect();
            let idx = NeighborhoodIndex::from_points(pts.clone(), dim).unwrap();
            for _ in 0..100 {
                let q = pts[rng.random_range(0..pts.len())]
                    + Point::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 0.0);
                let r = rng.random_range(0.0..3.0);
                assert_eq!(idx.radius_query(&q, r), brute(&pts, &q, r));
            }
        }
    }

    #[test]
    fn duplicates_are_returned_twice() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base: Vec<Point> = (0..80)
            .map(|_| Point::new(rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), 0.0))
            .collect();
        let mut pts = base.clone();
        pts.extend_from_slice(&base);
        let idx = NeighborhoodIndex::from_points(pts, 2).unwrap();
        for (i, q) in base.iter().enumerate() {
            let hits = idx.radius_query(q, 0.4);
            assert!(hits.contains(&i) && hits.contains(&(i + base.len())));
            let first: Vec<usize> = hits.iter().copied().filter(|&j| j < base.len()).collect();
            let second: Vec<usize> = hits.iter().filter(|&&j| j >= base.len()).map(|j| j - base.len()).collect();
            assert_eq!(first, second);
        }
    }

    #[test]
    fn nearest_prefers_lower_index_on_ties() {
        let c = PointCloud::from_coords(2, &[1.0, 0.0, -1.0, 0.0, 1.0, 0.0], &[0.0, 0.0]).unwrap();
        let idx = build_index(&c).unwrap();
        assert_eq!(idx.nearest_within(&Point::zeros(), 2.0), Some((0, 1.0)));
        assert_eq!(idx.nearest_within(&Point::zeros(), 0.5), None);
    }
}
