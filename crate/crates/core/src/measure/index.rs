//! kd-tree over the support points with per-node mass moments.
//!
//! The same tree answers nearest-distance and ball-mass queries and carries
//! the monopole/quadrupole data used by the treecode in the field engine.

use super::PointMeasure;
use crate::geometry::{dist, dist2, MAX_DIM};

const LEAF_SIZE: usize = 8;
/// Packed upper triangle of a symmetric MAX_DIM × MAX_DIM matrix.
pub const PACKED_LEN: usize = MAX_DIM * (MAX_DIM + 1) / 2;

#[inline]
pub fn packed_index(i: usize, j: usize, n: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

#[derive(Clone, Debug)]
pub struct Node {
    /// Range into the index's reordered point arrays.
    pub start: usize,
    pub end: usize,
    pub children: Option<(usize, usize)>,
    pub lo: [f64; MAX_DIM],
    pub hi: [f64; MAX_DIM],
    pub weight: f64,
    pub centroid: [f64; MAX_DIM],
    /// Central second moments Σ w (p−c)(p−c)ᵀ, packed upper triangle.
    pub second: [f64; PACKED_LEN],
    /// Largest distance from the centroid to a point of the node.
    pub radius: f64,
    /// Bounding-box diagonal.
    pub diameter: f64,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// Squared distance from `x` to the node's bounding box.
    pub fn box_dist2(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (k, xk) in x.iter().enumerate() {
            let e = if *xk < self.lo[k] {
                self.lo[k] - xk
            } else if *xk > self.hi[k] {
                xk - self.hi[k]
            } else {
                0.0
            };
            s += e * e;
        }
        s
    }

    /// Squared distance from `x` to the farthest corner of the bounding box.
    pub fn box_max_dist2(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(k, xk)| {
                let e = (xk - self.lo[k]).abs().max((xk - self.hi[k]).abs());
                e * e
            })
            .sum()
    }
}

/// Immutable kd-tree: median split on the widest box dimension, leaves of at
/// most eight points.
#[derive(Clone, Debug)]
pub struct SpatialIndex {
    n: usize,
    nodes: Vec<Node>,
    coords: Vec<f64>,
    weights: Vec<f64>,
    /// `perm[k]` is the original index of the k-th reordered point.
    perm: Vec<usize>,
}

impl SpatialIndex {
    pub fn build(m: &PointMeasure) -> Self {
        let n = m.ambient_dim();
        let mut perm: Vec<usize> = (0..m.len()).collect();
        let mut nodes = Vec::with_capacity(2 * m.len() / LEAF_SIZE + 1);
        build_node(m, &mut perm, 0, m.len(), &mut nodes);
        let coords = perm.iter().flat_map(|&i| m.point(i).iter().copied()).collect();
        let weights = perm.iter().map(|&i| m.weights()[i]).collect();
        SpatialIndex { n, nodes, coords, weights, perm }
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    /// Point `k` in tree order.
    #[inline]
    pub fn point(&self, k: usize) -> &[f64] {
        &self.coords[k * self.n..(k + 1) * self.n]
    }

    #[inline]
    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    pub fn original_index(&self, k: usize) -> usize {
        self.perm[k]
    }

    /// Exact nearest support point: (δ(x), original index).
    pub fn nearest(&self, x: &[f64]) -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.box_dist2(x) >= best.0 {
                continue;
            }
            match node.children {
                None => {
                    for k in node.start..node.end {
                        let d2 = dist2(self.point(k), x);
                        if d2 < best.0 || (d2 == best.0 && self.perm[k] < best.1) {
                            best = (d2, self.perm[k]);
                        }
                    }
                }
                Some((a, b)) => {
                    // visit the nearer child first
                    let (da, db) = (self.nodes[a].box_dist2(x), self.nodes[b].box_dist2(x));
                    if da <= db {
                        stack.push(b);
                        stack.push(a);
                    } else {
                        stack.push(a);
                        stack.push(b);
                    }
                }
            }
        }
        (best.0.sqrt(), best.1)
    }

    /// Distance to the nearest support point.
    pub fn delta(&self, x: &[f64]) -> f64 {
        self.nearest(x).0
    }

    /// μ(B̄(x, r)), closed ball.
    pub fn ball_mass(&self, x: &[f64], r: f64) -> f64 {
        let r2 = r * r;
        let mut total = 0.0;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.box_dist2(x) > r2 {
                continue;
            }
            if node.box_max_dist2(x) <= r2 {
                total += node.weight;
                continue;
            }
            match node.children {
                None => {
                    for k in node.start..node.end {
                        if dist2(self.point(k), x) <= r2 {
                            total += self.weights[k];
                        }
                    }
                }
                Some((a, b)) => {
                    stack.push(a);
                    stack.push(b);
                }
            }
        }
        total
    }

    /// Original indices of the points in B̄(x, r), ascending.
    pub fn points_in_ball(&self, x: &[f64], r: f64) -> Vec<usize> {
        let r2 = r * r;
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.box_dist2(x) > r2 {
                continue;
            }
            match node.children {
                None => {
                    for k in node.start..node.end {
                        if dist2(self.point(k), x) <= r2 {
                            out.push(self.perm[k]);
                        }
                    }
                }
                Some((a, b)) => {
                    stack.push(a);
                    stack.push(b);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

fn build_node(m: &PointMeasure, perm: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let n = m.ambient_dim();
    let mut lo = [0.0; MAX_DIM];
    let mut hi = [0.0; MAX_DIM];
    lo[..n].fill(f64::INFINITY);
    hi[..n].fill(f64::NEG_INFINITY);
    let mut weight = 0.0;
    let mut comp = 0.0;
    let mut first = [0.0; MAX_DIM];
    for &i in &perm[start..end] {
        let p = m.point(i);
        let w = m.weights()[i];
        for k in 0..n {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
            first[k] += w * p[k];
        }
        // Neumaier summation keeps node weights consistent with child sums
        let t = weight + w;
        comp += if weight.abs() >= w { (weight - t) + w } else { (w - t) + weight };
        weight = t;
    }
    weight += comp;
    let mut centroid = [0.0; MAX_DIM];
    for k in 0..n {
        centroid[k] = first[k] / weight;
    }
    let mut second = [0.0; PACKED_LEN];
    let mut radius2: f64 = 0.0;
    for &i in &perm[start..end] {
        let p = m.point(i);
        let w = m.weights()[i];
        let mut z = [0.0; MAX_DIM];
        for k in 0..n {
            z[k] = p[k] - centroid[k];
        }
        radius2 = radius2.max(z[..n].iter().map(|v| v * v).sum());
        for a in 0..n {
            for b in a..n {
                second[packed_index(a, b, n)] += w * z[a] * z[b];
            }
        }
    }
    let id = nodes.len();
    nodes.push(Node {
        start,
        end,
        children: None,
        lo,
        hi,
        weight,
        centroid,
        second,
        radius: radius2.sqrt(),
        diameter: dist(&lo[..n], &hi[..n]),
    });
    if end - start > LEAF_SIZE {
        let axis = (0..n).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
        let mid = start + (end - start) / 2;
        perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            m.point(a)[axis].total_cmp(&m.point(b)[axis]).then(a.cmp(&b))
        });
        let left = build_node(m, perm, start, mid, nodes);
        let right = build_node(m, perm, mid, end, nodes);
        nodes[id].children = Some((left, right));
    }
    id
}
