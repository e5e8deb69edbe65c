//! Cartesian Taylor expansions of g(z) = |z|^{−q} to arbitrary order.
//!
//! With a_k the Taylor coefficients of g about z (a_k = ∂^k g(z)/k!), a
//! node with central monomial moments M_α = Σ w·(p − c)^α contributes
//! Σ_α (−1)^{|α|} M_α a_α(z) to R, and the analogous shifted sums to ∇R and
//! the Hessian. The coefficients follow from the recurrence
//!
//!   s‖k‖ a_k + 2(‖k‖ − 1 + q/2) Σ_i z_i a_{k−e_i} + (‖k‖ − 2 + q) Σ_i a_{k−2e_i} = 0,
//!
//! obtained by applying t·∇_t to (|z|² + 2z·t + |t|²)^{−q/2}.

use crate::geometry::MAX_DIM;
use crate::measure::SpatialIndex;
use rayon::prelude::*;

const NONE: usize = usize::MAX;

/// Multi-indices in n variables of total degree ≤ `max_deg`, sorted by
/// degree, with neighbour links.
#[derive(Clone, Debug)]
pub(crate) struct MonomialTable {
    n: usize,
    exps: Vec<[u8; MAX_DIM]>,
    degree: Vec<usize>,
    minus1: Vec<[usize; MAX_DIM]>,
    minus2: Vec<[usize; MAX_DIM]>,
    plus1: Vec<[usize; MAX_DIM]>,
}

impl MonomialTable {
    pub(crate) fn new(n: usize, max_deg: usize) -> Self {
        let mut exps: Vec<[u8; MAX_DIM]> = vec![[0; MAX_DIM]];
        let mut degree = vec![0];
        let mut frontier = vec![[0u8; MAX_DIM]];
        for deg in 1..=max_deg {
            let mut next: Vec<[u8; MAX_DIM]> = Vec::new();
            for e in &frontier {
                // extend only at or after the last nonzero slot, so each
                // multi-index is generated once
                let last = (0..n).rev().find(|&i| e[i] > 0).unwrap_or(0);
                for i in last..n {
                    let mut f = *e;
                    f[i] += 1;
                    next.push(f);
                }
            }
            degree.extend(std::iter::repeat_n(deg, next.len()));
            exps.extend(next.iter().copied());
            frontier = next;
        }
        let find = |e: &[u8; MAX_DIM]| exps.iter().position(|f| f == e).unwrap_or(NONE);
        let mut minus1 = vec![[NONE; MAX_DIM]; exps.len()];
        let mut minus2 = vec![[NONE; MAX_DIM]; exps.len()];
        let mut plus1 = vec![[NONE; MAX_DIM]; exps.len()];
        for (k, e) in exps.iter().enumerate() {
            for i in 0..n {
                if e[i] >= 1 {
                    let mut f = *e;
                    f[i] -= 1;
                    minus1[k][i] = find(&f);
                }
                if e[i] >= 2 {
                    let mut f = *e;
                    f[i] -= 2;
                    minus2[k][i] = find(&f);
                }
                if degree[k] < max_deg {
                    let mut f = *e;
                    f[i] += 1;
                    plus1[k][i] = find(&f);
                }
            }
        }
        MonomialTable { n, exps, degree, minus1, minus2, plus1 }
    }

    pub(crate) fn len(&self) -> usize {
        self.exps.len()
    }

    /// Number of monomials of degree ≤ deg.
    pub(crate) fn count_to(&self, deg: usize) -> usize {
        self.degree.partition_point(|&d| d <= deg)
    }

    fn monomial(&self, k: usize, y: &[f64]) -> f64 {
        (0..self.n).map(|i| y[i].powi(self.exps[k][i] as i32)).product()
    }

    /// Taylor coefficients a_k of |z + t|^{−q} in t, for every monomial.
    pub(crate) fn coefficients(&self, z: &[f64], q: f64, out: &mut [f64]) {
        let s: f64 = z[..self.n].iter().map(|v| v * v).sum();
        let p = 0.5 * q;
        out[0] = s.powf(-p);
        for k in 1..self.len() {
            let deg = self.degree[k] as f64;
            let mut lin = 0.0;
            let mut quad = 0.0;
            for i in 0..self.n {
                let a = self.minus1[k][i];
                if a != NONE {
                    lin += z[i] * out[a];
                }
                let b = self.minus2[k][i];
                if b != NONE {
                    quad += out[b];
                }
            }
            out[k] = -(2.0 * (deg - 1.0 + p) * lin + (deg - 2.0 + q) * quad) / (s * deg);
        }
    }
}

/// Central monomial moments of every tree node to a fixed order.
#[derive(Clone, Debug)]
pub(crate) struct Multipoles {
    pub(crate) table: MonomialTable,
    /// node-major, `count_to(order)` entries per node
    moments: Vec<f64>,
    stride: usize,
}

impl Multipoles {
    pub(crate) fn build(index: &SpatialIndex, order: usize) -> Self {
        let n = index.ambient_dim();
        let table = MonomialTable::new(n, order + 2);
        let stride = table.count_to(order);
        let mut moments = vec![0.0; stride * index.nodes().len()];
        moments.par_chunks_mut(stride).zip(index.nodes()).for_each(|(row, node)| {
            let mut y = [0.0; MAX_DIM];
            for p in node.start..node.end {
                let pt = index.point(p);
                for i in 0..n {
                    y[i] = pt[i] - node.centroid[i];
                }
                let w = index.weight(p);
                for (k, m) in row.iter_mut().enumerate() {
                    *m += w * table.monomial(k, &y);
                }
            }
        });
        Multipoles { table, moments, stride }
    }

    pub(crate) fn node(&self, id: usize) -> &[f64] {
        &self.moments[id * self.stride..(id + 1) * self.stride]
    }

    /// Add the node's expansion at z = x − centroid; `coef` is scratch of
    /// length `table.len()`.
    pub(crate) fn accept(&self, id: usize, z: &[f64], q: f64, coef: &mut [f64], acc: &mut super::KernelSums) {
        let t = &self.table;
        let n = t.n;
        t.coefficients(z, q, coef);
        let m = self.node(id);
        let mut kk = 0;
        let mut hess_idx = [[0usize; MAX_DIM]; MAX_DIM];
        for i in 0..n {
            for l in i..n {
                hess_idx[i][l] = kk;
                kk += 1;
            }
        }
        for (a, &ma) in m.iter().enumerate() {
            if ma == 0.0 {
                continue;
            }
            let sm = if t.degree[a].is_multiple_of(2) { ma } else { -ma };
            acc.r += sm * coef[a];
            for i in 0..n {
                let ai = t.plus1[a][i];
                let ei = t.exps[a][i] as f64;
                acc.grad[i] += sm * (ei + 1.0) * coef[ai];
                for l in i..n {
                    let ail = t.plus1[ai][l];
                    let c = if i == l { (ei + 1.0) * (ei + 2.0) } else { (ei + 1.0) * (t.exps[a][l] as f64 + 1.0) };
                    acc.hess[hess_idx[i][l]] += sm * c * coef[ail];
                }
            }
        }
    }
}

/// Tail of the Gegenbauer majorant: the degree-k term of the expansion of
/// |z − y|^{−q} is at most (q)_k/k!·|y|^k·|z|^{−q−k}, so truncating after
/// degree p leaves at most W·ρ^{−q}·Σ_{k>p} (q)_k/k!·u^k with u = a/ρ.
pub(crate) fn truncation_bound(weight: f64, a: f64, rho: f64, q: f64, p: usize) -> f64 {
    let u = a / rho;
    let mut term = 1.0;
    let mut head = 1.0;
    for k in 1..=p {
        term *= (q + k as f64 - 1.0) / k as f64 * u;
        head += term;
    }
    weight * rho.powf(-q) * ((1.0 - u).powf(-q) - head).max(0.0)
}
