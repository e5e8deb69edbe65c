//! Barnes–Hut treecode for the kernel sums.
//!
//! A node is summarised by a single expansion about its weighted centroid
//! when θ·|x − c| ≥ node diameter. With g(z) = φ(|z|²), φ(s) = s^{−q/2}, the
//! centroid makes the dipole term vanish, so the monopole already has a
//! second-order error; the optional quadrupole term
//! ½ Σ_ab M_ab ∂_ab g(z) (M the central second moment) pushes it to third
//! order, and the hexadecapole expansion carries all moments through degree 4.

use super::multipole::{truncation_bound, Multipoles};
use super::{KernelParams, KernelSums};
use crate::geometry::MAX_DIM;
use crate::measure::{packed_index, Node, SpatialIndex};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Expansion {
    Monopole,
    Quadrupole,
    Hexadecapole,
}

impl Expansion {
    /// Highest moment degree carried (the dipole of a centroid expansion
    /// vanishes, so the monopole is exact through degree 1).
    pub fn order(self) -> usize {
        match self {
            Expansion::Monopole => 1,
            Expansion::Quadrupole => 2,
            Expansion::Hexadecapole => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeOptions {
    /// Opening parameter in [0, 0.7]; θ = 0 opens every node.
    pub theta: f64,
    pub expansion: Expansion,
}

impl TreeOptions {
    pub fn new(theta: f64, expansion: Expansion) -> Self {
        TreeOptions { theta: theta.clamp(0.0, 0.7), expansion }
    }
}

/// Kernel sums and the accumulated truncation bound on R.
pub(super) fn tree_sums(
    index: &SpatialIndex,
    multipoles: Option<&Multipoles>,
    k: &KernelParams,
    opts: &TreeOptions,
    x: &[f64],
) -> (KernelSums, f64) {
    let n = k.n;
    let mut coef = multipoles.map(|mp| vec![0.0; mp.table.len()]).unwrap_or_default();
    let q = k.q();
    let mut acc = KernelSums::default();
    let mut bound = 0.0;
    let mut stack = vec![0usize];
    let mut z = [0.0; MAX_DIM];
    while let Some(id) = stack.pop() {
        let node = &index.nodes()[id];
        for i in 0..n {
            z[i] = x[i] - node.centroid[i];
        }
        let rho2: f64 = z[..n].iter().map(|v| v * v).sum();
        let rho = rho2.sqrt();
        if node.len() > 1 && opts.theta * rho >= node.diameter && rho > node.radius {
            match (opts.expansion, multipoles) {
                (Expansion::Hexadecapole, Some(mp)) => mp.accept(id, &z[..n], q, &mut coef, &mut acc),
                (Expansion::Hexadecapole, None) => panic!("hexadecapole expansion needs precomputed moments"),
                _ => accept(node, &z[..n], rho2, q, opts.expansion, &mut acc),
            }
            bound += truncation_bound(node.weight, node.radius, rho, q, opts.expansion.order());
            continue;
        }
        match node.children {
            Some((a, b)) => {
                stack.push(b);
                stack.push(a);
            }
            None => {
                for p in node.start..node.end {
                    let pt = index.point(p);
                    for i in 0..n {
                        z[i] = x[i] - pt[i];
                    }
                    acc.add_point(&z[..n], index.weight(p), q);
                }
            }
        }
    }
    (acc, bound)
}

fn accept(node: &Node, z: &[f64], s: f64, q: f64, expansion: Expansion, acc: &mut KernelSums) {
    let n = z.len();
    acc.add_point(z, node.weight, q);
    if expansion == Expansion::Monopole {
        return;
    }
    let p = 0.5 * q;
    // φ^{(k)}(s) for φ(s) = s^{−p}
    let f0 = s.powf(-p);
    let f1 = -p * f0 / s;
    let f2 = -(p + 1.0) * f1 / s;
    let f3 = -(p + 2.0) * f2 / s;
    let f4 = -(p + 3.0) * f3 / s;
    let m = |i: usize, j: usize| node.second[packed_index(i, j, n)];
    let mut mz = [0.0; MAX_DIM];
    let mut tr = 0.0;
    for i in 0..n {
        mz[i] = (0..n).map(|j| m(i, j) * z[j]).sum();
        tr += m(i, i);
    }
    let zmz: f64 = (0..n).map(|i| z[i] * mz[i]).sum();
    acc.r += 2.0 * f2 * zmz + f1 * tr;
    for i in 0..n {
        acc.grad[i] += 4.0 * f3 * z[i] * zmz + 2.0 * f2 * (tr * z[i] + 2.0 * mz[i]);
    }
    let mut k = 0;
    for i in 0..n {
        for l in i..n {
            let delta = if i == l { 1.0 } else { 0.0 };
            acc.hess[k] += 8.0 * f4 * z[i] * z[l] * zmz
                + 4.0 * f3 * (delta * zmz + tr * z[i] * z[l] + 2.0 * z[i] * mz[l] + 2.0 * z[l] * mz[i])
                + 2.0 * f2 * (delta * tr + 2.0 * m(i, l));
            k += 1;
        }
    }
}
