//! Bilateral β-numbers and the BWGL bad-set count.

use super::{integer_dim, DiagError};
use crate::geometry::{dist, pca_plane, Plane};
use crate::measure::{PointMeasure, SpatialIndex};
use crate::optim::NelderMead;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Clone, Debug, Serialize)]
pub struct BetaResult {
    pub x: Vec<f64>,
    pub r: f64,
    /// (1/r)·[sup_{E∩B̄} dist(·, P) + sup_{P∩B̄} dist(·, E)]
    pub beta: f64,
    /// First term alone, for the same plane.
    pub one_sided: f64,
    pub plane: Plane,
}

#[derive(Clone, Copy, Debug)]
pub struct BetaOptions {
    /// Plane-grid spacing is max(h, r / grid_divisions) for the reported value.
    pub grid_divisions: f64,
    /// Coarser grid used inside the plane search.
    pub search_divisions: f64,
    pub max_evals: usize,
    /// Skip the plane search when the PCA plane already has β ≤ this.
    pub good_enough: f64,
}

impl Default for BetaOptions {
    fn default() -> Self {
        BetaOptions { grid_divisions: 128.0, search_divisions: 32.0, max_evals: 300, good_enough: 0.0 }
    }
}

/// Points c + Σ u_i b_i of a square grid of the given spacing in P ∩ B̄(x, r).
pub fn plane_ball_grid(plane: &Plane, x: &[f64], r: f64, spacing: f64) -> Vec<Vec<f64>> {
    let c = plane.project(x);
    let rho2 = r * r - crate::geometry::dist2(x, &c);
    if rho2 < 0.0 {
        return Vec::new();
    }
    let rho = rho2.sqrt();
    let k = (rho / spacing).floor() as i64;
    let d = plane.dim();
    let mut out = Vec::new();
    let mut idx = vec![-k; d];
    loop {
        let u2: f64 = idx.iter().map(|&i| (i as f64 * spacing).powi(2)).sum();
        if u2 <= rho2 {
            let mut y = c.clone();
            for (b, &i) in plane.basis.iter().zip(&idx) {
                for (yk, bk) in y.iter_mut().zip(b) {
                    *yk += i as f64 * spacing * bk;
                }
            }
            out.push(y);
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == d {
                return out;
            }
            idx[pos] += 1;
            if idx[pos] <= k {
                break;
            }
            idx[pos] = -k;
            pos += 1;
        }
    }
}

struct BetaObjective<'a> {
    index: &'a SpatialIndex,
    local: Vec<&'a [f64]>,
    x: &'a [f64],
    r: f64,
}

impl BetaObjective<'_> {
    fn terms(&self, plane: &Plane, spacing: f64) -> (f64, f64) {
        let first = self.local.iter().map(|p| plane.distance(p)).fold(0.0, f64::max);
        let grid = plane_ball_grid(plane, self.x, self.r, spacing);
        if grid.is_empty() {
            return (first, f64::INFINITY);
        }
        let second = grid.iter().map(|y| self.index.delta(y)).fold(0.0, f64::max);
        (first, second)
    }
}

/// β_b(x, r): PCA seed, then Nelder–Mead over tilt and offset of the plane.
pub fn beta_bilateral(
    m: &PointMeasure,
    index: &SpatialIndex,
    x: &[f64],
    r: f64,
    opts: &BetaOptions,
) -> Result<BetaResult, DiagError> {
    let d = integer_dim(m.hausdorff_dim())?;
    let ids = index.points_in_ball(x, r);
    if ids.len() < d + 1 {
        return Err(DiagError::TooFewPoints { found: ids.len(), need: d + 1 });
    }
    let local: Vec<&[f64]> = ids.iter().map(|&i| m.point(i)).collect();
    let weights: Vec<f64> = ids.iter().map(|&i| m.weights()[i]).collect();
    let obj = BetaObjective { index, local, x, r };
    let h = m.spacing();
    let fine = h.max(r / opts.grid_divisions);
    let coarse = h.max(r / opts.search_divisions);

    let mut seeds = Vec::new();
    if let Some((p, _)) = pca_plane(&obj.local, &weights, d, None) {
        seeds.push(p);
    }
    if let Some((p, _)) = pca_plane(&obj.local, &weights, d, Some(x)) {
        seeds.push(p);
    }
    let value = |p: &Plane, s: f64| {
        let (a, b) = obj.terms(p, s);
        (a + b) / r
    };
    let mut best: Option<(f64, Plane)> = None;
    for seed in &seeds {
        let v = value(seed, fine);
        if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
            best = Some((v, seed.clone()));
        }
    }
    let (mut best_value, mut best_plane) = best.ok_or(DiagError::TooFewPoints { found: ids.len(), need: d + 1 })?;
    if best_value > opts.good_enough {
        for seed in &seeds {
            let normals = seed.normals();
            let k = normals.len();
            let dim = d * k + k;
            let nm = NelderMead { max_evals: opts.max_evals, f_tol: 1e-9, initial_step: 0.1 };
            let plane_of = |t: &[f64]| {
                let shift: Vec<f64> = t[d * k..].iter().map(|s| s * r).collect();
                seed.perturbed(&normals, &t[..d * k], &shift)
            };
            let found = nm.minimize(|t| value(&plane_of(t), coarse), &vec![0.0; dim]);
            let plane = plane_of(&found.x);
            let v = value(&plane, fine);
            if v < best_value {
                best_value = v;
                best_plane = plane;
            }
        }
    }
    let (first, _) = obj.terms(&best_plane, fine);
    Ok(BetaResult { x: x.to_vec(), r, beta: best_value, one_sided: first / r, plane: best_plane })
}

#[derive(Clone, Debug, Serialize)]
pub struct BwglScale {
    pub r: f64,
    pub pairs: usize,
    pub bad_pairs: usize,
    pub bad_mass: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BwglReport {
    pub center: Vec<f64>,
    pub radius: f64,
    pub tau: f64,
    pub scales: Vec<BwglScale>,
    /// Σ over bad (cell, scale) pairs of cell mass · ln 2, divided by R^d.
    pub normalized_count: f64,
    pub max_beta: f64,
}

/// Empirical left side of the BWGL Carleson condition in B(X, R): at each
/// dyadic scale r = R·2^{−j} ≥ r_min, support points in B(X, R) are grouped
/// into cubes of side r, each represented by its point nearest the cube's
/// mass centroid; the pair (representative, r) is bad when β_b > τ.
pub fn bwgl_count(
    m: &PointMeasure,
    index: &SpatialIndex,
    center: &[f64],
    radius: f64,
    r_min: f64,
    tau: f64,
    opts: &BetaOptions,
) -> Result<BwglReport, DiagError> {
    let d = m.hausdorff_dim();
    integer_dim(d)?;
    let ids = index.points_in_ball(center, radius);
    let opts = BetaOptions { good_enough: tau, ..*opts };
    let mut scales = Vec::new();
    let mut total = 0.0;
    let mut max_beta: f64 = 0.0;
    let mut r = radius;
    while r >= r_min {
        let mut cubes: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
        for &i in &ids {
            let key = m.point(i).iter().map(|v| (v / r).floor() as i64).collect();
            cubes.entry(key).or_default().push(i);
        }
        let reps: Vec<(usize, f64)> = cubes
            .values()
            .map(|members| {
                let mass: f64 = members.iter().map(|&i| m.weights()[i]).sum();
                let n = m.ambient_dim();
                let mut c = vec![0.0; n];
                for &i in members {
                    for (ck, pk) in c.iter_mut().zip(m.point(i)) {
                        *ck += m.weights()[i] * pk / mass;
                    }
                }
                let rep = *members
                    .iter()
                    .min_by(|&&a, &&b| dist(m.point(a), &c).total_cmp(&dist(m.point(b), &c)).then(a.cmp(&b)))
                    .expect("non-empty cube");
                (rep, mass)
            })
            .collect();
        let betas: Vec<Result<f64, DiagError>> = reps
            .par_iter()
            .map(|&(rep, _)| match beta_bilateral(m, index, m.point(rep), r, &opts) {
                Ok(b) => Ok(b.beta),
                // too few points for a plane fit: the pair is maximally bad
                Err(DiagError::TooFewPoints { .. }) => Ok(f64::INFINITY),
                Err(e) => Err(e),
            })
            .collect();
        let mut bad = 0;
        let mut bad_mass = 0.0;
        for (b, (_, mass)) in betas.into_iter().zip(&reps) {
            let b = b?;
            if b.is_finite() {
                max_beta = max_beta.max(b);
            }
            if b > tau {
                bad += 1;
                bad_mass += mass;
            }
        }
        total += bad_mass * std::f64::consts::LN_2;
        scales.push(BwglScale { r, pairs: reps.len(), bad_pairs: bad, bad_mass });
        r *= 0.5;
    }
    Ok(BwglReport {
        center: center.to_vec(),
        radius,
        tau,
        scales,
        normalized_count: total / radius.powf(d),
        max_beta,
    })
}
