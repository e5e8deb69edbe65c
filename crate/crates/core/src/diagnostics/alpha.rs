//! Local Wasserstein distance to flat measures and the α-number.

use super::beta::plane_ball_grid;
use super::transport::solve_transport;
use super::{integer_dim, DiagError};
use crate::geometry::{dist, pca_plane, Plane};
use crate::measure::{PointMeasure, SpatialIndex};
use crate::optim::NelderMead;
use serde::Serialize;

/// ν = λ·H^d restricted to a d-plane.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlatMeasure {
    pub plane: Plane,
    pub density: f64,
}

impl FlatMeasure {
    /// Grid discretization of ν⌞B(x, r) (open ball): points at the given
    /// spacing, each weighted λ·spacing^d.
    pub fn discretize(&self, x: &[f64], r: f64, spacing: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let pts: Vec<Vec<f64>> = plane_ball_grid(&self.plane, x, r, spacing).into_iter().filter(|y| dist(y, x) < r).collect();
        let w = self.density * spacing.powi(self.plane.dim() as i32);
        let weights = vec![w; pts.len()];
        (pts, weights)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AlphaOptions {
    /// ν grid spacing; defaults to the measure spacing.
    pub nu_spacing: Option<f64>,
    /// Nelder–Mead budget for the outer search (0 disables refinement).
    pub max_evals: usize,
    pub max_pivots: usize,
}

impl Default for AlphaOptions {
    fn default() -> Self {
        AlphaOptions { nu_spacing: None, max_evals: 120, max_pivots: 2_000_000 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AlphaProblem {
    pub x: Vec<f64>,
    pub r: f64,
    /// r^{−d−1}·LP value for the best ν found.
    pub alpha: f64,
    pub lp_value: f64,
    pub flat: FlatMeasure,
    /// Joint support of μ⌞B and the discretized ν, with signed masses μ − ν.
    pub support: Vec<Vec<f64>>,
    pub signed_mass: Vec<f64>,
    /// Optimal 1-Lipschitz test function on `support`.
    pub test_function: Vec<f64>,
    /// Σ f·(μ − ν) for `test_function`.
    pub certificate: f64,
    /// The LP hit its pivot cap.
    pub approximate: bool,
    pub evaluations: usize,
}

/// μ⌞B(x, r) minus the discretized ν, merging coincident points.
fn signed_support(
    m: &PointMeasure,
    index: &SpatialIndex,
    local: &[usize],
    nu_pts: Vec<Vec<f64>>,
    nu_w: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut support: Vec<Vec<f64>> = local.iter().map(|&i| m.point(i).to_vec()).collect();
    let mut signed: Vec<f64> = local.iter().map(|&i| m.weights()[i]).collect();
    let tol = 1e-9 * m.spacing();
    for (y, w) in nu_pts.into_iter().zip(nu_w) {
        let (d, i) = index.nearest(&y);
        if d <= tol {
            if let Ok(slot) = local.binary_search(&i) {
                signed[slot] -= w;
                continue;
            }
        }
        support.push(y);
        signed.push(-w);
    }
    (support, signed)
}

struct Evaluation {
    lp_value: f64,
    support: Vec<Vec<f64>>,
    signed: Vec<f64>,
    test_function: Vec<f64>,
    certificate: f64,
    approximate: bool,
}

/// 𝒟_{x,r}(μ, ν)·r^{d+1}: the LP value for a fixed flat measure.
pub fn wasserstein_to_flat(
    m: &PointMeasure,
    index: &SpatialIndex,
    x: &[f64],
    r: f64,
    flat: &FlatMeasure,
    nu_spacing: f64,
    max_pivots: usize,
) -> (f64, bool) {
    let local: Vec<usize> = index.points_in_ball(x, r).into_iter().filter(|&i| dist(m.point(i), x) < r).collect();
    let e = evaluate(m, index, x, r, &local, flat, nu_spacing, max_pivots);
    (e.lp_value, e.approximate)
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    m: &PointMeasure,
    index: &SpatialIndex,
    x: &[f64],
    r: f64,
    local: &[usize],
    flat: &FlatMeasure,
    nu_spacing: f64,
    max_pivots: usize,
) -> Evaluation {
    let (nu_pts, nu_w) = flat.discretize(x, r, nu_spacing);
    let (support, signed) = signed_support(m, index, local, nu_pts, &nu_w);
    let boundary: Vec<f64> = support.iter().map(|p| r - dist(p, x)).collect();
    let sol = solve_transport(&support, &signed, &boundary, max_pivots);
    Evaluation {
        lp_value: sol.value,
        support,
        signed,
        test_function: sol.test_function,
        certificate: sol.certificate,
        approximate: sol.approximate,
    }
}

/// α(x, r): PCA plane and mass-matched density as the seed, then a local
/// Nelder–Mead search over tilt, normal offset and log-density.
pub fn alpha_number(
    m: &PointMeasure,
    index: &SpatialIndex,
    x: &[f64],
    r: f64,
    opts: &AlphaOptions,
) -> Result<AlphaProblem, DiagError> {
    let d = integer_dim(m.hausdorff_dim())?;
    let local: Vec<usize> = index.points_in_ball(x, r).into_iter().filter(|&i| dist(m.point(i), x) < r).collect();
    if local.len() < d + 1 {
        return Err(DiagError::TooFewPoints { found: local.len(), need: d + 1 });
    }
    let pts: Vec<&[f64]> = local.iter().map(|&i| m.point(i)).collect();
    let weights: Vec<f64> = local.iter().map(|&i| m.weights()[i]).collect();
    let mass: f64 = weights.iter().sum();
    let (seed, _) = pca_plane(&pts, &weights, d, None).ok_or(DiagError::TooFewPoints { found: local.len(), need: d + 1 })?;
    let h_nu = opts.nu_spacing.unwrap_or(m.spacing());
    // mass matching against the discrete volume of the ν grid, so a grid
    // coinciding with μ's own gets exactly μ's density
    let matched = |plane: &Plane| -> f64 {
        let count = plane_ball_grid(plane, x, r, h_nu).iter().filter(|y| dist(y, x) < r).count();
        if count == 0 {
            0.0
        } else {
            mass / (count as f64 * h_nu.powi(d as i32))
        }
    };
    let normals = seed.normals();
    let k = normals.len();
    let flat_of = |t: &[f64]| -> FlatMeasure {
        let shift: Vec<f64> = t[d * k..d * k + k].iter().map(|s| s * r).collect();
        let plane = seed.perturbed(&normals, &t[..d * k], &shift);
        let density = matched(&plane) * t[d * k + k].exp();
        FlatMeasure { plane, density }
    };
    let scale = r.powf(d as f64 + 1.0);
    let mut evaluations = 0;
    let t0 = vec![0.0; d * k + k + 1];
    let mut best_t = t0.clone();
    if opts.max_evals > 0 {
        let nm = NelderMead { max_evals: opts.max_evals, f_tol: 1e-10, initial_step: 0.05 };
        let found = nm.minimize(
            |t| {
                let flat = flat_of(t);
                if flat.density <= 0.0 {
                    return f64::INFINITY;
                }
                evaluate(m, index, x, r, &local, &flat, h_nu, opts.max_pivots).lp_value
            },
            &t0,
        );
        evaluations = found.evals;
        best_t = found.x;
    }
    let mut flat = flat_of(&best_t);
    let mut e = evaluate(m, index, x, r, &local, &flat, h_nu, opts.max_pivots);
    // the seed itself is a candidate (the search may not improve on it)
    let seed_flat = flat_of(&t0);
    if seed_flat != flat {
        let es = evaluate(m, index, x, r, &local, &seed_flat, h_nu, opts.max_pivots);
        if es.lp_value <= e.lp_value {
            e = es;
            flat = seed_flat;
        }
    }
    evaluations += 2;
    Ok(AlphaProblem {
        x: x.to_vec(),
        r,
        alpha: e.lp_value / scale,
        lp_value: e.lp_value,
        flat,
        support: e.support,
        signed_mass: e.signed,
        test_function: e.test_function,
        certificate: e.certificate,
        approximate: e.approximate,
        evaluations,
    })
}
