//! Non-tangential limits of |∇D| in cones, density profiles Θ^d(μ, Q) and
//! blow-up comparison against the flat model.

use crate::field::{flat_constants, FieldEngine, FieldError};
use crate::geometry::{dist, norm, pca_plane, unit_ball_volume};
use crate::measure::{rescale_blowup, MeasureError, PointMeasure, SpatialIndex};
use crate::rng::{halton, task_rng};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Oscillation tolerance of the CONVERGED verdict, relative to the mean.
pub const CONVERGENCE_TOL: f64 = 0.02;
/// Relative variation allowed over the last octave of a density plateau.
pub const PLATEAU_TOL: f64 = 0.05;

#[derive(Debug, Error)]
pub enum NtError {
    #[error("invalid cone: {0}")]
    InvalidCone(String),
    #[error("density must be positive, got {0}")]
    NonPositiveDensity(f64),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Γ_{R,η}(Q) = {x : |x − Q| < R, δ(x) ≥ η|x − Q|}.
#[derive(Clone, Debug, Serialize)]
pub struct ConeSpec {
    pub q: Vec<f64>,
    pub eta: f64,
    pub r_max: f64,
}

impl ConeSpec {
    pub fn validate(&self, engine: &FieldEngine) -> Result<(), NtError> {
        let m = engine.measure();
        if self.q.len() != m.ambient_dim() {
            return Err(NtError::InvalidCone(format!("base point has dimension {}, expected {}", self.q.len(), m.ambient_dim())));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(NtError::InvalidCone(format!("aperture {} outside (0, 1)", self.eta)));
        }
        if !(self.r_max > 0.0) {
            return Err(NtError::InvalidCone(format!("outer radius {} must be positive", self.r_max)));
        }
        let (d, _) = engine.index().nearest(&self.q);
        if d > m.spacing() {
            return Err(NtError::InvalidCone(format!("base point is {d} from the support (spacing {})", m.spacing())));
        }
        Ok(())
    }

    /// Dyadic radii R·2^{−j} down to the smallest scale whose annulus can
    /// still meet δ ≥ κh: r ≥ 2κh/η.
    pub fn scales(&self, floor: f64) -> Vec<f64> {
        let lo = 2.0 * floor / self.eta;
        let mut out = Vec::new();
        let mut r = self.r_max;
        while r >= lo && out.len() < 64 {
            out.push(r);
            r *= 0.5;
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConeSamples {
    pub r: f64,
    pub points: Vec<Vec<f64>>,
    pub attempts: usize,
    pub resolved: bool,
}

/// Rejection sampling of Γ_{r,η}(Q) ∩ {r/2 ≤ |x − Q| ≤ r, δ ≥ κh} at each
/// scale; a scale with no accepted sample is marked unresolved.
pub fn cone_sample(
    engine: &FieldEngine,
    cone: &ConeSpec,
    scales: &[f64],
    per_scale_count: usize,
    seed: u64,
) -> Result<Vec<ConeSamples>, NtError> {
    cone.validate(engine)?;
    let n = cone.q.len();
    let floor = engine.resolution_floor();
    let budget = 200 * per_scale_count.max(1);
    Ok(scales
        .par_iter()
        .enumerate()
        .map(|(j, &r)| {
            let mut rng = task_rng(seed, &format!("cone:{j}:{}", cone.eta));
            let mut points = Vec::new();
            let mut attempts = 0;
            while points.len() < per_scale_count && attempts < budget {
                attempts += 1;
                let dir: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let len = norm(&dir);
                if len == 0.0 {
                    continue;
                }
                let rho = rng.gen_range(0.5 * r..=r);
                let x: Vec<f64> = cone.q.iter().zip(&dir).map(|(q, v)| q + rho * v / len).collect();
                let delta = engine.delta(&x);
                if delta >= cone.eta * dist(&x, &cone.q) && delta >= floor {
                    points.push(x);
                }
            }
            ConeSamples { r, resolved: !points.is_empty(), points, attempts }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Converged,
    Oscillating,
    Unresolved,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScaleStat {
    pub r: f64,
    pub mean: f64,
    /// max − min of |∇D| over the scale's samples.
    pub oscillation: f64,
    pub n_samples: usize,
    pub resolved: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct NtProbe {
    pub q: Vec<f64>,
    pub eta: f64,
    pub scales: Vec<ScaleStat>,
    /// Mean |∇D| over the last three resolved scales.
    pub limit_estimate: Option<f64>,
    /// Relative oscillation of |∇D| over the samples of the last three
    /// resolved scales: (max − min)/mean.
    pub tail_oscillation: f64,
    pub verdict: Verdict,
    pub tol: f64,
}

pub fn nt_probe(
    engine: &FieldEngine,
    cone: &ConeSpec,
    scales: &[f64],
    per_scale_count: usize,
    seed: u64,
    tol: f64,
) -> Result<NtProbe, NtError> {
    let samples = cone_sample(engine, cone, scales, per_scale_count, seed)?;
    let mut stats = Vec::with_capacity(samples.len());
    let mut grads: Vec<Vec<f64>> = Vec::with_capacity(samples.len());
    for s in &samples {
        let g: Vec<f64> = engine
            .eval_batch(&s.points)
            .into_iter()
            .map(|e| e.map(|e| e.norm_grad_d()))
            .collect::<Result<_, _>>()?;
        let (lo, hi) = g.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let mean = if g.is_empty() { 0.0 } else { g.iter().sum::<f64>() / g.len() as f64 };
        stats.push(ScaleStat {
            r: s.r,
            mean,
            oscillation: if g.is_empty() { 0.0 } else { hi - lo },
            n_samples: g.len(),
            resolved: s.resolved,
        });
        grads.push(g);
    }
    Ok(assess(cone, stats, &grads, tol))
}

/// Verdict rule: CONVERGED when, over the last three resolved scales, every
/// per-scale oscillation and the spread of the per-scale means are below
/// tol·mean; UNRESOLVED with fewer than four resolved scales.
fn assess(cone: &ConeSpec, stats: Vec<ScaleStat>, grads: &[Vec<f64>], tol: f64) -> NtProbe {
    let resolved: Vec<usize> = (0..stats.len()).filter(|&j| stats[j].resolved).collect();
    let mut probe = NtProbe {
        q: cone.q.clone(),
        eta: cone.eta,
        scales: stats,
        limit_estimate: None,
        tail_oscillation: f64::NAN,
        verdict: Verdict::Unresolved,
        tol,
    };
    if resolved.len() < 4 {
        return probe;
    }
    let tail = &resolved[resolved.len() - 3..];
    let all: Vec<f64> = tail.iter().flat_map(|&j| grads[j].iter().copied()).collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let (lo, hi) = all.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let means: Vec<f64> = tail.iter().map(|&j| probe.scales[j].mean).collect();
    let (mlo, mhi) = means.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let within = tail.iter().all(|&j| probe.scales[j].oscillation < tol * mean);
    probe.limit_estimate = Some(mean);
    probe.tail_oscillation = (hi - lo) / mean;
    probe.verdict = if within && mhi - mlo < tol * mean { Verdict::Converged } else { Verdict::Oscillating };
    probe
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityProfile {
    pub q: Vec<f64>,
    pub radii: Vec<f64>,
    /// μ(B(Q, r)) / (V_d r^d)
    pub theta: Vec<f64>,
    /// Mean over the last octave when its relative variation is below 5%;
    /// None is the NO-DENSITY flag.
    pub plateau: Option<f64>,
    pub last_octave_variation: f64,
    /// max/min of the profile over all radii.
    pub spread: f64,
}

pub fn density_estimate(m: &PointMeasure, index: &SpatialIndex, q: &[f64], radii: &[f64]) -> DensityProfile {
    let vd = unit_ball_volume(m.hausdorff_dim());
    let theta: Vec<f64> = radii.iter().map(|&r| index.ball_mass(q, r) / (vd * r.powf(m.hausdorff_dim()))).collect();
    let r_min = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let octave: Vec<f64> = radii.iter().zip(&theta).filter(|(r, _)| **r <= 2.0 * r_min * (1.0 + 1e-12)).map(|(_, t)| *t).collect();
    let (lo, hi) = octave.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mean = octave.iter().sum::<f64>() / octave.len().max(1) as f64;
    let variation = if mean > 0.0 { (hi - lo) / mean } else { f64::INFINITY };
    let (alo, ahi) = theta.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    DensityProfile {
        q: q.to_vec(),
        radii: radii.to_vec(),
        plateau: (octave.len() >= 2 && variation < PLATEAU_TOL).then_some(mean),
        last_octave_variation: variation,
        spread: ahi / alo,
        theta,
    }
}

/// Non-tangential limit of |∇D| at a point of density Θ: c₂(d, α)·Θ^{−1/α}.
pub fn predicted_limit(d: f64, expo: f64, theta: f64) -> Result<f64, NtError> {
    if !(theta > 0.0) {
        return Err(NtError::NonPositiveDensity(theta));
    }
    let (_, c2) = flat_constants(d, expo)?;
    Ok(c2 * theta.powf(-1.0 / expo))
}

#[derive(Clone, Debug, Serialize)]
pub struct BlowupScale {
    pub r: f64,
    /// sup over the probe grid of |D_r(y)/(c₂Θ^{−1/α}·dist(y, P_r)) − 1|
    pub discrepancy: f64,
    /// λ_{d+1}/λ_d of the local PCA fit (0 for an exactly flat ball).
    pub fit_ratio: f64,
    pub probes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct BlowupReport {
    pub q: Vec<f64>,
    pub theta: f64,
    pub scales: Vec<BlowupScale>,
    pub monotone_decrease: bool,
    /// The PCA fit was unstable (ratio above 0.25) at some scale; the
    /// discrepancies are still reported as diagnostics.
    pub aborted: bool,
}

/// Compare D on blow-ups μ_{Q,r} against the flat model through the PCA
/// plane of μ⌞B(Q, r), on Halton probes of the unit annulus with δ ≥ 1/4.
pub fn blowup_compare(
    m: &PointMeasure,
    expo: f64,
    q: &[f64],
    radii: &[f64],
    theta: f64,
    probes: usize,
) -> Result<BlowupReport, NtError> {
    let n = m.ambient_dim();
    let d = m.hausdorff_dim();
    let model = predicted_limit(d, expo, theta)?;
    let dint = d as usize;
    let mut scales = Vec::with_capacity(radii.len());
    let mut aborted = false;
    for &r in radii {
        let b = rescale_blowup(m, q, r)?;
        let engine = FieldEngine::new(&b, crate::field::KernelParams::new(n, d, expo)?)?;
        let origin = vec![0.0; n];
        let local = engine.index().points_in_ball(&origin, 1.0);
        let pts: Vec<&[f64]> = local.iter().map(|&i| b.point(i)).collect();
        let w: Vec<f64> = local.iter().map(|&i| b.weights()[i]).collect();
        let Some((plane, eig)) = pca_plane(&pts, &w, dint, Some(&origin)) else {
            return Err(NtError::InvalidCone(format!("too few points for a plane fit at r = {r}")));
        };
        let fit_ratio = if eig[dint - 1] > 0.0 { eig.get(dint).copied().unwrap_or(0.0).max(0.0) / eig[dint - 1] } else { f64::INFINITY };
        aborted |= fit_ratio > 0.25;
        let ys: Vec<Vec<f64>> = (1..)
            .map(|i| halton(i, n).into_iter().map(|u| 2.0 * u - 1.0).collect::<Vec<f64>>())
            .filter(|y| {
                let s = norm(y);
                (0.5..=1.0).contains(&s)
            })
            .take(8 * probes)
            .filter(|y| engine.delta(y) >= 0.25)
            .take(probes)
            .collect();
        let discrepancy = ys
            .par_iter()
            .map(|y| {
                let flat = model * plane.distance(y);
                (engine.d_value(y) / flat - 1.0).abs()
            })
            .reduce(|| 0.0, f64::max);
        scales.push(BlowupScale { r, discrepancy, fit_ratio, probes: ys.len() });
    }
    let monotone_decrease = scales.windows(2).all(|w| w[1].discrepancy <= w[0].discrepancy);
    Ok(BlowupReport { q: q.to_vec(), theta, scales, monotone_decrease, aborted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::KernelParams;
    use crate::measure::{gen_flat_plane, gen_four_corner_cantor, gen_sphere, FlatPlaneSpec, DEFAULT_POINT_BUDGET};
    use std::f64::consts::PI;

    fn line() -> PointMeasure {
        gen_flat_plane(&FlatPlaneSpec::new(2, 1.0, 1.0, 1e9, 0.01).graded(20.0)).unwrap()
    }

    #[test]
    fn cone_samples_satisfy_both_inequalities() {
        let m = line();
        let e = FieldEngine::new(&m, KernelParams::new(2, 1.0, 1.0).unwrap()).unwrap();
        let cone = ConeSpec { q: vec![0.0, 0.0], eta: 0.5, r_max: 1.0 };
        let scales = cone.scales(e.resolution_floor());
        let sets = cone_sample(&e, &cone, &scales, 32, 7).unwrap();
        assert!(sets.iter().all(|s| s.resolved));
        for s in &sets {
            for x in &s.points {
                let rho = dist(x, &cone.q);
                assert!(rho >= 0.5 * s.r && rho <= s.r);
                let delta = e.delta(x);
                assert!(delta >= cone.eta * rho && delta >= e.resolution_floor());
            }
        }
    }

    #[test]
    fn flat_line_converges_to_c2() {
        let m = line();
        let e = FieldEngine::new(&m, KernelParams::new(2, 1.0, 1.0).unwrap()).unwrap();
        let cone = ConeSpec { q: vec![0.0, 0.0], eta: 0.5, r_max: 2.0 };
        let p = nt_probe(&e, &cone, &cone.scales(e.resolution_floor()), 32, 1, CONVERGENCE_TOL).unwrap();
        assert_eq!(p.verdict, Verdict::Converged);
        assert!((p.limit_estimate.unwrap() - 1.0 / PI).abs() < 1e-4);
    }

    #[test]
    fn empty_cone_is_flagged() {
        let m = gen_four_corner_cantor(6, 1.0, 2, DEFAULT_POINT_BUDGET).unwrap();
        let e = FieldEngine::new(&m, KernelParams::new(2, 1.0, 1.0).unwrap()).unwrap();
        // aperture close to 1 with a huge outer radius has room; a tiny
        // budget at deep scales around a corner point does not always
        let cone = ConeSpec { q: m.point(0).to_vec(), eta: 0.99, r_max: 0.05 };
        let sets = cone_sample(&e, &cone, &cone.scales(e.resolution_floor()), 4, 3).unwrap();
        for s in &sets {
            assert_eq!(s.resolved, !s.points.is_empty());
        }
        assert!(matches!(
            cone_sample(&e, &ConeSpec { q: vec![5.0, 5.0], eta: 0.5, r_max: 1.0 }, &[1.0], 4, 3),
            Err(NtError::InvalidCone(_))
        ));
    }

    #[test]
    fn predicted_limits() {
        assert!((predicted_limit(1.0, 1.0, 1.0).unwrap() - 1.0 / PI).abs() < 1e-12);
        assert!((predicted_limit(1.0, 1.0, 4.0).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-12);
        assert!(predicted_limit(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn density_profiles() {
        let plane = gen_flat_plane(&FlatPlaneSpec::new(3, 2.0, 1.5, 2.0, 0.02)).unwrap();
        let idx = SpatialIndex::build(&plane);
        let prof = density_estimate(&plane, &idx, &[0.0, 0.0, 0.0], &[0.8, 0.6, 0.4]);
        assert!(prof.theta.iter().all(|t| (t - 1.5).abs() < 0.05), "{:?}", prof.theta);
        let circle = gen_sphere(2, 1.0, 1.0, 1e-4).unwrap();
        let idx = SpatialIndex::build(&circle);
        let prof = density_estimate(&circle, &idx, circle.point(0), &[0.04, 0.03, 0.02]);
        assert!((prof.plateau.unwrap() - 1.0).abs() < 0.01);
        let cantor = gen_four_corner_cantor(8, 1.0, 2, DEFAULT_POINT_BUDGET).unwrap();
        let idx = SpatialIndex::build(&cantor);
        let radii: Vec<f64> = (2..12).map(|j| 2f64.powi(-j)).collect();
        let prof = density_estimate(&cantor, &idx, cantor.point(12345), &radii);
        assert!(prof.spread >= 1.2, "{}", prof.spread);
    }

    #[test]
    fn blowup_of_flat_line_is_exact() {
        let m = line();
        let rep = blowup_compare(&m, 1.0, &[0.0, 0.0], &[1.0, 0.5, 0.25], 1.0, 50).unwrap();
        assert!(!rep.aborted);
        for s in &rep.scales {
            assert!(s.discrepancy <= 1e-6, "{}", s.discrepancy);
            assert!(s.probes >= 40);
        }
    }
}
