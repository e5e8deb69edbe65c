//! The magic exponent α = n − d − 2: harmonicity of R, the degenerate
//! operator L = −div(D^{−(n−d−1)}∇·), corkscrew points and the harmonic
//! measure surrogate D(A_r(Q))/r.

use crate::field::{FieldEngine, FieldError, KernelParams};
use crate::geometry::{dist, norm};
use crate::ntlimits::{DensityProfile, NtProbe, Verdict};
use crate::rng::halton;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Default finite-difference ladder, as fractions of δ(x).
pub const FD_LADDER: [f64; 4] = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
pub const CORKSCREW_BUDGET: usize = 4096;

#[derive(Debug, Error)]
pub enum MagicError {
    #[error("no magic exponent: α = n − d − 2 = {alpha} must be positive")]
    NoMagic { alpha: f64 },
    #[error("stencil at {x:?} reaches within {reach} of the support (floor {floor})")]
    StencilUnresolved { x: Vec<f64>, reach: f64, floor: f64 },
    #[error("corkscrew search found δ(A) = {delta} < r/64 = {}", r / 64.0)]
    GeometryTooTight { delta: f64, r: f64 },
    #[error("Poisson prediction refused: {0}")]
    Refused(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

pub fn magic_alpha(n: usize, d: f64) -> Result<f64, MagicError> {
    let alpha = n as f64 - d - 2.0;
    if alpha > 0.0 {
        Ok(alpha)
    } else {
        Err(MagicError::NoMagic { alpha })
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MagicConfig {
    pub n: usize,
    pub d: f64,
    pub alpha: f64,
    /// Finite-difference steps as fractions of δ(x).
    pub ladder: [f64; 4],
}

impl MagicConfig {
    pub fn new(n: usize, d: f64) -> Result<Self, MagicError> {
        Ok(MagicConfig { n, d, alpha: magic_alpha(n, d)?, ladder: FD_LADDER })
    }

    /// Same geometry with an arbitrary exponent, for non-magic contrasts.
    pub fn with_alpha(n: usize, d: f64, alpha: f64) -> Result<Self, MagicError> {
        KernelParams::new(n, d, alpha)?;
        Ok(MagicConfig { n, d, alpha, ladder: FD_LADDER })
    }

    pub fn kernel(&self) -> KernelParams {
        KernelParams::new(self.n, self.d, self.alpha).expect("validated on construction")
    }

    pub fn is_magic(&self) -> bool {
        (self.alpha - (self.n as f64 - self.d - 2.0)).abs() < 1e-12
    }

    /// α(α − (n − d − 2)): the normalized Laplacian δ²ΔR/R of R = c·δ^{−α}
    /// around a flat d-plane (zero exactly at the magic exponent).
    pub fn flat_residual(&self) -> f64 {
        self.alpha * (self.alpha - (self.n as f64 - self.d - 2.0))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LadderStep {
    pub step: f64,
    pub value: f64,
    /// |value| in the ladder's normalization.
    pub normalized: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LaplacianLadder {
    pub x: Vec<f64>,
    pub delta: f64,
    pub r: f64,
    /// δ²·ΔR/R from the analytic Hessian.
    pub analytic_normalized: f64,
    pub steps: Vec<LadderStep>,
    /// log-log slope of the normalized residual against the step.
    pub slope: f64,
    /// Richardson extrapolation of the signed normalized FD value.
    pub extrapolated: f64,
}

fn check_stencil(engine: &FieldEngine, x: &[f64], delta: f64, max_step: f64) -> Result<(), MagicError> {
    let reach = delta - max_step;
    if reach < engine.resolution_floor() {
        return Err(MagicError::StencilUnresolved { x: x.to_vec(), reach, floor: engine.resolution_floor() });
    }
    Ok(())
}

fn shifted(x: &[f64], i: usize, h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[i] += h;
    y
}

/// Central-difference Laplacian of R on the ladder h = δ(x)·ladder,
/// normalized by R(x)/δ(x)². Uses direct summation so the stencil sees a
/// smooth function.
pub fn laplacian_r_residual(engine: &FieldEngine, mc: &MagicConfig, x: &[f64]) -> Result<LaplacianLadder, MagicError> {
    let centre = engine.eval_direct(x)?;
    let delta = centre.delta;
    check_stencil(engine, x, delta, mc.ladder[0] * delta)?;
    let n = x.len();
    let r0 = centre.r;
    let norm_by = r0 / (delta * delta);
    let steps: Vec<LadderStep> = mc
        .ladder
        .par_iter()
        .map(|&f| {
            let h = f * delta;
            let mut lap = 0.0;
            for i in 0..n {
                let plus = engine.sums_direct(&shifted(x, i, h)).r;
                let minus = engine.sums_direct(&shifted(x, i, -h)).r;
                lap += (plus - 2.0 * r0 + minus) / (h * h);
            }
            LadderStep { step: h, value: lap, normalized: (lap / norm_by).abs() }
        })
        .collect();
    let analytic = centre.hess_r_laplacian() / norm_by;
    Ok(finish_ladder(x, delta, r0, analytic, steps))
}

fn finish_ladder(x: &[f64], delta: f64, r: f64, analytic: f64, steps: Vec<LadderStep>) -> LaplacianLadder {
    let hs: Vec<f64> = steps.iter().map(|s| s.step).collect();
    let vs: Vec<f64> = steps.iter().map(|s| s.normalized.max(f64::MIN_POSITIVE)).collect();
    let slope = crate::field::log_log_slope(&hs, &vs);
    let k = steps.len();
    let signed = |s: &LadderStep| s.value.signum() * s.normalized;
    // consecutive ladder steps halve h, so (4·L(h/2) − L(h))/3 removes O(h²)
    let extrapolated = (4.0 * signed(&steps[k - 1]) - signed(&steps[k - 2])) / 3.0;
    LaplacianLadder { x: x.to_vec(), delta, r, analytic_normalized: analytic, steps, slope, extrapolated }
}

#[derive(Clone, Debug, Serialize)]
pub struct OperatorLadder {
    /// FD values of L D = −div(D^{−(n−d−1)}∇D), normalized by D^{−(n−d−1)}·D/δ².
    pub operator: LaplacianLadder,
    /// Per step: |L D − (1/α)ΔR| in the same normalization, FD on both sides.
    pub identity_gap: Vec<f64>,
}

/// FD divergence of the weighted gradient, with analytic ∇D at the stencil
/// points, compared against (1/α) times the FD Laplacian of R.
pub fn operator_residual(engine: &FieldEngine, mc: &MagicConfig, x: &[f64]) -> Result<OperatorLadder, MagicError> {
    let centre = engine.eval_direct(x)?;
    let delta = centre.delta;
    check_stencil(engine, x, delta, mc.ladder[0] * delta)?;
    let n = x.len();
    let p = n as f64 - mc.d - 1.0;
    let norm_by = centre.d.powf(-p) * centre.d / (delta * delta);
    let lap = laplacian_r_residual(engine, mc, x)?;
    let flux = |y: &[f64], i: usize| -> Result<f64, FieldError> {
        let e = engine.eval_direct(y)?;
        Ok(e.d.powf(-p) * e.grad_d[i])
    };
    let results: Vec<Result<(LadderStep, f64), MagicError>> = mc
        .ladder
        .par_iter()
        .zip(&lap.steps)
        .map(|(&f, ls)| {
            let h = f * delta;
            let mut div = 0.0;
            for i in 0..n {
                div += (flux(&shifted(x, i, h), i)? - flux(&shifted(x, i, -h), i)?) / (2.0 * h);
            }
            let value = -div;
            let gap = (value - ls.value / mc.alpha).abs() / norm_by;
            Ok((LadderStep { step: h, value, normalized: (value / norm_by).abs() }, gap))
        })
        .collect();
    let (steps, identity_gap): (Vec<_>, Vec<_>) = results.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().unzip();
    let analytic = centre.hess_r_laplacian() / mc.alpha / norm_by;
    Ok(OperatorLadder { operator: finish_ladder(x, delta, centre.r, analytic, steps), identity_gap })
}

#[derive(Clone, Debug, Serialize)]
pub struct CorkscrewPoint {
    pub q: Vec<f64>,
    pub r: f64,
    pub a: Vec<f64>,
    pub delta_a: f64,
    /// r/δ(A)
    pub m_emp: f64,
}

/// A_r(Q): maximize δ over B(Q, r) with `budget` Halton candidates followed
/// by a compass-search ascent that stays inside the ball.
pub fn corkscrew_point(engine: &FieldEngine, q: &[f64], r: f64, budget: usize) -> Result<CorkscrewPoint, MagicError> {
    let n = q.len();
    let candidates: Vec<Vec<f64>> = (1..)
        .map(|i| halton(i, n).into_iter().map(|u| 2.0 * u - 1.0).collect::<Vec<f64>>())
        .filter(|u| norm(u) <= 1.0)
        .take(budget.max(1))
        .map(|u| q.iter().zip(&u).map(|(qi, ui)| qi + r * ui).collect())
        .collect();
    let deltas: Vec<f64> = candidates.par_iter().map(|y| engine.delta(y)).collect();
    let mut best = 0;
    for k in 1..deltas.len() {
        if deltas[k] > deltas[best] {
            best = k;
        }
    }
    let mut a = candidates[best].clone();
    let mut da = deltas[best];
    let mut step = 0.25 * r;
    while step > 1e-6 * r {
        let mut improved = false;
        for i in 0..n {
            for s in [step, -step] {
                let y = shifted(&a, i, s);
                if dist(&y, q) > r {
                    continue;
                }
                let dy = engine.delta(&y);
                if dy > da {
                    a = y;
                    da = dy;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    if da < r / 64.0 {
        return Err(MagicError::GeometryTooTight { delta: da, r });
    }
    Ok(CorkscrewPoint { q: q.to_vec(), r, a, delta_a: da, m_emp: r / da })
}

#[derive(Clone, Debug, Serialize)]
pub struct SurrogateProfile {
    pub q: Vec<f64>,
    pub radii: Vec<f64>,
    pub corkscrews: Vec<CorkscrewPoint>,
    pub d_at_a: Vec<f64>,
    /// D(A_r(Q))/r, proportional to r^{d−1}D(A_r(Q))/r^d.
    pub profile: Vec<f64>,
    pub spread: f64,
}

pub fn omega_surrogate(engine: &FieldEngine, q: &[f64], radii: &[f64], budget: usize) -> Result<SurrogateProfile, MagicError> {
    let corkscrews: Vec<CorkscrewPoint> =
        radii.iter().map(|&r| corkscrew_point(engine, q, r, budget)).collect::<Result<_, _>>()?;
    let d_at_a: Vec<f64> = corkscrews.iter().map(|c| engine.d_value(&c.a)).collect();
    let profile: Vec<f64> = d_at_a.iter().zip(radii).map(|(d, r)| d / r).collect();
    let (lo, hi) = profile.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(SurrogateProfile { q: q.to_vec(), radii: radii.to_vec(), corkscrews, d_at_a, profile, spread: hi / lo })
}

#[derive(Clone, Debug, Serialize)]
pub struct PoissonPrediction {
    pub q: Vec<f64>,
    /// Non-tangential limit L of |∇D| at Q.
    pub limit: f64,
    /// L^{−(n−d−2)}
    pub predicted: f64,
    pub theta: f64,
    /// predicted/Θ, constant across base points when the Poisson kernel is
    /// a multiple of the density.
    pub ratio: f64,
}

pub fn poisson_prediction(mc: &MagicConfig, probe: &NtProbe, density: &DensityProfile) -> Result<PoissonPrediction, MagicError> {
    if !mc.is_magic() {
        return Err(MagicError::Refused(format!("α = {} is not the magic exponent", mc.alpha)));
    }
    if probe.verdict != Verdict::Converged {
        return Err(MagicError::Refused(format!("non-tangential probe verdict is {:?}", probe.verdict)));
    }
    let theta = density.plateau.ok_or_else(|| MagicError::Refused("no density plateau".into()))?;
    let limit = probe.limit_estimate.expect("converged probes carry a limit");
    let predicted = limit.powf(-(mc.n as f64 - mc.d - 2.0));
    Ok(PoissonPrediction { q: probe.q.clone(), limit, predicted, theta, ratio: predicted / theta })
}
