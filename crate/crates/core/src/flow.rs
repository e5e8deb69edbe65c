//! Gradient flow of D: trajectories dφ/dt = −∇D(φ), projection estimates
//! p(x) and the D/δ comparison.

use crate::field::{FieldEngine, FieldError, CRITICAL_GRADIENT};
use crate::geometry::{dist, dot, norm, sub};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("start point has δ = {delta} below the resolution floor {floor}")]
    UnresolvedStart { delta: f64, floor: f64 },
    #[error("|∇D| = {grad} fell below 1e-10 at t = {t}: the flow stagnates")]
    Stagnation { grad: f64, t: f64 },
    #[error("step size underflow ({dt}) at t = {t}")]
    StepUnderflow { dt: f64, t: f64 },
    #[error("no termination within {0} steps")]
    StepLimit(usize),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Direction {
    /// dφ/dt = −∇D, towards E.
    Descent,
    /// dφ/dt = +∇D, the reversed flow.
    Ascent,
}

#[derive(Clone, Copy, Debug)]
pub struct FlowControl {
    pub direction: Direction,
    /// Stop after this much pseudo-time (descent also stops at δ < κh).
    pub max_time: Option<f64>,
    /// Local error tolerance relative to δ(φ).
    pub rtol: f64,
    /// Each step moves at most this fraction of δ(φ).
    pub step_fraction: f64,
    pub max_steps: usize,
}

impl Default for FlowControl {
    fn default() -> Self {
        FlowControl { direction: Direction::Descent, max_time: None, rtol: 1e-9, step_fraction: 0.1, max_steps: 100_000 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowSample {
    pub t: f64,
    pub phi: Vec<f64>,
    pub d: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowTrace {
    pub x0: Vec<f64>,
    pub samples: Vec<FlowSample>,
    /// Nearest support point to the terminal position (descent traces that
    /// reached the resolution floor), else the terminal position itself.
    pub p: Vec<f64>,
    /// Polyline length including the final snap segment.
    pub arc_length: f64,
    /// Largest distance from a polyline vertex to the segment [x0, p].
    pub chord_deviation: f64,
    pub terminal_delta: f64,
    /// Distance covered by the nearest-point snap.
    pub snap_distance: f64,
    pub reached_floor: bool,
}

impl FlowTrace {
    pub fn d_strictly_decreasing(&self) -> bool {
        self.samples.windows(2).all(|w| w[1].d < w[0].d)
    }
}

fn segment_distance(y: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(&ab, &ab);
    if len2 == 0.0 {
        return dist(y, a);
    }
    let t = (dot(&sub(y, a), &ab) / len2).clamp(0.0, 1.0);
    let proj: Vec<f64> = a.iter().zip(&ab).map(|(ai, v)| ai + t * v).collect();
    dist(y, &proj)
}

// Dormand–Prince 5(4) tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

pub fn integrate_flow(engine: &FieldEngine, x0: &[f64], ctrl: &FlowControl) -> Result<FlowTrace, FlowError> {
    let floor = engine.resolution_floor();
    let start = engine.eval(x0)?;
    if !start.resolved {
        return Err(FlowError::UnresolvedStart { delta: start.delta, floor });
    }
    let sign = match ctrl.direction {
        Direction::Descent => -1.0,
        Direction::Ascent => 1.0,
    };
    let rhs = |y: &[f64]| -> Result<(Vec<f64>, f64, f64, f64), FlowError> {
        let f = engine.eval(y)?;
        Ok((f.grad_d.iter().map(|g| sign * g).collect(), f.norm_grad_d(), f.d, f.delta))
    };
    let mut y = x0.to_vec();
    let mut t = 0.0;
    let (mut k1, mut grad, mut d_now, mut delta) = rhs(&y)?;
    let mut samples = vec![FlowSample { t, phi: y.clone(), d: d_now, delta }];
    let mut dt = ctrl.step_fraction * delta / grad.max(CRITICAL_GRADIENT);
    let mut reached_floor = false;
    for _ in 0..ctrl.max_steps {
        if ctrl.direction == Direction::Descent && delta < floor {
            reached_floor = true;
            break;
        }
        if let Some(tmax) = ctrl.max_time {
            if t >= tmax * (1.0 - 1e-15) {
                break;
            }
        }
        if grad < CRITICAL_GRADIENT {
            return Err(FlowError::Stagnation { grad, t });
        }
        let cap = ctrl.step_fraction * delta / grad;
        dt = dt.min(cap);
        if let Some(tmax) = ctrl.max_time {
            dt = dt.min(tmax - t);
        }
        if dt <= 1e-14 * (t.abs() + delta / grad) {
            return Err(FlowError::StepUnderflow { dt, t });
        }
        // one Dormand–Prince attempt
        let n = y.len();
        let mut ks: Vec<Vec<f64>> = vec![k1.clone()];
        for s in 1..7 {
            let ys: Vec<f64> = (0..n).map(|i| y[i] + dt * (0..s).map(|j| A[s][j] * ks[j][i]).sum::<f64>()).collect();
            ks.push(rhs(&ys)?.0);
        }
        let _ = C;
        let y5: Vec<f64> = (0..n).map(|i| y[i] + dt * (0..7).map(|j| B5[j] * ks[j][i]).sum::<f64>()).collect();
        let err: f64 = (0..n)
            .map(|i| (dt * (0..7).map(|j| (B5[j] - B4[j]) * ks[j][i]).sum::<f64>()).powi(2))
            .sum::<f64>()
            .sqrt();
        let tol = ctrl.rtol * delta;
        if err <= tol {
            t += dt;
            y = y5;
            let next = rhs(&y)?;
            k1 = next.0;
            grad = next.1;
            d_now = next.2;
            delta = next.3;
            samples.push(FlowSample { t, phi: y.clone(), d: d_now, delta });
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0) };
        dt *= factor;
    }
    if !reached_floor && ctrl.max_time.is_none_or(|tm| t < tm * (1.0 - 1e-12)) {
        return Err(FlowError::StepLimit(ctrl.max_steps));
    }
    let end = samples.last().expect("at least the start sample").phi.clone();
    let (p, snap) = if reached_floor {
        let (dn, i) = engine.index().nearest(&end);
        (engine.measure().point(i).to_vec(), dn)
    } else {
        (end.clone(), 0.0)
    };
    let mut arc = snap;
    for w in samples.windows(2) {
        arc += dist(&w[0].phi, &w[1].phi);
    }
    let chord = samples.iter().map(|s| segment_distance(&s.phi, x0, &p)).fold(0.0, f64::max);
    Ok(FlowTrace {
        x0: x0.to_vec(),
        terminal_delta: samples.last().map(|s| s.delta).unwrap_or(delta),
        samples,
        p,
        arc_length: arc,
        chord_deviation: chord,
        snap_distance: snap,
        reached_floor,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ProjectionSample {
    pub x: Vec<f64>,
    pub delta: f64,
    pub d: f64,
    pub p: Vec<f64>,
    /// (|p(x) − x| − δ(x)) / δ(x)
    pub gap: f64,
    pub d_over_delta: f64,
    pub chord_deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProjectionStats {
    pub samples: Vec<ProjectionSample>,
    pub max_abs_gap: f64,
    pub d_over_delta_min: f64,
    pub d_over_delta_max: f64,
    /// max/min of D/δ over the samples.
    pub d_over_delta_spread: f64,
}

/// Flow every sample to E and compare |p(x) − x| with δ(x), and D with δ.
pub fn projection_gap(engine: &FieldEngine, xs: &[Vec<f64>], ctrl: &FlowControl) -> Result<ProjectionStats, FlowError> {
    let results: Vec<Result<ProjectionSample, FlowError>> = xs
        .par_iter()
        .map(|x| {
            let trace = integrate_flow(engine, x, ctrl)?;
            let start = &trace.samples[0];
            let reach = dist(&trace.p, x);
            Ok(ProjectionSample {
                x: x.clone(),
                delta: start.delta,
                d: start.d,
                gap: (reach - start.delta) / start.delta,
                d_over_delta: start.d / start.delta,
                chord_deviation: trace.chord_deviation,
                p: trace.p,
            })
        })
        .collect();
    let samples = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let max_abs_gap = samples.iter().map(|s| s.gap.abs()).fold(0.0, f64::max);
    let lo = samples.iter().map(|s| s.d_over_delta).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.d_over_delta).fold(0.0, f64::max);
    Ok(ProjectionStats { samples, max_abs_gap, d_over_delta_min: lo, d_over_delta_max: hi, d_over_delta_spread: hi / lo })
}

/// Euclidean length helper for reports.
pub fn displacement(trace: &FlowTrace) -> f64 {
    norm(&sub(&trace.p, &trace.x0))
}
