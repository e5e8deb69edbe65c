//! Central-difference validation of the analytic derivative chain.

use super::{FieldEngine, FieldError};
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct FdStep {
    pub step: f64,
    /// Per-component |FD − analytic| for ∇R, ∇D and ∇(|∇D|²).
    pub grad_r_err: Vec<f64>,
    pub grad_d_err: Vec<f64>,
    pub grad_norm_sq_err: Vec<f64>,
    /// Euclidean error norms relative to the analytic vector norm.
    pub rel_grad_r: f64,
    pub rel_grad_d: f64,
    pub rel_grad_norm_sq: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FdReport {
    pub x: Vec<f64>,
    pub delta: f64,
    pub steps: Vec<FdStep>,
    /// Least-squares slopes of log(relative error) against log(step).
    pub slope_grad_r: f64,
    pub slope_grad_d: f64,
    pub slope_grad_norm_sq: f64,
}

/// Least-squares slope of log y against log x.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

fn rel_norm(err: &[f64], reference: &[f64]) -> f64 {
    let e: f64 = err.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r: f64 = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
    e / r
}

/// Compare analytic gradients of R, D and |∇D|² at `x` with central
/// differences at steps `rel_steps[k]·δ(x)`. Uses direct summation so the
/// difference quotients see a smooth function.
pub fn finite_diff_check(e: &FieldEngine, x: &[f64], rel_steps: &[f64]) -> Result<FdReport, FieldError> {
    let center = e.eval_direct(x)?;
    let n = x.len();
    let floor = e.resolution_floor();
    let largest = rel_steps.iter().copied().fold(0.0, f64::max) * center.delta;
    if center.delta - largest < floor {
        return Err(FieldError::StencilUnresolved { delta: center.delta - largest, floor });
    }
    let mut steps = Vec::with_capacity(rel_steps.len());
    for &s in rel_steps {
        let h = s * center.delta;
        let mut gr = vec![0.0; n];
        let mut gd = vec![0.0; n];
        let mut gn = vec![0.0; n];
        for i in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let fp = e.eval_direct(&xp)?;
            let fm = e.eval_direct(&xm)?;
            gr[i] = (fp.r - fm.r) / (2.0 * h);
            gd[i] = (fp.d - fm.d) / (2.0 * h);
            gn[i] = (fp.norm_grad_d_sq - fm.norm_grad_d_sq) / (2.0 * h);
        }
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).abs()).collect::<Vec<f64>>();
        let grad_r_err = diff(&gr, &center.grad_r);
        let grad_d_err = diff(&gd, &center.grad_d);
        let grad_norm_sq_err = diff(&gn, &center.grad_norm_grad_d_sq);
        steps.push(FdStep {
            step: h,
            rel_grad_r: rel_norm(&grad_r_err, &center.grad_r),
            rel_grad_d: rel_norm(&grad_d_err, &center.grad_d),
            rel_grad_norm_sq: rel_norm(&grad_norm_sq_err, &center.grad_norm_grad_d_sq),
            grad_r_err,
            grad_d_err,
            grad_norm_sq_err,
        });
    }
    let hs: Vec<f64> = steps.iter().map(|s| s.step).collect();
    let slope = |f: &dyn Fn(&FdStep) -> f64| log_log_slope(&hs, &steps.iter().map(f).collect::<Vec<_>>());
    Ok(FdReport {
        x: x.to_vec(),
        delta: center.delta,
        slope_grad_r: slope(&|s| s.rel_grad_r),
        slope_grad_d: slope(&|s| s.rel_grad_d),
        slope_grad_norm_sq: slope(&|s| s.rel_grad_norm_sq),
        steps,
    })
}
