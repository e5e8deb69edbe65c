//! R(x) = Σ w_i |x − p_i|^{−q}, q = d + α, the regularized distance
//! D = R^{−1/α}, their derivatives and the square functions F, F̃.
//!
//! Sums are formed either directly (pairwise summation over all points) or
//! with a kd-tree treecode; both feed the same closed-form assembly.

mod fd;
mod multipole;
mod tree;

pub use fd::{finite_diff_check, log_log_slope, FdReport, FdStep};
pub use tree::{Expansion, TreeOptions};

use crate::geometry::MAX_DIM;
use crate::measure::{packed_index, PointMeasure, SpatialIndex, DEFAULT_KAPPA, PACKED_LEN};
use crate::quadrature::{integrate, QuadratureError};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma;
use thiserror::Error;

/// |∇D| below this makes F̃ undefined.
pub const CRITICAL_GRADIENT: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid kernel parameters: {0}")]
    InvalidKernel(String),
    #[error("query dimension {got} does not match ambient dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("query lies {distance} from a support point (spacing {spacing}); the kernel is singular there")]
    SingularQuery { distance: f64, spacing: f64 },
    #[error("finite-difference stencil reaches δ = {delta} below the resolution floor {floor}")]
    StencilUnresolved { delta: f64, floor: f64 },
    #[error("flat measures require an integer dimension, got d = {0}")]
    NonIntegerDimension(f64),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Exponent data of the kernel |z|^{−d−expo}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelParams {
    pub n: usize,
    pub d: f64,
    pub expo: f64,
}

impl KernelParams {
    pub fn new(n: usize, d: f64, expo: f64) -> Result<Self, FieldError> {
        if !(expo > 0.0 && expo.is_finite()) {
            return Err(FieldError::InvalidKernel(format!("exponent must be positive, got {expo}")));
        }
        if !(d > 0.0 && d < n as f64) || n > MAX_DIM {
            return Err(FieldError::InvalidKernel(format!("need 0 < d < n <= {MAX_DIM}, got d = {d}, n = {n}")));
        }
        Ok(KernelParams { n, d, expo })
    }

    /// Kernel parameters matching a measure's dimensions.
    pub fn for_measure(m: &PointMeasure, expo: f64) -> Result<Self, FieldError> {
        Self::new(m.ambient_dim(), m.hausdorff_dim(), expo)
    }

    /// Decay power q = d + expo.
    pub fn q(&self) -> f64 {
        self.d + self.expo
    }
}

/// Kernel sums at one point: R, ∇R and the packed upper triangle of ∇²R.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KernelSums {
    pub r: f64,
    pub grad: [f64; MAX_DIM],
    pub hess: [f64; PACKED_LEN],
}

impl KernelSums {
    pub(crate) fn add(&mut self, o: &KernelSums) {
        self.r += o.r;
        for (a, b) in self.grad.iter_mut().zip(&o.grad) {
            *a += b;
        }
        for (a, b) in self.hess.iter_mut().zip(&o.hess) {
            *a += b;
        }
    }

    /// Add w·g(z), w·∇g(z), w·∇²g(z) for g(z) = |z|^{−q}, z = x − p:
    /// ∂_i g = −q z_i |z|^{−q−2}, ∂_ij g = q(q+2) z_i z_j |z|^{−q−4} − q δ_ij |z|^{−q−2}.
    #[inline]
    pub(crate) fn add_point(&mut self, z: &[f64], w: f64, q: f64) {
        let n = z.len();
        let s: f64 = z.iter().map(|v| v * v).sum();
        let g = w * s.powf(-0.5 * q);
        let inv = 1.0 / s;
        self.r += g;
        let g1 = -q * g * inv;
        let g2 = q * (q + 2.0) * g * inv * inv;
        let mut k = 0;
        for i in 0..n {
            self.grad[i] += g1 * z[i];
            for j in i..n {
                self.hess[k] += g2 * z[i] * z[j] + if i == j { g1 } else { 0.0 };
                k += 1;
            }
        }
    }

    pub fn hess_entry(&self, i: usize, j: usize, n: usize) -> f64 {
        self.hess[packed_index(i, j, n)]
    }

    pub fn laplacian(&self, n: usize) -> f64 {
        (0..n).map(|i| self.hess_entry(i, i, n)).sum()
    }
}

/// Everything the diagnostics need at one query point.
#[derive(Clone, Debug, Serialize)]
pub struct FieldEval {
    pub x: Vec<f64>,
    pub r: f64,
    pub grad_r: Vec<f64>,
    pub hess_r: Vec<Vec<f64>>,
    pub d: f64,
    pub grad_d: Vec<f64>,
    pub norm_grad_d_sq: f64,
    pub grad_norm_grad_d_sq: Vec<f64>,
    pub f: f64,
    /// `None` where |∇D| < 1e−10 (critical points).
    pub ftilde: Option<f64>,
    pub delta: f64,
    pub resolved: bool,
    /// Upper estimate of kernel mass missing from a truncated window.
    pub tail_bound: f64,
    /// Accumulated treecode truncation bound on R (0 for direct sums).
    pub tree_error_bound: f64,
}

impl FieldEval {
    pub fn norm_grad_d(&self) -> f64 {
        self.norm_grad_d_sq.sqrt()
    }

    /// ΔR from the analytic Hessian.
    pub fn hess_r_laplacian(&self) -> f64 {
        (0..self.hess_r.len()).map(|i| self.hess_r[i][i]).sum()
    }

    /// Closed-form assembly from kernel sums.
    pub fn assemble(
        x: &[f64],
        sums: &KernelSums,
        k: &KernelParams,
        delta: f64,
        resolved: bool,
        tail_bound: f64,
        tree_error_bound: f64,
    ) -> Self {
        let n = k.n;
        let a = k.expo;
        let r = sums.r;
        let gr = &sums.grad[..n];
        let d_val = r.powf(-1.0 / a);
        // ∇D = −(1/α) R^{−1/α−1} ∇R
        let cd = -(1.0 / a) * d_val / r;
        let grad_d: Vec<f64> = gr.iter().map(|g| cd * g).collect();
        let gr2: f64 = gr.iter().map(|g| g * g).sum();
        // |∇D|² = α^{−2} R^{−2/α−2} |∇R|²
        let p = d_val * d_val / (r * r) / (a * a);
        let norm_grad_d_sq = p * gr2;
        // ∂_i|∇D|² = α^{−2} R^{−2/α−2} [ −(2+2α)/α · ∂_iR |∇R|²/R + 2 Σ_j ∂_jR ∂_ijR ]
        let grad_norm_grad_d_sq: Vec<f64> = (0..n)
            .map(|i| {
                let hg: f64 = (0..n).map(|j| sums.hess_entry(i, j, n) * gr[j]).sum();
                p * (-(2.0 + 2.0 * a) / a * gr[i] * gr2 / r + 2.0 * hg)
            })
            .collect();
        let f = delta * grad_norm_grad_d_sq.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ngd = norm_grad_d_sq.sqrt();
        let ftilde = (ngd >= CRITICAL_GRADIENT).then(|| f / (2.0 * ngd));
        let hess_r = (0..n).map(|i| (0..n).map(|j| sums.hess_entry(i, j, n)).collect()).collect();
        FieldEval {
            x: x.to_vec(),
            r,
            grad_r: gr.to_vec(),
            hess_r,
            d: d_val,
            grad_d,
            norm_grad_d_sq,
            grad_norm_grad_d_sq,
            f,
            ftilde,
            delta,
            resolved,
            tail_bound,
            tree_error_bound,
        }
    }
}

/// How kernel sums are formed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Summation {
    Direct,
    Tree(TreeOptions),
}

/// Field evaluator bound to one measure and kernel.
pub struct FieldEngine<'a> {
    m: &'a PointMeasure,
    index: SpatialIndex,
    kernel: KernelParams,
    kappa: f64,
    summation: Summation,
    multipoles: Option<multipole::Multipoles>,
}

const PAIRWISE_BLOCK: usize = 64;

impl<'a> FieldEngine<'a> {
    pub fn new(m: &'a PointMeasure, kernel: KernelParams) -> Result<Self, FieldError> {
        if kernel.n != m.ambient_dim() || kernel.d != m.hausdorff_dim() {
            return Err(FieldError::InvalidKernel(format!(
                "kernel (n = {}, d = {}) does not match measure (n = {}, d = {})",
                kernel.n,
                kernel.d,
                m.ambient_dim(),
                m.hausdorff_dim()
            )));
        }
        Ok(FieldEngine { m, index: SpatialIndex::build(m), kernel, kappa: DEFAULT_KAPPA, summation: Summation::Direct, multipoles: None })
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_summation(mut self, summation: Summation) -> Self {
        self.summation = summation;
        if let Summation::Tree(TreeOptions { expansion: Expansion::Hexadecapole, .. }) = summation {
            if self.multipoles.is_none() {
                self.multipoles = Some(multipole::Multipoles::build(&self.index, Expansion::Hexadecapole.order()));
            }
        }
        self
    }

    pub fn measure(&self) -> &PointMeasure {
        self.m
    }
    pub fn index(&self) -> &SpatialIndex {
        &self.index
    }
    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn summation(&self) -> Summation {
        self.summation
    }

    /// Smallest δ at which quantities count as resolved.
    pub fn resolution_floor(&self) -> f64 {
        self.kappa * self.m.spacing()
    }

    pub fn delta(&self, x: &[f64]) -> f64 {
        self.index.delta(x)
    }

    fn check_query(&self, x: &[f64]) -> Result<f64, FieldError> {
        if x.len() != self.kernel.n {
            return Err(FieldError::DimensionMismatch { expected: self.kernel.n, got: x.len() });
        }
        let delta = self.index.delta(x);
        if delta < 0.1 * self.m.spacing() {
            return Err(FieldError::SingularQuery { distance: delta, spacing: self.m.spacing() });
        }
        Ok(delta)
    }

    /// Direct kernel sums with pairwise (cascade) summation.
    pub fn sums_direct(&self, x: &[f64]) -> KernelSums {
        self.pairwise(x, 0, self.m.len())
    }

    fn pairwise(&self, x: &[f64], lo: usize, hi: usize) -> KernelSums {
        if hi - lo <= PAIRWISE_BLOCK {
            let q = self.kernel.q();
            let mut acc = KernelSums::default();
            let mut z = [0.0; MAX_DIM];
            for i in lo..hi {
                for (zk, (xk, pk)) in z.iter_mut().zip(x.iter().zip(self.m.point(i))) {
                    *zk = xk - pk;
                }
                acc.add_point(&z[..x.len()], self.m.weights()[i], q);
            }
            return acc;
        }
        let mid = lo + (hi - lo) / 2;
        let mut a = self.pairwise(x, lo, mid);
        a.add(&self.pairwise(x, mid, hi));
        a
    }

    /// Kernel sums by the configured method, with the treecode error bound.
    pub fn sums(&self, x: &[f64]) -> (KernelSums, f64) {
        match self.summation {
            Summation::Direct => (self.sums_direct(x), 0.0),
            Summation::Tree(opts) => tree::tree_sums(&self.index, self.multipoles.as_ref(), &self.kernel, &opts, x),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<FieldEval, FieldError> {
        let delta = self.check_query(x)?;
        let (sums, bound) = self.sums(x);
        Ok(FieldEval::assemble(
            x,
            &sums,
            &self.kernel,
            delta,
            delta >= self.resolution_floor(),
            self.m.tail_bound(x, self.kernel.expo),
            bound,
        ))
    }

    /// Direct summation regardless of the configured method.
    pub fn eval_direct(&self, x: &[f64]) -> Result<FieldEval, FieldError> {
        let delta = self.check_query(x)?;
        let sums = self.sums_direct(x);
        Ok(FieldEval::assemble(
            x,
            &sums,
            &self.kernel,
            delta,
            delta >= self.resolution_floor(),
            self.m.tail_bound(x, self.kernel.expo),
            0.0,
        ))
    }

    /// D alone (cheaper than a full evaluation; no singularity check).
    pub fn d_value(&self, x: &[f64]) -> f64 {
        self.sums(x).0.r.powf(-1.0 / self.kernel.expo)
    }

    /// Parallel batch evaluation; output order follows input order.
    pub fn eval_batch(&self, xs: &[Vec<f64>]) -> Vec<Result<FieldEval, FieldError>> {
        xs.par_iter().map(|x| self.eval(x)).collect()
    }
}

/// c₁ = ∫_{ℝ^d} (1+|u|²)^{−(d+expo)/2} du and c₂ = c₁^{−1/expo}, so that a flat
/// measure of density λ has R = c₁λ δ^{−expo} and D = c₂ λ^{−1/expo} δ.
pub fn flat_constants(d: f64, expo: f64) -> Result<(f64, f64), FieldError> {
    if d.fract() != 0.0 || d < 1.0 {
        return Err(FieldError::NonIntegerDimension(d));
    }
    if !(expo > 0.0) {
        return Err(FieldError::InvalidKernel(format!("exponent must be positive, got {expo}")));
    }
    // radial form with u = tan θ: |S^{d−1}| ∫_0^{π/2} sin^{d−1}θ cos^{expo−1}θ dθ,
    // then s = π/2 − θ = v^{1/expo} to absorb the endpoint power
    let sphere = 2.0 * std::f64::consts::PI.powf(d / 2.0) / gamma(d / 2.0);
    let top = std::f64::consts::FRAC_PI_2.powf(expo);
    let radial = integrate(
        |v: f64| {
            let s = v.powf(1.0 / expo);
            let sinc = if s < 1e-8 { 1.0 - s * s / 6.0 } else { s.sin() / s };
            s.cos().powf(d - 1.0) * sinc.powf(expo - 1.0) / expo
        },
        0.0,
        top,
        1e-14,
        1e-13,
    )?;
    let c1 = sphere * radial;
    Ok((c1, c1.powf(-1.0 / expo)))
}
