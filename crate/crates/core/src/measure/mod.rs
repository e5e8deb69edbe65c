//! Weighted point-cloud approximations of Ahlfors-regular measures.
//!
//! A [`PointMeasure`] is an immutable list of weighted points in ℝⁿ together
//! with the metadata the rest of the crate needs to decide what it can
//! resolve: the Hausdorff dimension `d`, the finest inter-point spacing `h`,
//! and, for windows cut out of unbounded sets, the truncation window used for
//! far-field tail estimates.

mod audit;
mod generators;
mod index;
mod io;

pub use audit::{admissible_radii, audit_regularity, dyadic_radii, interior_centers, RegularityAudit};
pub use generators::{
    gen_flat_plane, gen_four_corner_cantor, gen_lipschitz_graph, gen_sphere, FlatPlaneSpec, Grading,
    GraphSpec, Profile, DEFAULT_POINT_BUDGET,
};
pub use index::{packed_index, Node, SpatialIndex, PACKED_LEN};
pub use io::{read_measure, write_measure};

use crate::geometry::{dist, MAX_DIM};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Resolution-validity factor: quantities at δ(x) < κ·h are flagged unresolved.
pub const DEFAULT_KAPPA: f64 = 5.0;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("invalid measure: {0}")]
    Invalid(String),
    #[error("flat measures require an integer dimension, got d = {0}")]
    NonIntegerDimension(f64),
    #[error("degenerate generator parameters: {0}")]
    Degenerate(String),
    #[error("{requested} points exceed the configured budget of {budget}")]
    PointBudget { requested: usize, budget: usize },
    #[error("unknown graph profile `{0}`")]
    UnknownProfile(String),
    #[error("unsupported (n, d) combination ({n}, {d}) for this generator")]
    Unsupported { n: usize, d: f64 },
    #[error("rescaling radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("blow-up center is {distance} away from the support (spacing {spacing})")]
    CenterOffSupport { distance: f64, spacing: f64 },
    #[error("no admissible radius in [{lo}, {hi}]")]
    EmptyRadiusWindow { lo: f64, hi: f64 },
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Truncation window of a measure cut out of an unbounded set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub center: Vec<f64>,
    /// Every point of the untruncated set within this distance of `center`
    /// is represented.
    pub radius: f64,
}

#[derive(Clone, Debug)]
pub struct PointMeasure {
    n: usize,
    d: f64,
    coords: Vec<f64>,
    weights: Vec<f64>,
    spacing: f64,
    total_mass: f64,
    label: String,
    window: Option<Window>,
}

impl PointMeasure {
    /// Build a measure from flat coordinates (`n` per point) and weights,
    /// checking every structural invariant.
    pub fn new(
        n: usize,
        d: f64,
        coords: Vec<f64>,
        weights: Vec<f64>,
        spacing: f64,
        label: impl Into<String>,
    ) -> Result<Self, MeasureError> {
        let m = PointMeasure {
            n,
            d,
            total_mass: weights.iter().sum(),
            coords,
            weights,
            spacing,
            label: label.into(),
            window: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_window(mut self, window: Window) -> Self {
        self.window = Some(window);
        self
    }

    fn validate(&self) -> Result<(), MeasureError> {
        let bad = |s: String| Err(MeasureError::Invalid(s));
        if self.n < 2 || self.n > MAX_DIM {
            return bad(format!("ambient dimension {} outside [2, {MAX_DIM}]", self.n));
        }
        if !(self.d > 0.0 && self.d < self.n as f64) {
            return bad(format!("need 0 < d < n, got d = {} with n = {}", self.d, self.n));
        }
        if self.weights.is_empty() {
            return bad("empty point list".into());
        }
        if self.coords.len() != self.n * self.weights.len() {
            return bad(format!(
                "{} coordinates for {} points in dimension {}",
                self.coords.len(),
                self.weights.len(),
                self.n
            ));
        }
        if let Some(i) = self.weights.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
            return bad(format!("weight {} of point {i} is not strictly positive", self.weights[i]));
        }
        if self.coords.iter().any(|c| !c.is_finite()) {
            return bad("non-finite coordinate".into());
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return bad(format!("spacing must be positive, got {}", self.spacing));
        }
        if let Some(nn) = self.sampled_min_nn_distance(64) {
            if self.spacing > 4.0 * nn {
                return bad(format!(
                    "spacing {} exceeds 4x the sampled nearest-neighbour distance {nn}",
                    self.spacing
                ));
            }
        }
        Ok(())
    }

    /// Minimum nearest-neighbour distance over an evenly strided sample of
    /// points (brute force); `None` for single-point measures.
    pub fn sampled_min_nn_distance(&self, samples: usize) -> Option<f64> {
        let count = self.len();
        if count < 2 {
            return None;
        }
        let stride = (count / samples.max(1)).max(1);
        let mut best = f64::INFINITY;
        for i in (0..count).step_by(stride) {
            let p = self.point(i);
            for j in 0..count {
                if j != i {
                    best = best.min(dist(p, self.point(j)));
                }
            }
        }
        Some(best)
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }
    pub fn hausdorff_dim(&self) -> f64 {
        self.d
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }
    pub fn label(&self) -> &str {
        &self.label
    }
    pub fn window(&self) -> Option<&Window> {
        self.window.as_ref()
    }
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.n..(i + 1) * self.n]
    }
    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.n)
    }

    /// Axis-aligned bounding box (lo, hi).
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.n];
        let mut hi = vec![f64::NEG_INFINITY; self.n];
        for p in self.points() {
            for k in 0..self.n {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// Diameter proxy: the bounding-box diagonal.
    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        dist(&lo, &hi)
    }

    /// Largest admissible Carleson / probe radius: a quarter of the window
    /// radius for truncated windows, the diameter for complete sets.
    pub fn max_probe_radius(&self) -> f64 {
        match &self.window {
            Some(w) => w.radius / 4.0,
            None => self.diameter(),
        }
    }

    /// Upper estimate of the far-field kernel mass missing from a truncated
    /// window, for the kernel |z|^{-d-expo} at `x`: with Ahlfors constant
    /// C_reg = mass / radius^d the omitted part is at most
    /// C_reg·(d/expo)·ρ₀^{-expo}, ρ₀ the distance from `x` to the window edge.
    pub fn tail_bound(&self, x: &[f64], expo: f64) -> f64 {
        match &self.window {
            None => 0.0,
            Some(w) => {
                let rho0 = w.radius - dist(x, &w.center);
                if rho0 <= 0.0 {
                    return f64::INFINITY;
                }
                let c_reg = self.total_mass / w.radius.powf(self.d);
                c_reg * (self.d / expo) * rho0.powf(-expo)
            }
        }
    }

    /// Brute-force nearest support point.
    pub fn nearest_brute(&self, x: &[f64]) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (i, p) in self.points().enumerate() {
            let r = dist(p, x);
            if r < best.0 {
                best = (r, i);
            }
        }
        best
    }

    /// The same points with every weight multiplied by `s`.
    pub fn scale_weights(&self, s: f64) -> Result<Self, MeasureError> {
        if !(s > 0.0) {
            return Err(MeasureError::Invalid(format!("weight scale must be positive, got {s}")));
        }
        let mut m = self.clone();
        m.weights.iter_mut().for_each(|w| *w *= s);
        m.total_mass = m.weights.iter().sum();
        m.label = format!("{}*{s}", self.label);
        Ok(m)
    }

    /// Rigid motion x ↦ A·x + b (A given row-major, assumed orthogonal).
    pub fn transformed(&self, rotation: &[f64], shift: &[f64]) -> Self {
        let n = self.n;
        let map = |p: &[f64]| -> Vec<f64> {
            (0..n).map(|i| (0..n).map(|j| rotation[i * n + j] * p[j]).sum::<f64>() + shift[i]).collect()
        };
        let coords = self.points().flat_map(map).collect();
        let window = self.window.as_ref().map(|w| Window { center: map(&w.center), radius: w.radius });
        PointMeasure { coords, window, ..self.clone() }
    }

    /// Isometric embedding into a higher ambient dimension (extra coordinates zero).
    pub fn embedded(&self, n: usize) -> Result<Self, MeasureError> {
        if n < self.n {
            return Err(MeasureError::Invalid(format!("cannot embed ℝ^{} into ℝ^{n}", self.n)));
        }
        let pad = |p: &[f64]| {
            let mut v = p.to_vec();
            v.resize(n, 0.0);
            v
        };
        let coords = self.points().flat_map(pad).collect();
        let window = self.window.as_ref().map(|w| Window { center: pad(&w.center), radius: w.radius });
        let m = PointMeasure { n, coords, window, ..self.clone() };
        m.validate()?;
        Ok(m)
    }
}

/// Blow-up at `center` and scale `r`: points (p − Q)/r, weights w/r^d.
///
/// This is the exact affine pushforward; nothing is resampled, so
/// D on the output at y equals D on the input at r·y + Q divided by r.
pub fn rescale_blowup(m: &PointMeasure, center: &[f64], r: f64) -> Result<PointMeasure, MeasureError> {
    if !(r > 0.0) {
        return Err(MeasureError::NonPositiveRadius(r));
    }
    let (distance, _) = m.nearest_brute(center);
    if distance > m.spacing {
        return Err(MeasureError::CenterOffSupport { distance, spacing: m.spacing });
    }
    let map = |p: &[f64]| -> Vec<f64> { p.iter().zip(center).map(|(a, q)| (a - q) / r).collect() };
    let coords: Vec<f64> = m.points().flat_map(map).collect();
    let scale = r.powf(m.d);
    let weights: Vec<f64> = m.weights.iter().map(|w| w / scale).collect();
    let window = m.window.as_ref().map(|w| Window { center: map(&w.center), radius: w.radius / r });
    Ok(PointMeasure {
        n: m.n,
        d: m.d,
        total_mass: weights.iter().sum(),
        coords,
        weights,
        spacing: m.spacing / r,
        label: format!("blowup({};r={r})", m.label),
        window,
    })
}
