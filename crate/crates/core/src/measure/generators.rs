//! Test-set generators: flat planes, Lipschitz graphs, circles/spheres and the
//! four-corner Cantor set.

use super::{MeasureError, PointMeasure, Window};
use std::f64::consts::PI;

/// Largest point count a generator will produce unless told otherwise.
pub const DEFAULT_POINT_BUDGET: usize = 1 << 22;

/// Node placement along each in-plane coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Grading {
    /// Equispaced nodes k·h, each cell weighted h.
    Uniform,
    /// Nodes u = c·sinh(v/c) on an equispaced v-grid of step h, weighted by
    /// the Jacobian cosh(v/c)·h. Spacing is ≈ h for |u| ≪ c and grows
    /// proportionally to |u| beyond, so very wide windows stay cheap while the
    /// quadrature of smooth far-field integrands remains spectrally accurate.
    Sinh { core: f64 },
}

/// Nodes and cell widths along one axis covering [-extent, extent].
fn axis_nodes(extent: f64, h: f64, grading: Grading) -> (Vec<f64>, Vec<f64>, f64) {
    match grading {
        Grading::Uniform => {
            let k = (extent / h).round() as i64;
            let nodes = (-k..=k).map(|i| i as f64 * h).collect::<Vec<_>>();
            let widths = vec![h; nodes.len()];
            (nodes, widths, k as f64 * h)
        }
        Grading::Sinh { core } => {
            let vmax = core * (extent / core).asinh();
            let k = (vmax / h).ceil() as i64;
            let mut nodes = Vec::with_capacity(2 * k as usize + 1);
            let mut widths = Vec::with_capacity(2 * k as usize + 1);
            for i in -k..=k {
                let v = i as f64 * h;
                nodes.push(core * (v / core).sinh());
                // exact length of the image of [v − h/2, v + h/2]
                widths.push(2.0 * core * (v / core).cosh() * (0.5 * h / core).sinh());
            }
            (nodes, widths, core * (k as f64 * h / core).sinh())
        }
    }
}

fn integer_dim(d: f64) -> Result<usize, MeasureError> {
    if d.fract() != 0.0 || d < 1.0 {
        return Err(MeasureError::NonIntegerDimension(d));
    }
    Ok(d as usize)
}

/// Tensor grid over the first `d` coordinates: (coordinates, cell volume).
fn tensor_grid(d: usize, nodes: &[f64], widths: &[f64]) -> Vec<(Vec<f64>, f64)> {
    let mut out = vec![(Vec::with_capacity(d), 1.0)];
    for _ in 0..d {
        let mut next = Vec::with_capacity(out.len() * nodes.len());
        for (u, w) in &out {
            for (x, wx) in nodes.iter().zip(widths) {
                let mut u2 = u.clone();
                u2.push(*x);
                next.push((u2, w * wx));
            }
        }
        out = next;
    }
    out
}

fn grid_count(d: usize, per_axis: usize, budget: usize) -> Result<(), MeasureError> {
    let requested = per_axis.checked_pow(d as u32).unwrap_or(usize::MAX);
    if requested > budget {
        return Err(MeasureError::PointBudget { requested, budget });
    }
    Ok(())
}

fn grading_label(g: Grading) -> String {
    match g {
        Grading::Uniform => "uniform".into(),
        Grading::Sinh { core } => format!("sinh({core})"),
    }
}

#[derive(Clone, Debug)]
pub struct FlatPlaneSpec {
    pub n: usize,
    pub d: f64,
    pub density: f64,
    pub extent: f64,
    pub spacing: f64,
    pub grading: Grading,
    pub budget: usize,
}

impl FlatPlaneSpec {
    pub fn new(n: usize, d: f64, density: f64, extent: f64, spacing: f64) -> Self {
        FlatPlaneSpec { n, d, density, extent, spacing, grading: Grading::Uniform, budget: DEFAULT_POINT_BUDGET }
    }

    pub fn graded(mut self, core: f64) -> Self {
        self.grading = Grading::Sinh { core };
        self
    }
}

/// Grid on the coordinate d-plane spanned by e_1..e_d, side 2·extent,
/// density λ (each uniform cell weighted λ·h^d).
pub fn gen_flat_plane(spec: &FlatPlaneSpec) -> Result<PointMeasure, MeasureError> {
    let d = integer_dim(spec.d)?;
    if d >= spec.n {
        return Err(MeasureError::Invalid(format!("need d < n, got d = {d}, n = {}", spec.n)));
    }
    if !(spec.spacing > 0.0 && spec.extent >= 10.0 * spec.spacing && spec.density > 0.0) {
        return Err(MeasureError::Degenerate(format!(
            "extent {} must be at least 10x spacing {} and density {} positive",
            spec.extent, spec.spacing, spec.density
        )));
    }
    if let Grading::Sinh { core } = spec.grading {
        if !(core >= 10.0 * spec.spacing) {
            return Err(MeasureError::Degenerate(format!("grading core {core} below 10x spacing")));
        }
    }
    let (nodes, widths, reach) = axis_nodes(spec.extent, spec.spacing, spec.grading);
    grid_count(d, nodes.len(), spec.budget)?;
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (u, vol) in tensor_grid(d, &nodes, &widths) {
        let mut p = vec![0.0; spec.n];
        p[..d].copy_from_slice(&u);
        coords.extend(p);
        weights.push(spec.density * vol);
    }
    let label = format!(
        "flat(n={},d={d},lambda={},extent={},h={},grading={})",
        spec.n,
        spec.density,
        spec.extent,
        spec.spacing,
        grading_label(spec.grading)
    );
    Ok(PointMeasure::new(spec.n, spec.d, coords, weights, spec.spacing, label)?
        .with_window(Window { center: vec![0.0; spec.n], radius: reach }))
}

/// Generation-k four-corner Cantor set on [0, scale]² (first two
/// coordinates of ℝⁿ): centres of the 4^k squares of side scale·4^{-k},
/// each weighted scale·4^{-k}, so d = 1 and the total mass is `scale`.
pub fn gen_four_corner_cantor(
    generation: u32,
    scale: f64,
    n: usize,
    budget: usize,
) -> Result<PointMeasure, MeasureError> {
    if generation < 1 || n < 2 || !(scale > 0.0) {
        return Err(MeasureError::Degenerate(format!(
            "need generation >= 1, n >= 2, scale > 0; got {generation}, {n}, {scale}"
        )));
    }
    let requested = 4usize.checked_pow(generation).unwrap_or(usize::MAX);
    if requested > budget {
        return Err(MeasureError::PointBudget { requested, budget });
    }
    let mut origins: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    let mut side = scale;
    for _ in 0..generation {
        let step = 0.75 * side;
        side *= 0.25;
        origins = origins
            .iter()
            .flat_map(|&(x, y)| [(x, y), (x + step, y), (x, y + step), (x + step, y + step)])
            .collect();
    }
    let mut coords = Vec::with_capacity(origins.len() * n);
    for (x, y) in &origins {
        let mut p = vec![0.0; n];
        p[0] = x + 0.5 * side;
        p[1] = y + 0.5 * side;
        coords.extend(p);
    }
    let weights = vec![side; origins.len()];
    PointMeasure::new(n, 1.0, coords, weights, side, format!("cantor(k={generation},scale={scale})"))
}

/// Catalog of graph profiles u ↦ φ(u), u ∈ ℝ^d.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Profile {
    /// a·sin(2π u₁ / w)
    SineRipple { amplitude: f64, wavelength: f64 },
    /// Triangle wave of amplitude a and period p in u₁ (slopes ±4a/p).
    Sawtooth { amplitude: f64, period: f64 },
    /// a·exp(−|u|²/w²)
    SmoothBump { amplitude: f64, width: f64 },
}

impl Profile {
    /// Look up a catalog entry by name; `a` is the amplitude and `w` the
    /// length parameter (wavelength, period or width).
    pub fn from_name(name: &str, a: f64, w: f64) -> Result<Self, MeasureError> {
        match name {
            "sine" | "sine_ripple" | "ripple" => Ok(Profile::SineRipple { amplitude: a, wavelength: w }),
            "sawtooth" => Ok(Profile::Sawtooth { amplitude: a, period: w }),
            "bump" | "smooth_bump" => Ok(Profile::SmoothBump { amplitude: a, width: w }),
            other => Err(MeasureError::UnknownProfile(other.to_string())),
        }
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        match *self {
            Profile::SineRipple { amplitude, wavelength } => amplitude * (2.0 * PI * u[0] / wavelength).sin(),
            Profile::Sawtooth { amplitude, period } => {
                let t = u[0] / period;
                amplitude * (1.0 - 4.0 * (t - t.round()).abs())
            }
            Profile::SmoothBump { amplitude, width } => {
                amplitude * (-u.iter().map(|x| x * x).sum::<f64>() / (width * width)).exp()
            }
        }
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; u.len()];
        match *self {
            Profile::SineRipple { amplitude, wavelength } => {
                let k = 2.0 * PI / wavelength;
                g[0] = amplitude * k * (k * u[0]).cos();
            }
            Profile::Sawtooth { amplitude, period } => {
                let t = u[0] / period;
                let s = t - t.round();
                g[0] = -4.0 * amplitude / period * s.signum() * if s == 0.0 { 0.0 } else { 1.0 };
            }
            Profile::SmoothBump { width, .. } => {
                let v = self.value(u);
                for (gi, ui) in g.iter_mut().zip(u) {
                    *gi = -2.0 * ui / (width * width) * v;
                }
            }
        }
        g
    }

    /// Lipschitz constant from the catalog formula.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Profile::SineRipple { amplitude, wavelength } => (amplitude * 2.0 * PI / wavelength).abs(),
            Profile::Sawtooth { amplitude, period } => (4.0 * amplitude / period).abs(),
            Profile::SmoothBump { amplitude, width } => (amplitude * 2f64.sqrt() * (-0.5f64).exp() / width).abs(),
        }
    }

    fn label(&self) -> String {
        match *self {
            Profile::SineRipple { amplitude, wavelength } => format!("sine(a={amplitude},w={wavelength})"),
            Profile::Sawtooth { amplitude, period } => format!("sawtooth(a={amplitude},p={period})"),
            Profile::SmoothBump { amplitude, width } => format!("bump(a={amplitude},w={width})"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GraphSpec {
    pub n: usize,
    pub d: f64,
    pub profile: Profile,
    pub extent: f64,
    pub spacing: f64,
    pub grading: Grading,
    pub budget: usize,
}

impl GraphSpec {
    pub fn new(n: usize, d: f64, profile: Profile, extent: f64, spacing: f64) -> Self {
        GraphSpec { n, d, profile, extent, spacing, grading: Grading::Uniform, budget: DEFAULT_POINT_BUDGET }
    }

    pub fn graded(mut self, core: f64) -> Self {
        self.grading = Grading::Sinh { core };
        self
    }
}

/// Points (u, φ(u)) with the graph value in coordinate d+1; weights are the
/// analytic surface element sqrt(1 + |∇φ|²) times the parameter cell volume.
pub fn gen_lipschitz_graph(spec: &GraphSpec) -> Result<PointMeasure, MeasureError> {
    let d = integer_dim(spec.d)?;
    if d >= spec.n {
        return Err(MeasureError::Invalid(format!("need d < n, got d = {d}, n = {}", spec.n)));
    }
    if !(spec.spacing > 0.0 && spec.extent >= 10.0 * spec.spacing) {
        return Err(MeasureError::Degenerate(format!(
            "extent {} must be at least 10x spacing {}",
            spec.extent, spec.spacing
        )));
    }
    let (nodes, widths, reach) = axis_nodes(spec.extent, spec.spacing, spec.grading);
    grid_count(d, nodes.len(), spec.budget)?;
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (u, vol) in tensor_grid(d, &nodes, &widths) {
        let mut p = vec![0.0; spec.n];
        p[..d].copy_from_slice(&u);
        p[d] = spec.profile.value(&u);
        let g2: f64 = spec.profile.gradient(&u).iter().map(|x| x * x).sum();
        coords.extend(p);
        weights.push((1.0 + g2).sqrt() * vol);
    }
    let label = format!(
        "graph(n={},d={d},{},L={},extent={},h={},grading={})",
        spec.n,
        spec.profile.label(),
        spec.profile.lipschitz(),
        spec.extent,
        spec.spacing,
        grading_label(spec.grading)
    );
    Ok(PointMeasure::new(spec.n, spec.d, coords, weights, spec.spacing, label)?
        .with_window(Window { center: vec![0.0; spec.n], radius: reach }))
}

/// Circle of radius ρ (d = 1, first coordinate 2-plane of ℝⁿ) or, for
/// n = 3 and d = 2, a Fibonacci sample of the sphere; weights sum to the
/// d-dimensional measure.
pub fn gen_sphere(n: usize, d: f64, radius: f64, spacing: f64) -> Result<PointMeasure, MeasureError> {
    if !(radius > 0.0 && spacing > 0.0 && spacing < radius) {
        return Err(MeasureError::Degenerate(format!("radius {radius}, spacing {spacing}")));
    }
    if d == 1.0 && n >= 2 {
        let count = (2.0 * PI * radius / spacing).ceil() as usize;
        let w = 2.0 * PI * radius / count as f64;
        let mut coords = Vec::with_capacity(count * n);
        for k in 0..count {
            let t = 2.0 * PI * k as f64 / count as f64;
            let mut p = vec![0.0; n];
            p[0] = radius * t.cos();
            p[1] = radius * t.sin();
            coords.extend(p);
        }
        return PointMeasure::new(n, 1.0, coords, vec![w; count], w, format!("circle(rho={radius},N={count})"));
    }
    if d == 2.0 && n == 3 {
        let area = 4.0 * PI * radius * radius;
        let count = (area / (spacing * spacing)).ceil() as usize;
        let golden = PI * (3.0 - 5f64.sqrt());
        let mut coords = Vec::with_capacity(count * 3);
        for k in 0..count {
            let z = 1.0 - (2.0 * k as f64 + 1.0) / count as f64;
            let s = (1.0 - z * z).sqrt();
            let t = golden * k as f64;
            coords.extend([radius * s * t.cos(), radius * s * t.sin(), radius * z]);
        }
        let h = (area / count as f64).sqrt();
        return PointMeasure::new(3, 2.0, coords, vec![area / count as f64; count], h, format!("sphere(rho={radius},N={count})"));
    }
    Err(MeasureError::Unsupported { n, d })
}
