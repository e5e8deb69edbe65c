//! Whitney decomposition of Ω ∩ B(X, Rad) and the Carleson sums built on it.

use super::DiagError;
use crate::field::FieldEngine;
use crate::geometry::dist;
use crate::measure::{PointMeasure, SpatialIndex};
use rayon::prelude::*;
use serde::Serialize;

/// Boundary ball B(X, Rad) over which a Carleson sum is taken.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CarlesonWindow {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl CarlesonWindow {
    /// Check that the centre is on the support and the radius lies in
    /// [32κh, max probe radius].
    pub fn validate(&self, m: &PointMeasure, index: &SpatialIndex, kappa: f64) -> Result<(), DiagError> {
        let lo = 32.0 * kappa * m.spacing();
        let hi = m.max_probe_radius();
        let off = index.delta(&self.center);
        if off > m.spacing() {
            return Err(DiagError::InvalidWindow(format!(
                "centre is {off} from the support (spacing {})",
                m.spacing()
            )));
        }
        if !(self.radius >= lo && self.radius <= hi) {
            return Err(DiagError::InvalidWindow(format!("radius {} outside [{lo}, {hi}]", self.radius)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WhitneyCell {
    pub center: Vec<f64>,
    pub side: f64,
    pub delta: f64,
    pub depth: u32,
    /// δ(center) ≥ κh and the cube passed the admission test.
    pub resolved: bool,
    /// Subdivision stopped by the depth cap rather than by admission.
    pub truncated: bool,
}

impl WhitneyCell {
    pub fn diameter(&self) -> f64 {
        self.side * (self.center.len() as f64).sqrt()
    }
}

/// Dyadic subdivision of the cube of side 2·Rad centred at X.
///
/// A cube is emitted once δ(centre) ≥ diam; since its parent failed that test,
/// δ(centre) ≤ 2.5·diam ≤ 4·diam follows. Cubes that still fail when their
/// diameter drops below κh are emitted unresolved (the floor), as are cubes
/// still failing at `max_depth` (flagged truncated). Cubes missing the ball
/// are discarded, and only cells whose centre lies in the ball are returned.
pub fn whitney_decompose(
    index: &SpatialIndex,
    window: &CarlesonWindow,
    floor: f64,
    max_depth: u32,
) -> Vec<WhitneyCell> {
    let n = window.center.len();
    let sqrt_n = (n as f64).sqrt();
    let mut out = Vec::new();
    let mut level = vec![window.center.clone()];
    let mut side = 2.0 * window.radius;
    for depth in 0..=max_depth {
        let diam = side * sqrt_n;
        let results: Vec<(Vec<f64>, f64, u8)> = level
            .par_iter()
            .filter_map(|c| {
                // discard cubes that miss the ball entirely
                let box_gap: f64 = c
                    .iter()
                    .zip(&window.center)
                    .map(|(ci, xi)| ((ci - xi).abs() - 0.5 * side).max(0.0).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if box_gap > window.radius {
                    return None;
                }
                let delta = index.delta(c);
                let kind = if delta >= diam {
                    0 // admitted
                } else if diam < floor {
                    1 // resolution floor
                } else if depth == max_depth {
                    2 // depth cap
                } else {
                    3 // subdivide
                };
                Some((c.clone(), delta, kind))
            })
            .collect();
        let mut next = Vec::new();
        for (c, delta, kind) in results {
            if kind == 3 {
                for corner in 0..(1u32 << n) {
                    let child: Vec<f64> = (0..n)
                        .map(|k| c[k] + if corner >> k & 1 == 1 { 0.25 * side } else { -0.25 * side })
                        .collect();
                    next.push(child);
                }
                continue;
            }
            if dist(&c, &window.center) > window.radius {
                continue;
            }
            out.push(WhitneyCell {
                resolved: kind == 0 && delta >= floor,
                truncated: kind == 2,
                center: c,
                side,
                delta,
                depth,
            });
        }
        if next.is_empty() {
            break;
        }
        level = next;
        side *= 0.5;
    }
    out
}

/// One normalized Carleson window sum.
#[derive(Clone, Debug, Serialize)]
pub struct CarlesonEntry {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Σ over resolved cells of integrand·δ^{d−n}·side^n, divided by Rad^d.
    pub value: f64,
    pub cells: usize,
    pub unresolved_cells: usize,
    pub unresolved_fraction: f64,
    /// Resolved cells at critical points of D (F̃ undefined).
    pub critical_cells: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CarlesonReport {
    pub entries: Vec<CarlesonEntry>,
    /// Max over the window grid: a lower bound for the true Carleson norm.
    pub sup: f64,
    pub total_cells: usize,
    pub unresolved_fraction: f64,
}

impl CarlesonReport {
    pub fn from_entries(entries: Vec<CarlesonEntry>) -> Self {
        let sup = entries.iter().map(|e| e.value).fold(0.0, f64::max);
        let total_cells = entries.iter().map(|e| e.cells).sum();
        let unresolved: usize = entries.iter().map(|e| e.unresolved_cells).sum();
        CarlesonReport {
            sup,
            total_cells,
            unresolved_fraction: if total_cells == 0 { 0.0 } else { unresolved as f64 / total_cells as f64 },
            entries,
        }
    }
}

/// Default subdivision cap: enough levels to reach the κh floor from the window.
pub fn default_max_depth(window: &CarlesonWindow, floor: f64, n: usize) -> u32 {
    let levels = (2.0 * window.radius * (n as f64).sqrt() / floor).log2().ceil();
    (levels.max(1.0) as u32) + 2
}

fn window_sum<G>(engine: &FieldEngine, window: &CarlesonWindow, max_depth: u32, integrand: G) -> Result<CarlesonEntry, DiagError>
where
    G: Fn(f64) -> f64 + Sync,
{
    let m = engine.measure();
    window.validate(m, engine.index(), engine.kappa())?;
    let cells = whitney_decompose(engine.index(), window, engine.resolution_floor(), max_depth);
    let n = m.ambient_dim() as f64;
    let d = m.hausdorff_dim();
    let terms: Vec<Result<(f64, bool), DiagError>> = cells
        .par_iter()
        .filter(|c| c.resolved)
        .map(|c| {
            let f = engine.eval(&c.center)?;
            Ok((integrand(f.f) * c.delta.powf(d - n) * c.side.powf(n), f.ftilde.is_none()))
        })
        .collect();
    let mut total = 0.0;
    let mut critical = 0;
    for t in terms {
        let (v, crit) = t?;
        total += v;
        critical += crit as usize;
    }
    let unresolved = cells.iter().filter(|c| !c.resolved).count();
    Ok(CarlesonEntry {
        center: window.center.clone(),
        radius: window.radius,
        value: total / window.radius.powf(d),
        cells: cells.len(),
        unresolved_cells: unresolved,
        unresolved_fraction: if cells.is_empty() { 0.0 } else { unresolved as f64 / cells.len() as f64 },
        critical_cells: critical,
    })
}

/// Normalized Whitney quadrature of F²δ^{d−n} over B(X, Rad) ∩ Ω.
pub fn carleson_sum_f(engine: &FieldEngine, window: &CarlesonWindow, max_depth: u32) -> Result<CarlesonEntry, DiagError> {
    window_sum(engine, window, max_depth, |f| f * f)
}

/// Normalized Whitney quadrature of 1{F > ε}·δ^{d−n} over B(X, Rad) ∩ Ω.
pub fn carleson_mass_z(
    engine: &FieldEngine,
    eps: f64,
    window: &CarlesonWindow,
    max_depth: u32,
) -> Result<CarlesonEntry, DiagError> {
    window_sum(engine, window, max_depth, move |f| if f > eps { 1.0 } else { 0.0 })
}

/// Sweep of ε for the Z-mass on one window, sharing a single field pass.
pub fn carleson_mass_z_sweep(
    engine: &FieldEngine,
    eps: &[f64],
    window: &CarlesonWindow,
    max_depth: u32,
) -> Result<Vec<f64>, DiagError> {
    let m = engine.measure();
    window.validate(m, engine.index(), engine.kappa())?;
    let cells = whitney_decompose(engine.index(), window, engine.resolution_floor(), max_depth);
    let n = m.ambient_dim() as f64;
    let d = m.hausdorff_dim();
    let values: Vec<Result<(f64, f64), DiagError>> = cells
        .par_iter()
        .filter(|c| c.resolved)
        .map(|c| Ok((engine.eval(&c.center)?.f, c.delta.powf(d - n) * c.side.powf(n))))
        .collect();
    let values = values.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(eps
        .iter()
        .map(|e| values.iter().filter(|(f, _)| f > e).fold(0.0, |acc, (_, w)| acc + w) / window.radius.powf(d))
        .collect())
}

/// Σ side^n·δ^{d−n} over resolved cells, normalized by Rad^d: the Carleson
/// norm of the constant integrand 1.
pub fn carleson_unit_sum(index: &SpatialIndex, m: &PointMeasure, window: &CarlesonWindow, floor: f64, max_depth: u32) -> f64 {
    let n = m.ambient_dim() as f64;
    let d = m.hausdorff_dim();
    whitney_decompose(index, window, floor, max_depth)
        .iter()
        .filter(|c| c.resolved)
        .map(|c| c.delta.powf(d - n) * c.side.powf(n))
        .sum::<f64>()
        / window.radius.powf(d)
}
