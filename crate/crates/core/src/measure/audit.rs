//! Empirical Ahlfors-regularity audit: μ(B(Q,r))/r^d over centres and radii.

use super::{MeasureError, PointMeasure, SpatialIndex};
use crate::geometry::dist;
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct RegularityAudit {
    pub centers: Vec<Vec<f64>>,
    /// Admitted radii (those inside [κh, diam/4], clipped to the window).
    pub radii: Vec<f64>,
    /// ratios[i][j] = μ(B̄(centers[i], radii[j])) / radii[j]^d
    pub ratios: Vec<Vec<f64>>,
    pub c_low: f64,
    pub c_high: f64,
}

/// Up to `count` support points spread evenly through the point list. For
/// truncated windows only points within half the window radius qualify, so
/// audit balls stay inside the window.
pub fn interior_centers(m: &PointMeasure, count: usize) -> Vec<Vec<f64>> {
    let eligible: Vec<usize> = (0..m.len())
        .filter(|&i| match m.window() {
            Some(w) => dist(m.point(i), &w.center) <= 0.5 * w.radius,
            None => true,
        })
        .collect();
    if eligible.is_empty() || count == 0 {
        return Vec::new();
    }
    let count = count.min(eligible.len());
    (0..count)
        .map(|k| {
            // midpoints of `count` equal strata
            let pos = ((2 * k + 1) * eligible.len()) / (2 * count);
            m.point(eligible[pos]).to_vec()
        })
        .collect()
}

/// Radius interval an audit may probe: [κh, diam/4], further capped by a
/// quarter of the truncation window.
pub fn admissible_radii(m: &PointMeasure, kappa: f64) -> (f64, f64) {
    let hi = (m.diameter() / 4.0).min(m.max_probe_radius());
    (kappa * m.spacing(), hi)
}

pub fn audit_regularity(
    m: &PointMeasure,
    index: &SpatialIndex,
    centers: &[Vec<f64>],
    radii: &[f64],
    kappa: f64,
) -> Result<RegularityAudit, MeasureError> {
    let (lo, hi) = admissible_radii(m, kappa);
    let radii: Vec<f64> = radii.iter().copied().filter(|r| *r >= lo && *r <= hi).collect();
    if radii.is_empty() || centers.is_empty() {
        return Err(MeasureError::EmptyRadiusWindow { lo, hi });
    }
    let d = m.hausdorff_dim();
    let ratios: Vec<Vec<f64>> = centers
        .iter()
        .map(|q| radii.iter().map(|&r| index.ball_mass(q, r) / r.powf(d)).collect())
        .collect();
    let all = ratios.iter().flatten();
    let c_low = all.clone().copied().fold(f64::INFINITY, f64::min);
    let c_high = all.copied().fold(0.0, f64::max);
    Ok(RegularityAudit { centers: centers.to_vec(), radii, ratios, c_low, c_high })
}

/// Dyadic radii hi·2^{-j} down to `lo`.
pub fn dyadic_radii(lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = hi;
    while r >= lo && out.len() < 64 {
        out.push(r);
        r *= 0.5;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{gen_flat_plane, gen_four_corner_cantor, FlatPlaneSpec, DEFAULT_KAPPA, DEFAULT_POINT_BUDGET};

    fn count_oracle(m: &PointMeasure, q: &[f64], r: f64) -> f64 {
        m.points().zip(m.weights()).filter(|(p, _)| dist(p, q) <= r).map(|(_, w)| w).sum::<f64>()
    }

    #[test]
    fn flat_line_ratio_is_two() {
        let m = gen_flat_plane(&FlatPlaneSpec::new(2, 1.0, 1.0, 100.0, 0.05)).unwrap();
        let idx = SpatialIndex::build(&m);
        let centers = interior_centers(&m, 9);
        let radii: Vec<f64> = (0..8).map(|j| 1.0 * 1.5f64.powi(j)).collect();
        let a = audit_regularity(&m, &idx, &centers, &radii, DEFAULT_KAPPA).unwrap();
        for (q, row) in a.centers.iter().zip(&a.ratios) {
            for (r, ratio) in a.radii.iter().zip(row) {
                assert!((ratio - count_oracle(&m, q, *r) / r).abs() < 1e-12);
            }
        }
        // unit ball volume in one dimension is 2
        assert!(a.c_low >= 2.0 * 0.95 && a.c_high <= 2.0 * 1.05, "{} {}", a.c_low, a.c_high);
    }

    #[test]
    fn flat_plane_ratio_is_pi() {
        let m = gen_flat_plane(&FlatPlaneSpec::new(3, 2.0, 1.0, 4.0, 0.02)).unwrap();
        let idx = SpatialIndex::build(&m);
        let centers = interior_centers(&m, 5);
        let a = audit_regularity(&m, &idx, &centers, &[0.4, 0.6, 0.9], DEFAULT_KAPPA).unwrap();
        assert!((a.c_low / std::f64::consts::PI - 1.0).abs() < 0.05);
        assert!((a.c_high / std::f64::consts::PI - 1.0).abs() < 0.05);
    }

    #[test]
    fn cantor_audit_is_bounded() {
        let k = 7;
        let m = gen_four_corner_cantor(k, 1.0, 2, DEFAULT_POINT_BUDGET).unwrap();
        let idx = SpatialIndex::build(&m);
        let centers = interior_centers(&m, 16);
        let (lo, hi) = admissible_radii(&m, DEFAULT_KAPPA);
        let a = audit_regularity(&m, &idx, &centers, &dyadic_radii(lo, hi), DEFAULT_KAPPA).unwrap();
        assert!(a.c_low > 0.1 && a.c_high < 10.0, "{} {}", a.c_low, a.c_high);
        // at r = 4^{-j} the ball only sees its own generation-j square,
        // whose mass is 4^{-j}: the ratio never exceeds one
        for j in 1..5 {
            let r = 4f64.powi(-j);
            for q in &centers {
                let ratio = idx.ball_mass(q, r) / r;
                assert!((ratio - count_oracle(&m, q, r) / r).abs() < 1e-12);
                assert!(ratio <= 1.0 + 1e-12 && ratio > 0.25);
            }
        }
    }

    #[test]
    fn two_isolated_points_report() {
        let m = PointMeasure::new(2, 1.0, vec![0.0, 0.0, 100.0, 0.0], vec![1.0, 1.0], 0.1, "pair").unwrap();
        let idx = SpatialIndex::build(&m);
        let a = audit_regularity(&m, &idx, &[vec![0.0, 0.0]], &dyadic_radii(0.5, 25.0), DEFAULT_KAPPA).unwrap();
        assert!(a.c_high / a.c_low > 10.0);
        assert!(matches!(
            audit_regularity(&m, &idx, &[vec![0.0, 0.0]], &[1e-3], DEFAULT_KAPPA),
            Err(MeasureError::EmptyRadiusWindow { .. })
        ));
    }
}
