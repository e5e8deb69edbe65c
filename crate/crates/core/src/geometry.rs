//! Small dense-vector helpers and affine d-planes.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Largest ambient dimension supported by the fixed-size kernel accumulators.
pub const MAX_DIM: usize = 6;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| a * xi + yi).collect()
}

/// Lebesgue volume of the unit ball in ℝ^d (d may be fractional).
pub fn unit_ball_volume(d: f64) -> f64 {
    std::f64::consts::PI.powf(d / 2.0) / statrs::function::gamma::gamma(d / 2.0 + 1.0)
}

/// An affine plane of integer dimension: a base point and an orthonormal basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub base: Vec<f64>,
    /// `dim` rows of length n.
    pub basis: Vec<Vec<f64>>,
}

impl Plane {
    pub fn ambient_dim(&self) -> usize {
        self.base.len()
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Coordinate plane through `base` spanned by e_1..e_d.
    pub fn coordinate(base: Vec<f64>, d: usize) -> Self {
        let n = base.len();
        let basis = (0..d)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                e
            })
            .collect();
        Plane { base, basis }
    }

    /// Orthogonal projection of `x` onto the plane.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let rel = sub(x, &self.base);
        let mut out = self.base.clone();
        for b in &self.basis {
            let c = dot(&rel, b);
            for (o, bi) in out.iter_mut().zip(b) {
                *o += c * bi;
            }
        }
        out
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        let mut rel = sub(x, &self.base);
        for b in &self.basis {
            let c = dot(&rel, b);
            for (r, bi) in rel.iter_mut().zip(b) {
                *r -= c * bi;
            }
        }
        norm(&rel)
    }

    /// Worst deviation of the basis Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.basis.iter().enumerate() {
            for (j, b) in self.basis.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(a, b) - target).abs());
            }
        }
        worst
    }

    /// Unit normals completing the basis to an orthonormal frame of ℝⁿ.
    pub fn normals(&self) -> Vec<Vec<f64>> {
        let n = self.ambient_dim();
        let mut frame: Vec<Vec<f64>> = self.basis.clone();
        let mut normals = Vec::new();
        for k in 0..n {
            let mut v = vec![0.0; n];
            v[k] = 1.0;
            for f in &frame {
                let c = dot(&v, f);
                for (vi, fi) in v.iter_mut().zip(f) {
                    *vi -= c * fi;
                }
            }
            let len = norm(&v);
            if len > 1e-8 {
                v.iter_mut().for_each(|x| *x /= len);
                frame.push(v.clone());
                normals.push(v);
            }
            if normals.len() + self.dim() == n {
                break;
            }
        }
        normals
    }

    /// Tilt and shift the plane: each basis vector is pushed along the normals
    /// by `tilt[i*(n-d)+j]`, the base by `shift[j]`, then re-orthonormalized.
    pub fn perturbed(&self, normals: &[Vec<f64>], tilt: &[f64], shift: &[f64]) -> Plane {
        let m = normals.len();
        let mut basis: Vec<Vec<f64>> = self
            .basis
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let mut v = b.clone();
                for (j, nrm) in normals.iter().enumerate() {
                    let t = tilt[i * m + j];
                    for (vk, nk) in v.iter_mut().zip(nrm) {
                        *vk += t * nk;
                    }
                }
                v
            })
            .collect();
        gram_schmidt(&mut basis);
        let mut base = self.base.clone();
        for (j, nrm) in normals.iter().enumerate() {
            for (bk, nk) in base.iter_mut().zip(nrm) {
                *bk += shift[j] * nk;
            }
        }
        Plane { base, basis }
    }
}

pub fn gram_schmidt(vs: &mut [Vec<f64>]) {
    for i in 0..vs.len() {
        for j in 0..i {
            let c = dot(&vs[i], &vs[j]);
            let vj = vs[j].clone();
            for (a, b) in vs[i].iter_mut().zip(&vj) {
                *a -= c * b;
            }
        }
        let len = norm(&vs[i]);
        vs[i].iter_mut().for_each(|x| *x /= len);
    }
}

/// Weighted principal-component fit of a d-plane.
///
/// When `through` is given the plane is forced through that point and the
/// second moments are taken about it; otherwise the weighted mean is used.
/// Returns the plane and the eigenvalues of the scatter matrix, descending.
pub fn pca_plane(
    points: &[&[f64]],
    weights: &[f64],
    d: usize,
    through: Option<&[f64]>,
) -> Option<(Plane, Vec<f64>)> {
    let n = points.first()?.len();
    let total: f64 = weights.iter().sum();
    if points.len() < d + 1 || total <= 0.0 || d > n {
        return None;
    }
    let center: Vec<f64> = match through {
        Some(c) => c.to_vec(),
        None => {
            let mut c = vec![0.0; n];
            for (p, w) in points.iter().zip(weights) {
                for k in 0..n {
                    c[k] += w * p[k];
                }
            }
            c.iter_mut().for_each(|x| *x /= total);
            c
        }
    };
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for (p, w) in points.iter().zip(weights) {
        for a in 0..n {
            let da = p[a] - center[a];
            for b in a..n {
                let v = w * da * (p[b] - center[b]);
                cov[(a, b)] += v;
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            cov[(a, b)] = cov[(b, a)];
        }
    }
    cov /= total;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let basis: Vec<Vec<f64>> = order[..d]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    let mut basis = basis;
    gram_schmidt(&mut basis);
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    Some((Plane { base: center, basis }, values))
}
