//! Closed-form sphere kernels through Legendre series.
//!
//! With h(t) = Σ a_ℓ P_ℓ(t) the gradient kernel is
//! h″(t) (P_x x′)(P_x′ x)ᵀ + h′(t) P_x P_x′, and the rotated-gradient kernel
//! conjugates it by x × ·.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Matrix3x2, Vector2, Vector3};

use super::{phi, KernelKind, KernelSpec, MaternParams, Truncation};
use crate::error::{invalid, Result};
use crate::manifold::{cross_matrix, frame_at, projection_matrix, Manifold};
use crate::spectrum::legendre::table_unchecked;
use crate::spectrum::sphere_eigenvalue;

/// Σ_{ℓ=from}^{L} (2ℓ+1) Φ(λ_ℓ) / 4π.
fn level_sum(nu: f64, kappa: f64, l_max: usize, from: usize) -> f64 {
    (from..=l_max)
        .map(|l| (2 * l + 1) as f64 * phi(nu, kappa, sphere_eigenvalue(l), 2))
        .sum::<f64>()
        / (4.0 * PI)
}

/// Scalar series coefficients c_ℓ with k(t) = Σ c_ℓ P_ℓ(t).
fn scalar_coefs(nu: f64, kappa: f64, variance: f64, l_max: usize) -> Vec<f64> {
    let c = level_sum(nu, kappa, l_max, 0);
    (0..=l_max)
        .map(|l| variance / c * (2 * l + 1) as f64 / (4.0 * PI) * phi(nu, kappa, sphere_eigenvalue(l), 2))
        .collect()
}

/// Potential coefficients a_ℓ of one Hodge class normalised to `variance`,
/// with `share` splitting that variance across classes.
fn class_coefs(nu: f64, kappa: f64, variance: f64, share: f64, l_max: usize) -> Vec<f64> {
    let c = level_sum(nu, kappa, l_max, 1);
    let mut out = vec![0.0; l_max + 1];
    for (l, a) in out.iter_mut().enumerate().skip(1) {
        let lambda = sphere_eigenvalue(l);
        *a = share * variance / c * (2 * l + 1) as f64 / (4.0 * PI * lambda) * phi(nu, kappa, lambda, 2);
    }
    out
}

/// Evaluation point pair with everything a sphere kernel needs precomputed.
///
/// Frames must be oriented (b₂ = x × b₁) for the rotated-gradient block.
#[derive(Clone, Debug)]
pub struct SpherePair {
    pub legendre: Vec<[f64; 3]>,
    /// Bᵢᵀ P_xᵢ xⱼ.
    pub u: Vector2<f64>,
    /// Bⱼᵀ P_xⱼ xᵢ.
    pub w: Vector2<f64>,
    /// Bᵢᵀ Bⱼ.
    pub gram: Matrix2<f64>,
    pub bi: Matrix3x2<f64>,
    pub bj: Matrix3x2<f64>,
}

impl SpherePair {
    pub fn new(l_max: usize, xi: &Vector3<f64>, bi: Matrix3x2<f64>, xj: &Vector3<f64>, bj: Matrix3x2<f64>) -> Self {
        let t = xi.dot(xj).clamp(-1.0, 1.0);
        SpherePair {
            legendre: table_unchecked(l_max, t),
            u: bi.transpose() * (xj - xi * t),
            w: bj.transpose() * (xi - xj * t),
            gram: bi.transpose() * bj,
            bi,
            bj,
        }
    }

    pub fn with_default_frames(l_max: usize, xi: &Vector3<f64>, xj: &Vector3<f64>) -> Self {
        Self::new(l_max, xi, frame_at(xi).matrix(), xj, frame_at(xj).matrix())
    }
}

const J: Matrix2<f64> = Matrix2::new(0.0, -1.0, 1.0, 0.0);

#[derive(Clone, Debug)]
pub(crate) struct SphereSeries {
    kind: KernelKind,
    l_max: usize,
    scalar: Vec<f64>,
    div: Vec<f64>,
    curl: Vec<f64>,
    aat: Matrix3<f64>,
}

impl SphereSeries {
    pub(crate) fn new(spec: &KernelSpec) -> Result<Self> {
        let l_max = match spec.truncation {
            Truncation::Level(l) => l,
            t @ Truncation::EigenvalueCap(_) => t.sphere_level(),
        };
        let MaternParams { nu, kappa, variance, .. } = spec.params;
        let zeros = vec![0.0; l_max + 1];
        let mut s = SphereSeries {
            kind: spec.kind,
            l_max,
            scalar: zeros.clone(),
            div: zeros.clone(),
            curl: zeros,
            aat: Matrix3::identity(),
        };
        if l_max == 0 && spec.kind.is_vector() && !matches!(spec.kind, KernelKind::Projected | KernelKind::PureNoise) {
            return invalid("vector sphere kernels need ℓ_max ≥ 1");
        }
        match spec.kind {
            KernelKind::Scalar => s.scalar = scalar_coefs(nu, kappa, variance, l_max),
            KernelKind::Projected => {
                s.scalar = scalar_coefs(nu, kappa, 0.5 * variance, l_max);
                if let Some(a) = spec.coregionalization {
                    s.aat = a * a.transpose();
                }
            }
            KernelKind::HodgeDiv => s.div = class_coefs(nu, kappa, variance, 1.0, l_max),
            KernelKind::HodgeCurl => s.curl = class_coefs(nu, kappa, variance, 1.0, l_max),
            KernelKind::HodgeFull => {
                s.div = class_coefs(nu, kappa, variance, 0.5, l_max);
                s.curl = s.div.clone();
            }
            KernelKind::HodgeCompositional => {
                let p = spec.parts.ok_or_else(|| crate::Error::InvalidInput("missing compositional parts".into()))?;
                s.div = class_coefs(nu, p.div.kappa, p.div.variance, 1.0, l_max);
                s.curl = class_coefs(nu, p.curl.kappa, p.curl.variance, 1.0, l_max);
            }
            KernelKind::PureNoise => {}
        }
        Ok(s)
    }

    pub(crate) fn l_max(&self) -> usize {
        self.l_max
    }

    fn dot(coefs: &[f64], table: &[[f64; 3]], k: usize) -> f64 {
        coefs.iter().zip(table).map(|(c, p)| c * p[k]).sum()
    }

    pub(crate) fn scalar(&self, x: &Vector3<f64>, y: &Vector3<f64>) -> f64 {
        let table = table_unchecked(self.l_max, x.dot(y).clamp(-1.0, 1.0));
        Self::dot(&self.scalar, &table, 0)
    }

    pub(crate) fn vector(&self, x: &Vector3<f64>, y: &Vector3<f64>) -> Matrix3<f64> {
        let t = x.dot(y).clamp(-1.0, 1.0);
        let table = table_unchecked(self.l_max, t);
        let (px, py) = (projection_matrix(x), projection_matrix(y));
        match self.kind {
            KernelKind::Scalar | KernelKind::PureNoise => Matrix3::zeros(),
            KernelKind::Projected => px * self.aat * py * Self::dot(&self.scalar, &table, 0),
            _ => {
                let u = y - x * t;
                let w = x - y * t;
                let rank1 = u * w.transpose();
                let pp = px * py;
                let gradient = |c: &[f64]| rank1 * Self::dot(c, &table, 2) + pp * Self::dot(c, &table, 1);
                let mut m = gradient(&self.div);
                if self.curl.iter().any(|&c| c != 0.0) {
                    m += cross_matrix(x) * gradient(&self.curl) * cross_matrix(y).transpose();
                }
                m
            }
        }
    }

    pub(crate) fn block(&self, p: &SpherePair) -> Matrix2<f64> {
        match self.kind {
            KernelKind::Scalar | KernelKind::PureNoise => Matrix2::zeros(),
            KernelKind::Projected => {
                p.bi.transpose() * self.aat * p.bj * Self::dot(&self.scalar, &p.legendre, 0)
            }
            _ => {
                let rank1 = p.u * p.w.transpose();
                let gradient =
                    |c: &[f64]| rank1 * Self::dot(c, &p.legendre, 2) + p.gram * Self::dot(c, &p.legendre, 1);
                let mut m = gradient(&self.div);
                if self.curl.iter().any(|&c| c != 0.0) {
                    m += J.transpose() * gradient(&self.curl) * J;
                }
                m
            }
        }
    }
}

fn sphere_spec(kind: KernelKind, params: &MaternParams, l_max: usize) -> KernelSpec {
    KernelSpec::new(kind, *params, Manifold::Sphere).with_truncation(Truncation::Level(l_max))
}

/// Scalar Matérn kernel on S² truncated at `l_max`.
pub fn scalar_matern_sphere(params: &MaternParams, l_max: usize, x: &Vector3<f64>, y: &Vector3<f64>) -> Result<f64> {
    let spec = sphere_spec(KernelKind::Scalar, params, l_max);
    spec.validate()?;
    Ok(SphereSeries::new(&spec)?.scalar(x, y))
}

/// Hodge–Matérn kernel (full, div or curl) on S² in ambient coordinates.
pub fn hodge_matern_sphere(
    kind: KernelKind,
    params: &MaternParams,
    l_max: usize,
    x: &Vector3<f64>,
    y: &Vector3<f64>,
) -> Result<Matrix3<f64>> {
    if !matches!(kind, KernelKind::HodgeFull | KernelKind::HodgeDiv | KernelKind::HodgeCurl) {
        return invalid(format!("{kind} is not a single-class Hodge kernel"));
    }
    let spec = sphere_spec(kind, params, l_max);
    spec.validate()?;
    Ok(SphereSeries::new(&spec)?.vector(x, y))
}

/// ½ k_scalar(x, x′) P_x A Aᵀ P_x′.
pub fn projected_matern(
    params: &MaternParams,
    a: &Matrix3<f64>,
    l_max: usize,
    x: &Vector3<f64>,
    y: &Vector3<f64>,
) -> Result<Matrix3<f64>> {
    let spec = sphere_spec(KernelKind::Projected, params, l_max).with_coregionalization(*a);
    spec.validate()?;
    Ok(SphereSeries::new(&spec)?.vector(x, y))
}
