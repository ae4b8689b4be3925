//! Real spherical harmonics and their surface gradients.
//!
//! Y_{ℓ,m} is written as Q̄_{ℓ|m|}(z) · Re/Im((x + iy)^{|m|}), where Q̄ is the
//! fully normalised associated Legendre function with the sin^{|m|}θ factor
//! removed. Both factors are polynomials in the ambient coordinates, so the
//! ambient gradient has no pole singularity and the surface gradient is its
//! tangential projection.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::{invalid, Result};
use crate::manifold::{project_tangent, TangentVector};
use crate::spectrum::HodgeClass;

pub fn sphere_eigenvalue(l: usize) -> f64 {
    let l = l as f64;
    l * (l + 1.0)
}

/// Flat index of (ℓ, m) in level-major order: ℓ² + ℓ + m.
pub fn harmonic_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

/// Q̄_{ℓm}(z) and dQ̄_{ℓm}/dz for ℓ = m..=l_max, indexed by ℓ − m.
fn legendre_column(m: usize, l_max: usize, z: f64) -> (Vec<f64>, Vec<f64>) {
    let mut qmm = 1.0 / (4.0 * PI).sqrt();
    for k in 1..=m {
        let kf = k as f64;
        qmm *= ((2.0 * kf + 1.0) / (2.0 * kf)).sqrt();
    }
    let len = l_max + 1 - m;
    let mut q = Vec::with_capacity(len);
    let mut dq = Vec::with_capacity(len);
    q.push(qmm);
    dq.push(0.0);
    if len > 1 {
        let a = (2.0 * m as f64 + 3.0).sqrt();
        q.push(a * z * qmm);
        dq.push(a * qmm);
    }
    let mf = m as f64;
    for l in (m + 2)..=l_max {
        let lf = l as f64;
        let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
        let b = ((2.0 * lf + 1.0) * ((lf - 1.0).powi(2) - mf * mf) / ((2.0 * lf - 3.0) * (lf * lf - mf * mf))).sqrt();
        let i = l - m;
        q.push(a * z * q[i - 1] - b * q[i - 2]);
        dq.push(a * (q[i - 1] + z * dq[i - 1]) - b * dq[i - 2]);
    }
    (q, dq)
}

/// Re and Im of (x + iy)^k for k = 0..=m.
fn planar_powers(x: f64, y: f64, m: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(m + 1);
    out.push((1.0, 0.0));
    for k in 1..=m {
        let (c, s) = out[k - 1];
        out.push((c * x - s * y, s * x + c * y));
    }
    out
}

/// Value and ambient gradient of the polynomial extension of Y_{ℓ,m}, given
/// the Legendre factor and the planar powers up to |m|.
fn ambient_value_grad(m: i64, q: f64, dq: f64, pw: &[(f64, f64)]) -> (f64, Vector3<f64>) {
    let k = m.unsigned_abs() as usize;
    if k == 0 {
        return (q, Vector3::new(0.0, 0.0, dq));
    }
    let s2 = std::f64::consts::SQRT_2;
    let kf = k as f64;
    let (c, s) = pw[k];
    let (c1, s1) = pw[k - 1];
    if m > 0 {
        (s2 * q * c, Vector3::new(s2 * q * kf * c1, -s2 * q * kf * s1, s2 * dq * c))
    } else {
        (s2 * q * s, Vector3::new(s2 * q * kf * s1, s2 * q * kf * c1, s2 * dq * s))
    }
}

/// All real spherical harmonics up to `l_max` at one point, with surface gradients.
#[derive(Clone, Debug)]
pub struct HarmonicsAt {
    pub l_max: usize,
    pub point: Vector3<f64>,
    /// Y_{ℓ,m}(x), indexed by [`harmonic_index`].
    pub values: Vec<f64>,
    /// ∇Y_{ℓ,m}(x) in ambient coordinates (tangent at x).
    pub gradients: Vec<Vector3<f64>>,
}

impl HarmonicsAt {
    pub fn new(l_max: usize, x: &Vector3<f64>) -> Self {
        let n = (l_max + 1) * (l_max + 1);
        let mut values = vec![0.0; n];
        let mut gradients = vec![Vector3::zeros(); n];
        let pw = planar_powers(x.x, x.y, l_max);
        for k in 0..=l_max {
            let (q, dq) = legendre_column(k, l_max, x.z);
            for l in k..=l_max {
                let signs: &[i64] = if k == 0 { &[1] } else { &[1, -1] };
                for &sgn in signs {
                    let m = sgn * k as i64;
                    let (v, g) = ambient_value_grad(m, q[l - k], dq[l - k], &pw);
                    let idx = harmonic_index(l, m);
                    values[idx] = v;
                    gradients[idx] = project_tangent(x, &g);
                }
            }
        }
        HarmonicsAt {
            l_max,
            point: *x,
            values,
            gradients,
        }
    }

    pub fn value(&self, l: usize, m: i64) -> f64 {
        self.values[harmonic_index(l, m)]
    }

    pub fn gradient(&self, l: usize, m: i64) -> Vector3<f64> {
        self.gradients[harmonic_index(l, m)]
    }
}

fn check_lm(l: usize, m: i64) -> Result<()> {
    if m.unsigned_abs() as usize > l {
        return invalid(format!("|m| = {} exceeds ℓ = {l}", m.abs()));
    }
    Ok(())
}

fn single(l: usize, m: i64, x: &Vector3<f64>) -> (f64, Vector3<f64>) {
    let k = m.unsigned_abs() as usize;
    let (q, dq) = legendre_column(k, l, x.z);
    let pw = planar_powers(x.x, x.y, k);
    let (v, g) = ambient_value_grad(m, q[l - k], dq[l - k], &pw);
    (v, project_tangent(x, &g))
}

/// Real, L²(S²)-orthonormal spherical harmonic Y_{ℓ,m}(x).
pub fn spherical_harmonic(l: usize, m: i64, x: &Vector3<f64>) -> Result<f64> {
    check_lm(l, m)?;
    Ok(single(l, m, x).0)
}

/// Surface gradient ∇Y_{ℓ,m}(x) in ambient coordinates.
pub fn spherical_harmonic_gradient(l: usize, m: i64, x: &Vector3<f64>) -> Result<Vector3<f64>> {
    check_lm(l, m)?;
    Ok(single(l, m, x).1)
}

/// Unit-norm Hodge eigenfield: ∇Y/√λ (Div) or x × ∇Y/√λ (Curl).
pub fn sphere_eigenfield(class: HodgeClass, l: usize, m: i64, x: &Vector3<f64>) -> Result<TangentVector> {
    check_lm(l, m)?;
    if l == 0 {
        return invalid("ℓ = 0 has no eigenfield: the constant harmonic has zero gradient");
    }
    let g = single(l, m, x).1 / sphere_eigenvalue(l).sqrt();
    let v = match class {
        HodgeClass::Div => g,
        HodgeClass::Curl => x.cross(&g),
        other => return invalid(format!("the sphere has no {other:?} eigenfields")),
    };
    TangentVector::sphere(*x, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{frame_at, uniform_sphere_point};
    use crate::spectrum::legendre::legendre;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_harmonic() {
        let x = Vector3::new(0.3, -0.4, 0.5).normalize();
        assert_abs_diff_eq!(spherical_harmonic(0, 0, &x).unwrap(), 1.0 / (4.0 * PI).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn low_order_closed_forms() {
        let x = Vector3::new(0.2, -0.7, 0.5).normalize();
        let c1 = (3.0 / (4.0 * PI)).sqrt();
        assert_abs_diff_eq!(spherical_harmonic(1, 1, &x).unwrap(), c1 * x.x, epsilon = 1e-14);
        assert_abs_diff_eq!(spherical_harmonic(1, -1, &x).unwrap(), c1 * x.y, epsilon = 1e-14);
        assert_abs_diff_eq!(spherical_harmonic(1, 0, &x).unwrap(), c1 * x.z, epsilon = 1e-14);
        let c2 = 0.25 * (5.0 / PI).sqrt();
        assert_abs_diff_eq!(spherical_harmonic(2, 0, &x).unwrap(), c2 * (3.0 * x.z * x.z - 1.0), epsilon = 1e-14);
        let c22 = 0.25 * (15.0 / PI).sqrt();
        assert_abs_diff_eq!(spherical_harmonic(2, 2, &x).unwrap(), c22 * (x.x * x.x - x.y * x.y), epsilon = 1e-14);
    }

    #[test]
    fn addition_theorem_sum_of_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let x = uniform_sphere_point(&mut rng);
            let h = HarmonicsAt::new(4, &x);
            let s: f64 = (-4..=4).map(|m| h.value(4, m).powi(2)).sum();
            assert_abs_diff_eq!(s, 9.0 / (4.0 * PI), epsilon = 1e-13);
        }
    }

    #[test]
    fn addition_theorem_cross_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = uniform_sphere_point(&mut rng);
        let y = uniform_sphere_point(&mut rng);
        let hx = HarmonicsAt::new(15, &x);
        let hy = HarmonicsAt::new(15, &y);
        for l in 0..=15usize {
            let s: f64 = (-(l as i64)..=l as i64).map(|m| hx.value(l, m) * hy.value(l, m)).sum();
            let p = legendre(l, x.dot(&y)).unwrap()[0];
            assert_abs_diff_eq!(s, (2 * l + 1) as f64 / (4.0 * PI) * p, epsilon = 1e-12);
        }
    }

    #[test]
    fn batch_matches_single() {
        let x = Vector3::new(-0.1, 0.4, -0.9).normalize();
        let h = HarmonicsAt::new(9, &x);
        for l in 0..=9usize {
            for m in -(l as i64)..=l as i64 {
                assert_abs_diff_eq!(h.value(l, m), spherical_harmonic(l, m, &x).unwrap(), epsilon = 1e-15);
                assert_abs_diff_eq!(h.gradient(l, m), spherical_harmonic_gradient(l, m, &x).unwrap(), epsilon = 1e-15);
            }
        }
    }

    fn geodesic_step(x: &Vector3<f64>, dir: &Vector3<f64>, h: f64) -> Vector3<f64> {
        x * h.cos() + dir * h.sin()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut pts: Vec<Vector3<f64>> = (0..8).map(|_| uniform_sphere_point(&mut rng)).collect();
        pts.push(Vector3::z());
        pts.push(-Vector3::z());
        for x in &pts {
            let f = frame_at(x);
            for l in 1..=8usize {
                for m in -(l as i64)..=l as i64 {
                    let g = spherical_harmonic_gradient(l, m, x).unwrap();
                    for dir in [f.b1, f.b2] {
                        let plus = spherical_harmonic(l, m, &geodesic_step(x, &dir, h)).unwrap();
                        let minus = spherical_harmonic(l, m, &geodesic_step(x, &dir, -h)).unwrap();
                        let fd = (plus - minus) / (2.0 * h);
                        worst = worst.max((fd - g.dot(&dir)).abs());
                    }
                }
            }
        }
        assert!(worst < 1e-6, "max FD error {worst:e}");
    }

    #[test]
    fn eigen_relation_by_finite_differences() {
        // Surface Laplacian from second differences along two orthogonal geodesics.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let h = 1e-3;
        for (l, m) in [(1usize, 0i64), (2, 1), (3, -2), (5, 4), (7, -1)] {
            let x = uniform_sphere_point(&mut rng);
            let f = frame_at(&x);
            let y0 = spherical_harmonic(l, m, &x).unwrap();
            let mut lap = 0.0;
            for dir in [f.b1, f.b2] {
                let p = spherical_harmonic(l, m, &geodesic_step(&x, &dir, h)).unwrap();
                let q = spherical_harmonic(l, m, &geodesic_step(&x, &dir, -h)).unwrap();
                lap += (p - 2.0 * y0 + q) / (h * h);
            }
            let want = -sphere_eigenvalue(l) * y0;
            assert!((lap - want).abs() < 1e-3 * want.abs().max(1e-2), "l={l} m={m} {lap} vs {want}");
        }
    }

    #[test]
    fn eigenfield_contract() {
        let x = Vector3::new(0.6, 0.0, 0.8);
        let v = sphere_eigenfield(HodgeClass::Div, 3, 2, &x).unwrap();
        assert!(v.as_vec3().unwrap().dot(&x).abs() < 1e-12);
        let w = sphere_eigenfield(HodgeClass::Curl, 3, 2, &x).unwrap();
        assert_abs_diff_eq!(v.norm(), w.norm(), epsilon = 1e-15);
        assert!(sphere_eigenfield(HodgeClass::Div, 0, 0, &x).is_err());
        assert!(sphere_eigenfield(HodgeClass::Div, 2, 3, &x).is_err());
        assert!(spherical_harmonic(2, -3, &x).is_err());
        assert!(sphere_eigenfield(HodgeClass::Harm, 2, 0, &x).is_err());
    }

    #[test]
    fn eigenvalues() {
        assert_eq!(sphere_eigenvalue(0), 0.0);
        assert_eq!(sphere_eigenvalue(3), 12.0);
        assert_eq!(sphere_eigenvalue(7), 56.0);
    }
}
