//! Divergence statistics of sphere vector GPs and the projected-kernel
//! antipodal-correlation defect.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::gp::sample::{sample_prior, spectrum_for};
use crate::kernels::{hodge_matern_sphere, phi, projected_matern, KernelKind, KernelSpec, MaternParams, Truncation};
use crate::manifold::Manifold;
use crate::par;
use crate::spectrum::sphere_eigenvalue;

/// Finite-difference divergences are refused above this latitude.
pub const MAX_ABS_LATITUDE_DEG: f64 = 80.0;
pub const MIN_STEP: f64 = 1e-6;
pub const MAX_STEP: f64 = 1e-2;

/// (Σ_{ℓ≥1} (2ℓ+1) λ_ℓ Φ(λ_ℓ), 4π C⁰) for one (ν, κ).
fn spectral_sums(nu: f64, kappa: f64, l_max: usize) -> (f64, f64) {
    let mut s = 0.0;
    let mut c0 = 0.0;
    for l in 0..=l_max {
        let lambda = sphere_eigenvalue(l);
        let w = (2 * l + 1) as f64 * phi(nu, kappa, lambda, 2);
        s += lambda * w;
        c0 += w;
    }
    (s, c0)
}

/// Var(div f(x)) for one gradient class normalised to `variance`.
fn div_class_variance(nu: f64, kappa: f64, variance: f64, l_max: usize) -> f64 {
    let (s, c0) = spectral_sums(nu, kappa, l_max);
    variance * s / (c0 - phi(nu, kappa, 0.0, 2))
}

/// Pointwise divergence variance of a Hodge-class kernel on S².
///
/// A div-class field Σ √w ξ ∇Y/√λ has divergence −Σ √w ξ √λ Y, so the variance is
/// σ² Σ(2ℓ+1)λΦ / (4πC⁰ − Φ(0)); the full kernel carries half of that and the
/// curl class none.
pub fn var_div_hodge_sphere(spec: &KernelSpec) -> Result<f64> {
    if spec.manifold != Manifold::Sphere {
        return invalid("divergence variance formulas are for the sphere");
    }
    spec.validate()?;
    let l = spec.truncation.sphere_level();
    let p = &spec.params;
    Ok(match spec.kind {
        KernelKind::HodgeDiv => div_class_variance(p.nu, p.kappa, p.variance, l),
        KernelKind::HodgeFull => 0.5 * div_class_variance(p.nu, p.kappa, p.variance, l),
        KernelKind::HodgeCurl => 0.0,
        KernelKind::HodgeCompositional => {
            let parts = spec.parts.expect("validated compositional spec");
            div_class_variance(p.nu, parts.div.kappa, parts.div.variance, l)
        }
        other => return invalid(format!("{other} is not a Hodge kernel")),
    })
}

/// Pointwise divergence variance of the projected kernel with A = I.
///
/// With f = P_x g/√2, div f = (Σ_i e_i·∇g_i − 2 x·g)/√2 on the unit sphere, whose
/// two terms are independent: (σ²/2)(Σ(2ℓ+1)λΦ / 4πC⁰ + 4).
pub fn var_div_projected_sphere(params: &MaternParams, l_max: usize) -> Result<f64> {
    params.validate()?;
    let (s, c0) = spectral_sums(params.nu, params.kappa, l_max);
    Ok(0.5 * params.variance * (s / c0 + 4.0))
}

/// Surface divergence by central differences in spherical coordinates:
/// (1/sin θ)[∂_θ(sin θ v_θ) + ∂_φ v_φ] with θ the colatitude.
pub fn numeric_divergence<F>(field: F, x: &Vector3<f64>, h: f64) -> Result<f64>
where
    F: Fn(&Vector3<f64>) -> Result<Vector3<f64>>,
{
    if !(MIN_STEP..=MAX_STEP).contains(&h) {
        return invalid(format!("step {h} outside [{MIN_STEP}, {MAX_STEP}]"));
    }
    let x = x.normalize();
    let lat = x.z.clamp(-1.0, 1.0).asin().to_degrees();
    if lat.abs() >= MAX_ABS_LATITUDE_DEG {
        return invalid(format!("latitude {lat:.2}° too close to a pole"));
    }
    let theta = x.z.clamp(-1.0, 1.0).acos();
    let lon = x.y.atan2(x.x);
    let at = |t: f64, p: f64| -> Result<(f64, f64)> {
        let (st, ct) = t.sin_cos();
        let (sp, cp) = p.sin_cos();
        let point = Vector3::new(st * cp, st * sp, ct);
        let v = field(&point)?;
        let e_theta = Vector3::new(ct * cp, ct * sp, -st);
        let e_phi = Vector3::new(-sp, cp, 0.0);
        Ok((v.dot(&e_theta), v.dot(&e_phi)))
    };
    let (vt_plus, _) = at(theta + h, lon)?;
    let (vt_minus, _) = at(theta - h, lon)?;
    let (_, vp_plus) = at(theta, lon + h)?;
    let (_, vp_minus) = at(theta, lon - h)?;
    let d_theta = ((theta + h).sin() * vt_plus - (theta - h).sin() * vt_minus) / (2.0 * h);
    let d_phi = (vp_plus - vp_minus) / (2.0 * h);
    Ok((d_theta + d_phi) / theta.sin())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DivergenceReport {
    pub analytic: f64,
    pub monte_carlo: f64,
    pub samples: usize,
    /// |MC − analytic| / analytic.
    pub relative_gap: f64,
}

/// Analytic divergence variance of a sphere spec (projected kernels need A = I).
pub fn analytic_div_variance(spec: &KernelSpec) -> Result<f64> {
    match spec.kind {
        KernelKind::Projected => {
            if spec.coregionalization.is_some_and(|a| a != Matrix3::identity()) {
                return invalid("the projected divergence formula assumes A = I");
            }
            var_div_projected_sphere(&spec.params, spec.truncation.sphere_level())
        }
        _ => var_div_hodge_sphere(spec),
    }
}

/// Compares the analytic divergence variance with the mean squared numeric
/// divergence of `samples` prior draws, pooled over `points`.
///
/// Sample i uses its own random stream derived from `seed`.
pub fn divergence_report(spec: &KernelSpec, points: &[Vector3<f64>], samples: usize, seed: u64, h: f64) -> Result<DivergenceReport> {
    if samples == 0 || points.is_empty() {
        return invalid("need at least one sample and one point");
    }
    let analytic = analytic_div_variance(spec)?;
    let spectrum = spectrum_for(spec)?;
    let per_sample = par::map_range(samples, |i| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let f = sample_prior(spec, &spectrum, &mut rng)?;
        points
            .iter()
            .map(|x| numeric_divergence(|y| f.eval_sphere(y), x, h).map(|d| d * d))
            .sum()
    });
    let total: f64 = per_sample.into_iter().collect::<Result<Vec<_>>>()?.iter().sum();
    let monte_carlo = total / (samples * points.len()) as f64;
    let relative_gap = if analytic > 0.0 {
        (monte_carlo - analytic).abs() / analytic
    } else {
        monte_carlo
    };
    Ok(DivergenceReport {
        analytic,
        monte_carlo,
        samples,
        relative_gap,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LimitationReport {
    pub x: Vector3<f64>,
    pub x_prime: Vector3<f64>,
    /// ‖M(x, x′)‖_F of the projected kernel.
    pub near: f64,
    /// ‖M(x, −x)‖_F of the projected kernel.
    pub antipodal: f64,
    /// κ → ∞ limits: λ₃ and √(λ₂² + λ₃²) of A Aᵀ.
    pub near_limit: f64,
    pub antipodal_limit: f64,
    /// Same norms for the full Hodge–Matérn kernel.
    pub hodge_near: f64,
    pub hodge_antipodal: f64,
}

/// Projected-kernel covariance norms at x = U·₁ and x′ = U·₂, the two smallest
/// eigenvectors of A Aᵀ, against x̃ = −x.
///
/// Kernels use σ² = 2 so the projected covariance is k P_x A Aᵀ P_x′ with k → 1.
pub fn limitation_demo(a: &Matrix3<f64>, nu: f64, kappa: f64, l_max: usize) -> Result<LimitationReport> {
    let aat = a * a.transpose();
    let eig = SymmetricEigen::new(aat);
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lambdas: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let tol = 1e-12 * lambdas[2].max(f64::MIN_POSITIVE);
    if lambdas.iter().filter(|&&l| l > tol).count() <= 1 {
        return invalid("A must have rank at least 2");
    }
    let x: Vector3<f64> = eig.eigenvectors.column(order[0]).normalize();
    let x_prime: Vector3<f64> = eig.eigenvectors.column(order[1]).normalize();
    let params = MaternParams::new(nu, kappa, 2.0, 0.0)?;
    let near = projected_matern(&params, a, l_max, &x, &x_prime)?.norm();
    let antipodal = projected_matern(&params, a, l_max, &x, &-x)?.norm();
    let hodge_near = hodge_matern_sphere(KernelKind::HodgeFull, &params, l_max, &x, &x_prime)?.norm();
    let hodge_antipodal = hodge_matern_sphere(KernelKind::HodgeFull, &params, l_max, &x, &-x)?.norm();
    Ok(LimitationReport {
        x,
        x_prime,
        near,
        antipodal,
        near_limit: lambdas[2],
        antipodal_limit: (lambdas[1].powi(2) + lambdas[2].powi(2)).sqrt(),
        hodge_near,
        hodge_antipodal,
    })
}

/// Evenly spread points on a latitude band, for pooled Monte-Carlo estimates.
pub fn band_points(n: usize, max_lat_deg: f64) -> Vec<Vector3<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    let zmax = max_lat_deg.to_radians().sin();
    (0..n)
        .map(|i| {
            let z = zmax * (1.0 - 2.0 * (i as f64 + 0.5) / n as f64);
            let r = (1.0 - z * z).sqrt();
            let t = golden * i as f64;
            Vector3::new(r * t.cos(), r * t.sin(), z)
        })
        .collect()
}

/// Sphere spec helper for diagnostics.
pub fn sphere_spec(kind: KernelKind, params: MaternParams, l_max: usize) -> KernelSpec {
    KernelSpec::new(kind, params, Manifold::Sphere).with_truncation(Truncation::Level(l_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{spherical_harmonic, spherical_harmonic_gradient};

    fn rotation(x: &Vector3<f64>) -> Result<Vector3<f64>> {
        Ok(Vector3::new(x.y, -x.x, 0.0))
    }

    #[test]
    fn rotation_field_is_divergence_free() {
        for x in band_points(20, 70.0) {
            assert!(numeric_divergence(rotation, &x, 1e-4).unwrap().abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_divergence_is_minus_laplacian() {
        let grad = |x: &Vector3<f64>| spherical_harmonic_gradient(2, 1, x);
        for x in band_points(7, 60.0) {
            let want = -6.0 * spherical_harmonic(2, 1, &x).unwrap();
            let got = numeric_divergence(grad, &x, 1e-4).unwrap();
            assert!((got - want).abs() < 1e-3 * want.abs().max(1e-2), "{got} vs {want}");
        }
    }

    #[test]
    fn second_order_convergence() {
        let grad = |x: &Vector3<f64>| spherical_harmonic_gradient(3, -2, x);
        let x = Vector3::new(0.3, 0.5, 0.4).normalize();
        let want = -12.0 * spherical_harmonic(3, -2, &x).unwrap();
        let e1 = (numeric_divergence(grad, &x, 1e-2).unwrap() - want).abs();
        let e2 = (numeric_divergence(grad, &x, 5e-3).unwrap() - want).abs();
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn pole_and_step_checks() {
        assert!(numeric_divergence(rotation, &Vector3::new(0.1, 0.0, 0.995), 1e-4).is_err());
        assert!(numeric_divergence(rotation, &Vector3::x(), 1e-1).is_err());
        assert!(numeric_divergence(rotation, &Vector3::x(), 1e-7).is_err());
    }

    #[test]
    fn hodge_variance_structure() {
        let p = MaternParams::new(0.5, 0.5, 1.0, 0.0).unwrap();
        let v = |k| var_div_hodge_sphere(&sphere_spec(k, p, 30)).unwrap();
        assert_eq!(v(KernelKind::HodgeCurl), 0.0);
        assert!((v(KernelKind::HodgeFull) - 0.5 * v(KernelKind::HodgeDiv)).abs() < 1e-12);
        let p3 = MaternParams { variance: 3.0, ..p };
        let v3 = var_div_hodge_sphere(&sphere_spec(KernelKind::HodgeFull, p3, 30)).unwrap();
        assert!((v3 - 3.0 * v(KernelKind::HodgeFull)).abs() < 1e-10);
    }

    #[test]
    fn projected_variance_large_kappa_limit() {
        let p = MaternParams::new(0.5, 100.0, 1.3, 0.0).unwrap();
        let v = var_div_projected_sphere(&p, 30).unwrap();
        assert!((v / (2.0 * 1.3) - 1.0).abs() < 1e-4, "{v}");
    }

    #[test]
    fn monte_carlo_matches_hodge_formula() {
        let p = MaternParams::new(1.5, 0.5, 1.0, 0.0).unwrap();
        let spec = sphere_spec(KernelKind::HodgeDiv, p, 15);
        let r = divergence_report(&spec, &band_points(12, 60.0), 300, 11, 1e-4).unwrap();
        assert!(r.relative_gap < 0.1, "{r:?}");
    }

    #[test]
    fn limitation_examples() {
        let r = limitation_demo(&Matrix3::identity(), 0.5, 100.0, 30).unwrap();
        assert!((r.near - 1.0).abs() < 0.01 && (r.antipodal - 2f64.sqrt()).abs() < 0.01);
        assert!(r.near < r.antipodal);
        assert!(r.hodge_near >= r.hodge_antipodal);
        let a = Matrix3::from_diagonal(&Vector3::new(0.0, 1.0, 2.0));
        let r = limitation_demo(&a, f64::INFINITY, 100.0, 30).unwrap();
        assert!((r.near_limit - 4.0).abs() < 1e-12 && (r.antipodal_limit - 17f64.sqrt()).abs() < 1e-12);
        assert!(r.near < r.antipodal);
        let rank1 = Matrix3::from_diagonal(&Vector3::new(0.0, 0.0, 3.0));
        assert!(limitation_demo(&rank1, 0.5, 100.0, 30).is_err());
    }
}
