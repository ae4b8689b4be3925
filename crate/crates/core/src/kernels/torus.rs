//! Matérn kernels on the circle and flat tori.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::{class_weights, phi, KernelKind, KernelSpec, MaternParams, Truncation};
use crate::error::{invalid, Result};
use crate::manifold::{Manifold, ManifoldPoint};
use crate::spectrum::{torus2_hodge_spectrum, Spectrum};

/// Scalar kernel as a lattice sum over nonnegative frequency tuples.
///
/// Each tuple n stands for all sign patterns, so its eigenspace contributes
/// Π_i g(n_i, Δθ_i) with g(0, ·) = 1/2π and g(n, Δ) = cos(nΔ)/π.
#[derive(Clone, Debug)]
pub(crate) struct LatticeSeries {
    d: usize,
    n_max: usize,
    kind: KernelKind,
    terms: Vec<(Vec<usize>, f64)>,
}

fn tuples(d: usize, cap: f64) -> Vec<Vec<usize>> {
    let n_max = cap.max(0.0).sqrt().floor() as usize;
    let mut out = vec![Vec::new()];
    for _ in 0..d {
        let mut next = Vec::new();
        for t in &out {
            let used: usize = t.iter().map(|n| n * n).sum();
            for n in 0..=n_max {
                if (used + n * n) as f64 <= cap + 1e-9 {
                    let mut v = t.clone();
                    v.push(n);
                    next.push(v);
                }
            }
        }
        out = next;
    }
    out
}

impl LatticeSeries {
    pub(crate) fn new(spec: &KernelSpec) -> Result<Self> {
        let d = spec
            .manifold
            .torus_dim()
            .ok_or_else(|| crate::Error::InvalidInput("lattice kernels need a circle or torus".into()))?;
        let cap = match spec.truncation {
            Truncation::EigenvalueCap(c) => c,
            Truncation::Level(_) => return invalid("torus kernels are truncated by eigenvalue"),
        };
        let MaternParams { nu, kappa, variance, .. } = spec.params;
        let ts = tuples(d, cap);
        let raw: Vec<f64> = ts
            .iter()
            .map(|t| phi(nu, kappa, t.iter().map(|n| (n * n) as f64).sum(), d))
            .collect();
        let c: f64 = ts
            .iter()
            .zip(&raw)
            .map(|(t, w)| w * t.iter().map(|&n| if n == 0 { 1.0 } else { 2.0 }).product::<f64>())
            .sum::<f64>()
            / spec.manifold.volume();
        let scale = match spec.kind {
            KernelKind::Scalar => variance / c,
            KernelKind::HodgeFull => variance / (c * d as f64),
            other => return invalid(format!("{other} has no lattice form")),
        };
        Ok(LatticeSeries {
            d,
            n_max: cap.max(0.0).sqrt().floor() as usize,
            kind: spec.kind,
            terms: ts.into_iter().zip(raw).map(|(t, w)| (t, w * scale)).collect(),
        })
    }

    fn scalar(&self, x: &[f64], y: &[f64]) -> f64 {
        let g: Vec<Vec<f64>> = x
            .iter()
            .zip(y)
            .map(|(a, b)| {
                let delta = a - b;
                (0..=self.n_max)
                    .map(|n| if n == 0 { 0.5 / PI } else { (n as f64 * delta).cos() / PI })
                    .collect()
            })
            .collect();
        self.terms
            .iter()
            .map(|(t, w)| w * t.iter().enumerate().map(|(i, &n)| g[i][n]).product::<f64>())
            .sum()
    }

    pub(crate) fn eval(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<DMatrix<f64>> {
        let (a, b) = (x.angles()?, y.angles()?);
        if a.len() != self.d || b.len() != self.d {
            return invalid(format!("expected points on T^{}", self.d));
        }
        let k = self.scalar(&a, &b);
        Ok(match self.kind {
            KernelKind::Scalar => DMatrix::from_element(1, 1, k),
            _ => DMatrix::identity(self.d, self.d) * k,
        })
    }
}

/// Classified T² spectrum plus per-field weights for div, curl and compositional kernels.
pub(crate) fn classified_weights(spec: &KernelSpec) -> Result<(Spectrum, Vec<f64>)> {
    if spec.manifold != Manifold::Torus(2) {
        return invalid("Hodge class kernels on tori need T²");
    }
    let spectrum = torus2_hodge_spectrum(spec.truncation.lambda_bound())?;
    let weights = class_weights(spec, &spectrum)?;
    Ok((spectrum, weights))
}

/// Matérn kernel on T^d: scalar, or the full vector kernel (1/d) k I_d.
pub fn torus_matern(
    kind: KernelKind,
    params: &MaternParams,
    d: usize,
    lambda_cap: f64,
    x: &ManifoldPoint,
    y: &ManifoldPoint,
) -> Result<DMatrix<f64>> {
    let manifold = if d == 1 { Manifold::Circle } else { Manifold::Torus(d) };
    let spec = KernelSpec::new(kind, *params, manifold).with_truncation(Truncation::EigenvalueCap(lambda_cap));
    super::Kernel::new(spec)?.eval(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{normalization, spectral_kernel_oracle, Kernel};
    use crate::spectrum::{torus_spectrum, HodgeClass};

    fn p() -> MaternParams {
        MaternParams::new(1.5, 0.8, 0.9, 0.0).unwrap()
    }

    #[test]
    fn lattice_matches_product_spectrum() {
        for d in 1..=3 {
            let cap = if d == 3 { 12.0 } else { 30.0 };
            let spectrum = torus_spectrum(d, cap).unwrap();
            let manifold = spectrum.manifold;
            let spec = KernelSpec::new(KernelKind::HodgeFull, p(), manifold).with_truncation(Truncation::EigenvalueCap(cap));
            let c = normalization(&spec, &spectrum).unwrap();
            let x = ManifoldPoint::torus(&[0.4, 2.0, 5.5][..d]);
            let y = ManifoldPoint::torus(&[3.0, 0.1, 1.0][..d]);
            let slow = spectral_kernel_oracle(|_, f| p().variance / c * phi(1.5, 0.8, f.eigenvalue, d), &spectrum, &x, &y)
                .unwrap();
            let fast = torus_matern(KernelKind::HodgeFull, &p(), d, cap, &x, &y).unwrap();
            assert!((fast - slow).abs().max() < 1e-12, "d={d}");
        }
    }

    #[test]
    fn diagonal_and_stationarity() {
        let x = ManifoldPoint::torus(&[1.0, 2.0]);
        let k = torus_matern(KernelKind::Scalar, &p(), 2, 100.0, &x, &x).unwrap();
        assert!((k[(0, 0)] - 0.9).abs() < 1e-12);
        let a = torus_matern(KernelKind::Scalar, &p(), 2, 100.0, &x, &ManifoldPoint::torus(&[1.5, 2.5])).unwrap();
        let b = torus_matern(KernelKind::Scalar, &p(), 2, 100.0, &ManifoldPoint::torus(&[4.0, 6.0]), &ManifoldPoint::torus(&[4.5, 6.5]))
            .unwrap();
        assert!((a - b).abs().max() < 1e-12);
    }

    #[test]
    fn torus_div_curl_split_full() {
        let cap = 25.0;
        let spectrum = torus2_hodge_spectrum(cap).unwrap();
        assert_eq!(spectrum.class_count(HodgeClass::Harm), 2);
        let x = ManifoldPoint::torus(&[0.2, 1.0]);
        let y = ManifoldPoint::torus(&[2.2, 4.0]);
        let mk = |k| Kernel::new(KernelSpec::new(k, p(), Manifold::Torus(2)).with_truncation(Truncation::EigenvalueCap(cap))).unwrap();
        let div = mk(KernelKind::HodgeDiv).eval(&x, &x).unwrap();
        let curl = mk(KernelKind::HodgeCurl).eval(&x, &y).unwrap();
        assert!((div.trace() - 0.9).abs() < 1e-12);
        let back = mk(KernelKind::HodgeCurl).eval(&y, &x).unwrap();
        assert!((curl - back.transpose()).abs().max() < 1e-12);
    }

    #[test]
    fn wrong_dimension_rejected() {
        let k = Kernel::new(KernelSpec::new(KernelKind::Scalar, p(), Manifold::Torus(2))).unwrap();
        assert!(k.eval(&ManifoldPoint::torus(&[0.0]), &ManifoldPoint::torus(&[0.0, 1.0])).is_err());
    }
}
