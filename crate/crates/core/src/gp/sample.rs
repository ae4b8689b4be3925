//! Prior draws from truncated expansions and exact joint posterior draws.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{factorize, PosteriorModel};
use crate::error::{invalid, Result};
use crate::kernels::{class_weights, phi, KernelKind, KernelSpec};
use crate::manifold::{projection_matrix, Manifold, ManifoldPoint, TangentVector};
use crate::spectrum::{sphere_spectrum, torus2_hodge_spectrum, torus_spectrum, Spectrum};

/// Spectrum matching a spec's manifold, kind and truncation.
pub fn spectrum_for(spec: &KernelSpec) -> Result<Spectrum> {
    let bound = spec.truncation.lambda_bound();
    match (spec.manifold, spec.kind) {
        (Manifold::Sphere, _) => Ok(sphere_spectrum(spec.truncation.sphere_level())),
        (Manifold::Torus(2), KernelKind::HodgeDiv | KernelKind::HodgeCurl | KernelKind::HodgeCompositional) => {
            torus2_hodge_spectrum(bound)
        }
        (m, _) => torus_spectrum(m.torus_dim().unwrap_or(1), bound),
    }
}

#[derive(Clone, Debug)]
enum Coefficients {
    /// Weighted normals on the eigenfields.
    Fields(DVector<f64>),
    /// Weighted normals on the scalar eigenfunctions.
    Scalar(DVector<f64>),
    /// Three independent scalar fields, mapped by (1/√2) P_x A.
    Projected { coefs: DMatrix<f64>, a: Matrix3<f64> },
}

/// A frozen random field f(x) = Σ √w_n ξ_n s_n(x).
#[derive(Clone, Debug)]
pub struct PriorSample {
    spectrum: Spectrum,
    coefs: Coefficients,
}

fn scalar_weights(spec: &KernelSpec, spectrum: &Spectrum, variance: f64) -> Result<Vec<f64>> {
    let p = &spec.params;
    let bound = spec.truncation.lambda_bound();
    if spectrum.complete_to + 1e-9 < bound {
        return invalid("spectrum shorter than the kernel truncation");
    }
    let d = spectrum.dim();
    let raw: Vec<f64> = spectrum
        .scalars
        .iter()
        .map(|s| if s.eigenvalue <= bound + 1e-9 { phi(p.nu, p.kappa, s.eigenvalue, d) } else { 0.0 })
        .collect();
    let c = raw.iter().sum::<f64>() / spectrum.volume;
    Ok(raw.into_iter().map(|w| variance / c * w).collect())
}

fn weighted_normals<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(
        weights.len(),
        weights.iter().map(|w| w.sqrt() * rng.sample::<f64, _>(StandardNormal)),
    )
}

/// Draws a prior field for `spec` from the truncated `spectrum`.
pub fn sample_prior<R: Rng + ?Sized>(spec: &KernelSpec, spectrum: &Spectrum, rng: &mut R) -> Result<PriorSample> {
    spec.validate()?;
    let coefs = match spec.kind {
        KernelKind::Scalar => Coefficients::Scalar(weighted_normals(&scalar_weights(spec, spectrum, spec.params.variance)?, rng)),
        KernelKind::Projected => {
            if spectrum.manifold != Manifold::Sphere {
                return invalid("projected samples need the sphere");
            }
            let w = scalar_weights(spec, spectrum, spec.params.variance)?;
            let mut coefs = DMatrix::zeros(3, w.len());
            for r in 0..3 {
                coefs.row_mut(r).copy_from(&weighted_normals(&w, rng).transpose());
            }
            Coefficients::Projected {
                coefs,
                a: spec.coregionalization.unwrap_or_else(Matrix3::identity),
            }
        }
        _ => Coefficients::Fields(weighted_normals(&class_weights(spec, spectrum)?, rng)),
    };
    Ok(PriorSample {
        spectrum: spectrum.clone(),
        coefs,
    })
}

impl PriorSample {
    /// Field value as an ambient (sphere) or global-frame (torus) vector;
    /// scalar samples give a length-1 vector.
    pub fn eval(&self, p: &ManifoldPoint) -> Result<DVector<f64>> {
        match &self.coefs {
            Coefficients::Fields(c) => Ok(self.spectrum.eval_fields(p)? * c),
            Coefficients::Scalar(c) => {
                let s = DVector::from_vec(self.spectrum.eval_scalars(p)?);
                Ok(DVector::from_element(1, s.dot(c)))
            }
            Coefficients::Projected { coefs, a } => {
                let s = DVector::from_vec(self.spectrum.eval_scalars(p)?);
                let g = Vector3::from_column_slice((coefs * s).as_slice());
                let f = projection_matrix(p.as_sphere()?) * a * g / std::f64::consts::SQRT_2;
                Ok(DVector::from_column_slice(f.as_slice()))
            }
        }
    }

    pub fn eval_tangent(&self, p: &ManifoldPoint) -> Result<TangentVector> {
        if matches!(self.coefs, Coefficients::Scalar(_)) {
            return invalid("scalar samples have no tangent values");
        }
        Ok(TangentVector {
            base: p.clone(),
            components: self.eval(p)?,
        })
    }

    /// Sphere field as a 3-vector.
    pub fn eval_sphere(&self, x: &Vector3<f64>) -> Result<Vector3<f64>> {
        let v = self.eval(&ManifoldPoint::Sphere(*x))?;
        if v.len() != 3 {
            return invalid("not a sphere vector field");
        }
        Ok(Vector3::from_column_slice(v.as_slice()))
    }
}

/// One exact draw from the joint posterior at `queries`.
pub fn sample_posterior<R: Rng + ?Sized>(
    model: &PosteriorModel,
    queries: &[ManifoldPoint],
    rng: &mut R,
) -> Result<Vec<TangentVector>> {
    let (frames, mean, cov) = model.joint(queries)?;
    let p = model.kernel().spec().params;
    let scale = if p.variance > 0.0 { p.variance } else { 1.0 };
    let lower = if cov.nrows() == 0 || cov.iter().all(|v| *v == 0.0) {
        DMatrix::zeros(cov.nrows(), cov.ncols())
    } else {
        factorize(cov, 0.0, scale)?.chol.l()
    };
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let draw = mean + lower * z;
    let q = frames.first().map_or(0, |b| b.ncols());
    Ok(queries
        .iter()
        .zip(&frames)
        .enumerate()
        .map(|(i, (pt, b))| TangentVector {
            base: pt.clone(),
            components: b * draw.rows(q * i, q),
        })
        .collect())
}
