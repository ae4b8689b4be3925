//! Kernels as explicit weighted sums over eigenfields.

use nalgebra::DMatrix;

use super::{kind_classes, normalization, phi, KernelKind, KernelSpec};
use crate::error::{invalid, Result};
use crate::manifold::ManifoldPoint;
use crate::spectrum::{EigenfieldIndex, HodgeClass, Spectrum};

/// Σ_n w_n s_n(x) s_n(x′)ᵀ over the eigenfields of `spectrum`.
pub fn spectral_kernel_oracle<F>(weight: F, spectrum: &Spectrum, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<DMatrix<f64>>
where
    F: Fn(usize, &EigenfieldIndex) -> f64,
{
    let fx = spectrum.eval_fields(x)?;
    let fy = spectrum.eval_fields(y)?;
    let mut scaled = fy;
    for (j, f) in spectrum.fields.iter().enumerate() {
        let w = weight(j, f);
        scaled.column_mut(j).scale_mut(w);
    }
    Ok(fx * scaled.transpose())
}

fn class_sum(spectrum: &Spectrum, class: HodgeClass, nu: f64, kappa: f64, bound: f64) -> f64 {
    spectrum
        .fields
        .iter()
        .filter(|f| f.class == class && f.eigenvalue <= bound + 1e-9)
        .map(|f| phi(nu, kappa, f.eigenvalue, spectrum.dim()))
        .sum::<f64>()
        / spectrum.volume
}

/// Per-eigenfield weights σ²/C · Φ(λ_n) of a vector kernel over `spectrum`.
pub fn class_weights(spec: &KernelSpec, spectrum: &Spectrum) -> Result<Vec<f64>> {
    let bound = spec.truncation.lambda_bound();
    let p = &spec.params;
    let d = spectrum.dim();
    let within = |f: &EigenfieldIndex| f.eigenvalue <= bound + 1e-9;
    match spec.kind {
        KernelKind::PureNoise => Ok(vec![0.0; spectrum.fields.len()]),
        KernelKind::HodgeFull | KernelKind::HodgeDiv | KernelKind::HodgeCurl => {
            let c = normalization(spec, spectrum)?;
            let classes = kind_classes(spec.kind, spectrum.manifold);
            Ok(spectrum
                .fields
                .iter()
                .map(|f| {
                    if within(f) && classes.contains(&f.class) {
                        p.variance / c * phi(p.nu, p.kappa, f.eigenvalue, d)
                    } else {
                        0.0
                    }
                })
                .collect())
        }
        KernelKind::HodgeCompositional => {
            let parts = spec.parts.ok_or_else(|| crate::Error::InvalidInput("missing compositional parts".into()))?;
            let cd = class_sum(spectrum, HodgeClass::Div, p.nu, parts.div.kappa, bound);
            let cc = class_sum(spectrum, HodgeClass::Curl, p.nu, parts.curl.kappa, bound);
            let ch = class_sum(spectrum, HodgeClass::Harm, p.nu, 1.0, bound);
            if cd == 0.0 || cc == 0.0 {
                return invalid("spectrum lacks divergence or curl eigenfields");
            }
            if parts.harm_variance > 0.0 && ch == 0.0 {
                return invalid("spectrum has no harmonic fields");
            }
            Ok(spectrum
                .fields
                .iter()
                .map(|f| {
                    if !within(f) {
                        return 0.0;
                    }
                    match f.class {
                        HodgeClass::Div => parts.div.variance / cd * phi(p.nu, parts.div.kappa, f.eigenvalue, d),
                        HodgeClass::Curl => parts.curl.variance / cc * phi(p.nu, parts.curl.kappa, f.eigenvalue, d),
                        HodgeClass::Harm if parts.harm_variance > 0.0 => {
                            parts.harm_variance / ch * phi(p.nu, 1.0, f.eigenvalue, d)
                        }
                        _ => 0.0,
                    }
                })
                .collect())
        }
        KernelKind::Scalar | KernelKind::Projected => invalid(format!("{} is not an eigenfield kernel", spec.kind)),
    }
}
