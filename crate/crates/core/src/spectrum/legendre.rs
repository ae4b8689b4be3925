//! Legendre polynomials with first and second derivatives.

use crate::error::{invalid, Result};

/// Inputs this far outside [−1, 1] are rejected; anything closer is clamped.
pub const DOMAIN_SLACK: f64 = 1e-12;

fn check_domain(t: f64) -> Result<f64> {
    if !t.is_finite() || t.abs() > 1.0 + DOMAIN_SLACK {
        return invalid(format!("Legendre argument {t} outside [-1, 1]"));
    }
    Ok(t.clamp(-1.0, 1.0))
}

/// (P_ℓ(t), P_ℓ′(t), P_ℓ″(t)) for every ℓ ≤ `l_max`.
///
/// Values use Bonnet's recurrence; derivatives use
/// P_ℓ′ = P_{ℓ−2}′ + (2ℓ−1) P_{ℓ−1} and its derivative, which stay exact at t = ±1.
pub fn legendre_table(l_max: usize, t: f64) -> Result<Vec<[f64; 3]>> {
    let t = check_domain(t)?;
    Ok(table_unchecked(l_max, t))
}

pub(crate) fn table_unchecked(l_max: usize, t: f64) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(l_max + 1);
    out.push([1.0, 0.0, 0.0]);
    if l_max >= 1 {
        out.push([t, 1.0, 0.0]);
    }
    for l in 2..=l_max {
        let lf = l as f64;
        let [p1, d1, _] = out[l - 1];
        let [p2, d2, dd2] = out[l - 2];
        let p = ((2.0 * lf - 1.0) * t * p1 - (lf - 1.0) * p2) / lf;
        let d = d2 + (2.0 * lf - 1.0) * p1;
        let dd = dd2 + (2.0 * lf - 1.0) * d1;
        out.push([p, d, dd]);
    }
    out
}

/// (P_ℓ(t), P_ℓ′(t), P_ℓ″(t)) for a single level.
pub fn legendre(l: usize, t: f64) -> Result<[f64; 3]> {
    Ok(legendre_table(l, t)?[l])
}
