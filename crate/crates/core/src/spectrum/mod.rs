//! Laplace–Beltrami and Hodge spectra on the sphere, circle and flat tori.
//!
//! A [`Spectrum`] lists scalar eigenpairs together with an orthonormal basis of
//! eigenfields of the Hodge Laplacian on vector fields. Every entry can be
//! evaluated pointwise; [`Spectrum::eval_fields`] evaluates all of them at once.

pub mod legendre;
pub mod sphere;

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{invalid, Result};
use crate::manifold::{Manifold, ManifoldPoint};

pub use legendre::{legendre, legendre_table};
pub use sphere::{
    harmonic_index, sphere_eigenfield, sphere_eigenvalue, spherical_harmonic, spherical_harmonic_gradient,
    HarmonicsAt,
};

/// Hodge class of an eigenfield.
///
/// `Mixed` marks product-manifold entries f ⊗ s that are eigenfields but not
/// pure gradients, pure curls or harmonic fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HodgeClass {
    Div,
    Curl,
    Harm,
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Parity {
    Cos,
    Sin,
}

/// A scalar eigenfunction label.
#[derive(Clone, Debug, PartialEq)]
pub enum ScalarMode {
    Sphere { l: usize, m: i64 },
    /// cos(nθ)/√π or sin(nθ)/√π, or 1/√(2π) for n = 0.
    Circle { n: usize, parity: Parity },
    /// Product over consecutive circle factors of a torus.
    Product(Vec<ScalarMode>),
}

impl ScalarMode {
    pub fn eigenvalue(&self) -> f64 {
        match self {
            ScalarMode::Sphere { l, .. } => sphere_eigenvalue(*l),
            ScalarMode::Circle { n, .. } => (n * n) as f64,
            ScalarMode::Product(fs) => fs.iter().map(ScalarMode::eigenvalue).sum(),
        }
    }

    /// Number of torus angles this mode consumes (0 for sphere modes).
    fn arity(&self) -> usize {
        match self {
            ScalarMode::Sphere { .. } => 0,
            ScalarMode::Circle { .. } => 1,
            ScalarMode::Product(fs) => fs.iter().map(ScalarMode::arity).sum(),
        }
    }

    fn circle_factors(&self) -> Vec<(usize, Parity)> {
        match self {
            ScalarMode::Circle { n, parity } => vec![(*n, *parity)],
            ScalarMode::Product(fs) => fs.iter().flat_map(ScalarMode::circle_factors).collect(),
            ScalarMode::Sphere { .. } => Vec::new(),
        }
    }

    fn flatten_into(self, out: &mut Vec<ScalarMode>) {
        match self {
            ScalarMode::Product(fs) => fs.into_iter().for_each(|f| f.flatten_into(out)),
            other => out.push(other),
        }
    }

    /// Value and gradient (ambient on the sphere, global frame on tori).
    pub fn eval_with_gradient(&self, p: &ManifoldPoint) -> Result<(f64, DVector<f64>)> {
        match (self, p) {
            (ScalarMode::Sphere { l, m }, ManifoldPoint::Sphere(x)) => {
                let v = spherical_harmonic(*l, *m, x)?;
                let g = spherical_harmonic_gradient(*l, *m, x)?;
                Ok((v, DVector::from_column_slice(g.as_slice())))
            }
            (ScalarMode::Sphere { .. }, _) => invalid("sphere mode evaluated off the sphere"),
            (mode, p) => {
                let angles = p.angles()?;
                if angles.len() != mode.arity() {
                    return invalid(format!("mode needs {} angles, point has {}", mode.arity(), angles.len()));
                }
                Ok(torus_value_grad(&mode.circle_factors(), &angles))
            }
        }
    }

    pub fn eval(&self, p: &ManifoldPoint) -> Result<f64> {
        Ok(self.eval_with_gradient(p)?.0)
    }
}

fn circle_value_deriv(n: usize, parity: Parity, theta: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0 / TAU.sqrt(), 0.0);
    }
    let nf = n as f64;
    let (s, c) = (nf * theta).sin_cos();
    let k = 1.0 / PI.sqrt();
    match parity {
        Parity::Cos => (k * c, -k * nf * s),
        Parity::Sin => (k * s, k * nf * c),
    }
}

fn torus_value_grad(factors: &[(usize, Parity)], angles: &[f64]) -> (f64, DVector<f64>) {
    let vd: Vec<(f64, f64)> = factors
        .iter()
        .zip(angles)
        .map(|(&(n, par), &t)| circle_value_deriv(n, par, t))
        .collect();
    let value = vd.iter().map(|(v, _)| v).product();
    let grad = DVector::from_iterator(
        vd.len(),
        (0..vd.len()).map(|i| vd.iter().enumerate().map(|(j, (v, d))| if i == j { *d } else { *v }).product()),
    );
    (value, grad)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarEigenpair {
    pub eigenvalue: f64,
    pub mode: ScalarMode,
}

/// How an eigenfield is built from scalar data.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldKind {
    /// ∇f/√λ.
    Gradient(ScalarMode),
    /// ⋆∇f/√λ.
    RotatedGradient(ScalarMode),
    /// f · e_axis in the global frame of a circle or torus.
    ScalarTimesAxis { scalar: ScalarMode, axis: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenfieldIndex {
    pub class: HodgeClass,
    pub eigenvalue: f64,
    pub field: FieldKind,
}

/// Truncated spectrum of a manifold.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub manifold: Manifold,
    pub volume: f64,
    /// Every eigenvalue ≤ this is present; larger ones may be missing.
    pub complete_to: f64,
    pub scalars: Vec<ScalarEigenpair>,
    pub fields: Vec<EigenfieldIndex>,
    /// ℓ_max for sphere spectra.
    pub l_max: Option<usize>,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    pub fn class_count(&self, class: HodgeClass) -> usize {
        self.fields.iter().filter(|f| f.class == class).count()
    }

    /// All scalar eigenfunctions at `p`.
    pub fn eval_scalars(&self, p: &ManifoldPoint) -> Result<Vec<f64>> {
        self.check_point(p)?;
        if let (Some(l_max), ManifoldPoint::Sphere(x)) = (self.l_max, p) {
            let h = HarmonicsAt::new(l_max, x);
            return self
                .scalars
                .iter()
                .map(|s| match s.mode {
                    ScalarMode::Sphere { l, m } => Ok(h.value(l, m)),
                    _ => invalid("non-sphere mode in sphere spectrum"),
                })
                .collect();
        }
        self.scalars.iter().map(|s| s.mode.eval(p)).collect()
    }

    /// All eigenfields at `p` as columns of an (ambient dim × field count) matrix.
    pub fn eval_fields(&self, p: &ManifoldPoint) -> Result<DMatrix<f64>> {
        self.check_point(p)?;
        let rows = self.manifold.ambient_dim();
        let mut out = DMatrix::zeros(rows, self.fields.len());
        if let (Some(l_max), ManifoldPoint::Sphere(x)) = (self.l_max, p) {
            let h = HarmonicsAt::new(l_max, x);
            for (j, f) in self.fields.iter().enumerate() {
                let v = sphere_field(&h, x, f)?;
                out.column_mut(j).copy_from_slice(v.as_slice());
            }
            return Ok(out);
        }
        for (j, f) in self.fields.iter().enumerate() {
            let v = eval_field_generic(f, p)?;
            out.column_mut(j).copy_from(&v);
        }
        Ok(out)
    }

    fn check_point(&self, p: &ManifoldPoint) -> Result<()> {
        let pm = p.manifold();
        let same = pm == self.manifold
            || matches!((pm, self.manifold), (Manifold::Circle, Manifold::Torus(1)) | (Manifold::Torus(1), Manifold::Circle));
        if !same {
            return invalid(format!("point on {pm} evaluated against a {} spectrum", self.manifold));
        }
        Ok(())
    }
}

fn sphere_field(h: &HarmonicsAt, x: &Vector3<f64>, f: &EigenfieldIndex) -> Result<Vector3<f64>> {
    match &f.field {
        FieldKind::Gradient(ScalarMode::Sphere { l, m }) => Ok(h.gradient(*l, *m) / sphere_eigenvalue(*l).sqrt()),
        FieldKind::RotatedGradient(ScalarMode::Sphere { l, m }) => {
            Ok(x.cross(&h.gradient(*l, *m)) / sphere_eigenvalue(*l).sqrt())
        }
        other => invalid(format!("unsupported sphere eigenfield {other:?}")),
    }
}

fn eval_field_generic(f: &EigenfieldIndex, p: &ManifoldPoint) -> Result<DVector<f64>> {
    match &f.field {
        FieldKind::Gradient(mode) => {
            let (_, g) = mode.eval_with_gradient(p)?;
            Ok(g / mode.eigenvalue().sqrt())
        }
        FieldKind::RotatedGradient(mode) => {
            let (_, g) = mode.eval_with_gradient(p)?;
            let scale = mode.eigenvalue().sqrt();
            match p {
                ManifoldPoint::Sphere(x) => {
                    let g3 = Vector3::from_column_slice(g.as_slice());
                    Ok(DVector::from_column_slice(x.cross(&g3).as_slice()) / scale)
                }
                _ if g.len() == 2 => Ok(DVector::from_vec(vec![-g[1], g[0]]) / scale),
                _ => invalid("rotated gradients need a surface"),
            }
        }
        FieldKind::ScalarTimesAxis { scalar, axis } => {
            let d = p.manifold().ambient_dim();
            let mut v = DVector::zeros(d);
            v[*axis] = scalar.eval(p)?;
            Ok(v)
        }
    }
}

/// Scalar spherical harmonics up to `l_max` and the Div/Curl eigenfields for ℓ ≥ 1.
pub fn sphere_spectrum(l_max: usize) -> Spectrum {
    let mut scalars = Vec::with_capacity((l_max + 1).pow(2));
    let mut fields = Vec::with_capacity(2 * (l_max + 1).pow(2));
    for l in 0..=l_max {
        let lambda = sphere_eigenvalue(l);
        for m in -(l as i64)..=l as i64 {
            let mode = ScalarMode::Sphere { l, m };
            scalars.push(ScalarEigenpair {
                eigenvalue: lambda,
                mode: mode.clone(),
            });
            if l >= 1 {
                fields.push(EigenfieldIndex {
                    class: HodgeClass::Div,
                    eigenvalue: lambda,
                    field: FieldKind::Gradient(mode.clone()),
                });
                fields.push(EigenfieldIndex {
                    class: HodgeClass::Curl,
                    eigenvalue: lambda,
                    field: FieldKind::RotatedGradient(mode),
                });
            }
        }
    }
    Spectrum {
        manifold: Manifold::Sphere,
        volume: Manifold::Sphere.volume(),
        complete_to: sphere_eigenvalue(l_max),
        scalars,
        fields,
        l_max: Some(l_max),
    }
}

/// Circle spectrum up to frequency `n_max`; vector entries are f·v with the
/// constant one harmonic and the rest exact (Div).
pub fn circle_spectrum(n_max: usize) -> Spectrum {
    let mut scalars = vec![ScalarEigenpair {
        eigenvalue: 0.0,
        mode: ScalarMode::Circle { n: 0, parity: Parity::Cos },
    }];
    for n in 1..=n_max {
        for parity in [Parity::Cos, Parity::Sin] {
            scalars.push(ScalarEigenpair {
                eigenvalue: (n * n) as f64,
                mode: ScalarMode::Circle { n, parity },
            });
        }
    }
    let fields = scalars
        .iter()
        .map(|s| EigenfieldIndex {
            class: if s.eigenvalue == 0.0 { HodgeClass::Harm } else { HodgeClass::Div },
            eigenvalue: s.eigenvalue,
            field: FieldKind::ScalarTimesAxis {
                scalar: s.mode.clone(),
                axis: 0,
            },
        })
        .collect();
    Spectrum {
        manifold: Manifold::Circle,
        volume: TAU,
        complete_to: (n_max * n_max) as f64,
        scalars,
        fields,
        l_max: None,
    }
}

fn product_mode(a: &ScalarMode, b: &ScalarMode) -> ScalarMode {
    let mut fs = Vec::new();
    a.clone().flatten_into(&mut fs);
    b.clone().flatten_into(&mut fs);
    ScalarMode::Product(fs)
}

fn axis_scalar(f: &EigenfieldIndex) -> Result<(&ScalarMode, usize)> {
    match &f.field {
        FieldKind::ScalarTimesAxis { scalar, axis } => Ok((scalar, *axis)),
        other => invalid(format!("product spectra need f·e_j factor fields, got {other:?}")),
    }
}

/// Spectrum of a product of circles/tori, keeping eigenvalues ≤ `lambda_cap`.
///
/// Vector entries pair scalar modes of one factor with eigenfields of the other,
/// so a 1-form on the product is f_a ⊗ s_b or s_a ⊗ f_b.
pub fn product_spectrum(a: &Spectrum, b: &Spectrum, lambda_cap: f64) -> Result<Spectrum> {
    if a.scalars.is_empty() || b.scalars.is_empty() || a.fields.is_empty() || b.fields.is_empty() {
        return invalid("product of an empty spectrum");
    }
    let (da, db) = match (a.manifold.torus_dim(), b.manifold.torus_dim()) {
        (Some(da), Some(db)) => (da, db),
        _ => return invalid("product spectra are supported for circles and tori"),
    };
    if a.complete_to < lambda_cap || b.complete_to < lambda_cap {
        return invalid(format!(
            "factor spectra complete to {} and {}, need {lambda_cap}",
            a.complete_to, b.complete_to
        ));
    }
    let mut scalars = Vec::new();
    for sa in &a.scalars {
        for sb in &b.scalars {
            let lambda = sa.eigenvalue + sb.eigenvalue;
            if lambda <= lambda_cap {
                scalars.push(ScalarEigenpair {
                    eigenvalue: lambda,
                    mode: product_mode(&sa.mode, &sb.mode),
                });
            }
        }
    }
    let mut fields = Vec::new();
    let classify = |lambda: f64| if lambda == 0.0 { HodgeClass::Harm } else { HodgeClass::Mixed };
    for fa in &a.fields {
        let (ma, axis) = axis_scalar(fa)?;
        for sb in &b.scalars {
            let lambda = fa.eigenvalue + sb.eigenvalue;
            if lambda <= lambda_cap {
                fields.push(EigenfieldIndex {
                    class: classify(lambda),
                    eigenvalue: lambda,
                    field: FieldKind::ScalarTimesAxis {
                        scalar: product_mode(ma, &sb.mode),
                        axis,
                    },
                });
            }
        }
    }
    for sa in &a.scalars {
        for fb in &b.fields {
            let (mb, axis) = axis_scalar(fb)?;
            let lambda = sa.eigenvalue + fb.eigenvalue;
            if lambda <= lambda_cap {
                fields.push(EigenfieldIndex {
                    class: classify(lambda),
                    eigenvalue: lambda,
                    field: FieldKind::ScalarTimesAxis {
                        scalar: product_mode(&sa.mode, mb),
                        axis: da + axis,
                    },
                });
            }
        }
    }
    scalars.sort_by(|x, y| x.eigenvalue.total_cmp(&y.eigenvalue));
    fields.sort_by(|x, y| x.eigenvalue.total_cmp(&y.eigenvalue));
    let manifold = Manifold::Torus(da + db);
    Ok(Spectrum {
        manifold,
        volume: a.volume * b.volume,
        complete_to: lambda_cap,
        scalars,
        fields,
        l_max: None,
    })
}

/// Spectrum of T^d with eigenvalues ≤ `lambda_cap`, built as an iterated product of circles.
pub fn torus_spectrum(d: usize, lambda_cap: f64) -> Result<Spectrum> {
    if d == 0 {
        return invalid("torus dimension must be at least 1");
    }
    let n_max = lambda_cap.max(0.0).sqrt().floor() as usize;
    let circle = circle_spectrum(n_max);
    let cap = lambda_cap.max(0.0);
    let mut spec = circle.clone();
    spec.complete_to = cap;
    for _ in 1..d {
        spec = product_spectrum(&spec, &Spectrum { complete_to: cap, ..circle.clone() }, cap)?;
    }
    spec.manifold = if d == 1 { Manifold::Circle } else { Manifold::Torus(d) };
    Ok(spec)
}

/// T² spectrum with eigenfields sorted into Hodge classes: ∇f/√λ (Div),
/// ⋆∇f/√λ (Curl) and the two constant harmonic fields e_j/(2π).
pub fn torus2_hodge_spectrum(lambda_cap: f64) -> Result<Spectrum> {
    let base = torus_spectrum(2, lambda_cap)?;
    let constant = ScalarMode::Product(vec![
        ScalarMode::Circle { n: 0, parity: Parity::Cos },
        ScalarMode::Circle { n: 0, parity: Parity::Cos },
    ]);
    let mut fields: Vec<EigenfieldIndex> = (0..2)
        .map(|axis| EigenfieldIndex {
            class: HodgeClass::Harm,
            eigenvalue: 0.0,
            field: FieldKind::ScalarTimesAxis {
                scalar: constant.clone(),
                axis,
            },
        })
        .collect();
    for s in base.scalars.iter().filter(|s| s.eigenvalue > 0.0) {
        fields.push(EigenfieldIndex {
            class: HodgeClass::Div,
            eigenvalue: s.eigenvalue,
            field: FieldKind::Gradient(s.mode.clone()),
        });
        fields.push(EigenfieldIndex {
            class: HodgeClass::Curl,
            eigenvalue: s.eigenvalue,
            field: FieldKind::RotatedGradient(s.mode.clone()),
        });
    }
    Ok(Spectrum { fields, ..base })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn circle_basics() {
        let s = circle_spectrum(0);
        assert_eq!(s.scalars.len(), 1);
        assert_eq!(s.fields.len(), 1);
        assert_eq!(s.fields[0].class, HodgeClass::Harm);
        let s = circle_spectrum(3);
        let e2: Vec<f64> = s.scalars.iter().filter(|e| matches!(e.mode, ScalarMode::Circle { n: 2, .. })).map(|e| e.eigenvalue).collect();
        assert_eq!(e2, vec![4.0, 4.0]);
    }

    #[test]
    fn circle_second_derivative_gives_eigenvalue() {
        let mode = ScalarMode::Circle { n: 2, parity: Parity::Cos };
        let t = 0.7;
        let h = 1e-4;
        let f = |a: f64| mode.eval(&ManifoldPoint::circle(a)).unwrap();
        let lap = (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h);
        assert_abs_diff_eq!(lap, -4.0 * f(t), epsilon = 1e-6);
    }

    #[test]
    fn torus_product_counts_match_enumeration() {
        let cap = 20.0;
        let s = torus_spectrum(2, cap).unwrap();
        // Brute force: (n₁, n₂) ∈ Z², every integer lattice point counts once
        // (±n ↔ cos/sin), and each scalar mode carries two axis fields.
        let mut count = 0;
        for n1 in -10i64..=10 {
            for n2 in -10i64..=10 {
                if (n1 * n1 + n2 * n2) as f64 <= cap {
                    count += 1;
                }
            }
        }
        assert_eq!(s.scalars.len(), count);
        assert_eq!(s.fields.len(), 2 * count);
        assert_eq!(s.class_count(HodgeClass::Harm), 2);
        let hs = torus2_hodge_spectrum(cap).unwrap();
        assert_eq!(hs.fields.len(), 2 * count);
        assert_eq!(hs.class_count(HodgeClass::Div), count - 1);
    }

    #[test]
    fn product_eigenvalue_and_errors() {
        let c = circle_spectrum(3);
        let p = product_spectrum(&c, &c, 9.0).unwrap();
        let m = ScalarMode::Product(vec![
            ScalarMode::Circle { n: 1, parity: Parity::Sin },
            ScalarMode::Circle { n: 2, parity: Parity::Cos },
        ]);
        let e = p.scalars.iter().find(|s| s.mode == m).unwrap();
        assert_eq!(e.eigenvalue, 5.0);
        assert!(product_spectrum(&c, &c, 10.0).is_err());
        let empty = Spectrum {
            scalars: vec![],
            fields: vec![],
            ..c.clone()
        };
        assert!(product_spectrum(&c, &empty, 1.0).is_err());
        for w in p.fields.windows(2) {
            assert!(w[0].eigenvalue <= w[1].eigenvalue);
        }
    }

    #[test]
    fn torus_harmonic_fields_are_constant() {
        let s = torus_spectrum(2, 4.0).unwrap();
        let p = ManifoldPoint::torus(&[0.3, 2.2]);
        let q = ManifoldPoint::torus(&[5.0, 1.0]);
        let fp = s.eval_fields(&p).unwrap();
        let fq = s.eval_fields(&q).unwrap();
        for (j, f) in s.fields.iter().enumerate() {
            if f.class == HodgeClass::Harm {
                assert_abs_diff_eq!(fp.column(j).norm(), 1.0 / TAU, epsilon = 1e-15);
                assert_abs_diff_eq!(fp.column(j), fq.column(j));
            }
        }
    }

    #[test]
    fn sphere_spectrum_layout() {
        let s = sphere_spectrum(4);
        assert_eq!(s.scalars.len(), 25);
        assert_eq!(s.class_count(HodgeClass::Div), 24);
        assert_eq!(s.class_count(HodgeClass::Harm), 0);
        for w in s.fields.windows(2) {
            assert!(w[0].eigenvalue <= w[1].eigenvalue);
        }
        let x = ManifoldPoint::Sphere(Vector3::new(0.0, 0.6, 0.8));
        let all = s.eval_fields(&x).unwrap();
        for (j, f) in s.fields.iter().enumerate() {
            let (l, m) = match &f.field {
                FieldKind::Gradient(ScalarMode::Sphere { l, m }) | FieldKind::RotatedGradient(ScalarMode::Sphere { l, m }) => (*l, *m),
                _ => unreachable!(),
            };
            let want = sphere_eigenfield(f.class, l, m, x.as_sphere().unwrap()).unwrap();
            assert_abs_diff_eq!(all.column(j).clone_owned(), want.components, epsilon = 1e-14);
            let generic = eval_field_generic(f, &x).unwrap();
            assert_abs_diff_eq!(generic, want.components, epsilon = 1e-14);
        }
    }

    #[test]
    fn wrong_manifold_rejected() {
        let s = sphere_spectrum(2);
        assert!(s.eval_fields(&ManifoldPoint::circle(0.1)).is_err());
        let c = circle_spectrum(2);
        assert!(c.eval_fields(&ManifoldPoint::Sphere(Vector3::x())).is_err());
    }
}
