//! Scalar and vector Matérn kernels on the sphere and flat tori.
//!
//! Every kernel is a truncated spectral sum σ²/C · Σ Φ_{ν,κ}(λ_n) s_n(x) s_n(x′)ᵀ
//! normalised over the same truncation, so tr k(x, x) averages to σ² exactly.
//! On the sphere the m-sums collapse through the addition theorem; on tori the
//! scalar kernel is summed over the lattice and the T² div/curl kernels go
//! through the explicit eigenfield sum in [`oracle`].

pub mod oracle;
pub mod sphere;
pub mod torus;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix2, Matrix3};

use crate::error::{invalid, Error, Result};
use crate::manifold::{Manifold, ManifoldPoint};
use crate::spectrum::{sphere_eigenvalue, HodgeClass, Spectrum};

pub use oracle::{class_weights, spectral_kernel_oracle};
pub use sphere::{hodge_matern_sphere, projected_matern, scalar_matern_sphere, SpherePair};
pub use torus::torus_matern;

pub const DEFAULT_L_MAX: usize = 30;
pub const DEFAULT_LAMBDA_CAP: f64 = 900.0;

/// Matérn weight Φ_{ν,κ}(λ) on a manifold of dimension `d`.
///
/// (2ν/κ² + λ)^{−ν−d/2} for finite ν and exp(−κ²λ/2) for ν = ∞.
pub fn phi(nu: f64, kappa: f64, lambda: f64, d: usize) -> f64 {
    if nu.is_infinite() {
        (-0.5 * kappa * kappa * lambda).exp()
    } else {
        (2.0 * nu / (kappa * kappa) + lambda).powf(-nu - d as f64 / 2.0)
    }
}

/// (ν, κ, σ², σ_ε²).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaternParams {
    pub nu: f64,
    pub kappa: f64,
    pub variance: f64,
    pub noise_variance: f64,
}

impl MaternParams {
    pub fn new(nu: f64, kappa: f64, variance: f64, noise_variance: f64) -> Result<Self> {
        let p = MaternParams {
            nu,
            kappa,
            variance,
            noise_variance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) {
            return invalid(format!("ν must be positive, got {}", self.nu));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return invalid(format!("κ must be positive and finite, got {}", self.kappa));
        }
        if !(self.variance >= 0.0 && self.variance.is_finite()) {
            return invalid(format!("σ² must be nonnegative, got {}", self.variance));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return invalid(format!("σ_ε² must be nonnegative, got {}", self.noise_variance));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelKind {
    /// Scalar manifold Matérn.
    Scalar,
    /// Full Hodge–Matérn, ½(div + curl) on the sphere.
    HodgeFull,
    /// Pure-divergence (curl-free) part: gradient eigenfields.
    HodgeDiv,
    /// Pure-curl (divergence-free) part: rotated gradient eigenfields.
    HodgeCurl,
    /// Independent (κ, σ²) per Hodge class.
    HodgeCompositional,
    /// Stacked scalar Matérn projected onto tangent planes.
    Projected,
    /// Zero signal, noise only.
    PureNoise,
}

impl KernelKind {
    pub const ALL: [KernelKind; 7] = [
        KernelKind::Scalar,
        KernelKind::HodgeFull,
        KernelKind::HodgeDiv,
        KernelKind::HodgeCurl,
        KernelKind::HodgeCompositional,
        KernelKind::Projected,
        KernelKind::PureNoise,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Scalar => "scalar",
            KernelKind::HodgeFull => "hodge",
            KernelKind::HodgeDiv => "curl-free",
            KernelKind::HodgeCurl => "div-free",
            KernelKind::HodgeCompositional => "compositional",
            KernelKind::Projected => "projected",
            KernelKind::PureNoise => "noise",
        }
    }

    pub fn is_vector(&self) -> bool {
        !matches!(self, KernelKind::Scalar)
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "scalar" => KernelKind::Scalar,
            "hodge" | "hodge-full" | "full" => KernelKind::HodgeFull,
            "curl-free" | "hodge-div" | "div" => KernelKind::HodgeDiv,
            "div-free" | "hodge-curl" | "curl" => KernelKind::HodgeCurl,
            "compositional" | "hodge-compositional" => KernelKind::HodgeCompositional,
            "projected" => KernelKind::Projected,
            "noise" | "pure-noise" => KernelKind::PureNoise,
            other => return invalid(format!("unknown kernel kind `{other}`")),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Truncation {
    /// Sphere levels ℓ ≤ ℓ_max.
    Level(usize),
    /// Eigenvalues λ ≤ cap.
    EigenvalueCap(f64),
}

impl Truncation {
    pub fn default_for(m: Manifold) -> Self {
        match m {
            Manifold::Sphere => Truncation::Level(DEFAULT_L_MAX),
            _ => Truncation::EigenvalueCap(DEFAULT_LAMBDA_CAP),
        }
    }

    /// Largest eigenvalue kept.
    pub fn lambda_bound(&self) -> f64 {
        match self {
            Truncation::Level(l) => sphere_eigenvalue(*l),
            Truncation::EigenvalueCap(c) => *c,
        }
    }

    pub fn sphere_level(&self) -> usize {
        match self {
            Truncation::Level(l) => *l,
            Truncation::EigenvalueCap(c) => ((0.25 + c.max(0.0)).sqrt() - 0.5 + 1e-9).floor() as usize,
        }
    }
}

/// Length scale and variance of one part of a compositional kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartParams {
    pub kappa: f64,
    pub variance: f64,
}

/// Per-class parameters of a Hodge-compositional kernel (ν is shared).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompositionalParts {
    pub div: PartParams,
    pub curl: PartParams,
    /// Variance of the harmonic part; κ is irrelevant there since λ = 0.
    pub harm_variance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// For compositional kernels `kappa`/`variance` mirror the div part and the
    /// total variance; the parts themselves live in `parts`.
    pub params: MaternParams,
    pub parts: Option<CompositionalParts>,
    /// Coregionalisation matrix of projected kernels; `None` means identity.
    pub coregionalization: Option<Matrix3<f64>>,
    pub manifold: Manifold,
    pub truncation: Truncation,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, params: MaternParams, manifold: Manifold) -> Self {
        KernelSpec {
            kind,
            params,
            parts: None,
            coregionalization: None,
            manifold,
            truncation: Truncation::default_for(manifold),
        }
    }

    pub fn compositional(nu: f64, parts: CompositionalParts, noise_variance: f64, manifold: Manifold) -> Self {
        let total = parts.div.variance + parts.curl.variance + parts.harm_variance;
        KernelSpec {
            kind: KernelKind::HodgeCompositional,
            params: MaternParams {
                nu,
                kappa: parts.div.kappa,
                variance: total,
                noise_variance,
            },
            parts: Some(parts),
            coregionalization: None,
            manifold,
            truncation: Truncation::default_for(manifold),
        }
    }

    pub fn with_truncation(mut self, t: Truncation) -> Self {
        self.truncation = t;
        self
    }

    pub fn with_coregionalization(mut self, a: Matrix3<f64>) -> Self {
        self.coregionalization = Some(a);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        match (self.kind, self.manifold) {
            (KernelKind::Projected, m) if m != Manifold::Sphere => {
                return invalid("projected kernels need the embedded sphere")
            }
            (KernelKind::HodgeDiv | KernelKind::HodgeCurl | KernelKind::HodgeCompositional, Manifold::Circle) => {
                return invalid("Hodge class kernels are only available on surfaces")
            }
            (KernelKind::HodgeDiv | KernelKind::HodgeCurl | KernelKind::HodgeCompositional, Manifold::Torus(d))
                if d != 2 =>
            {
                return invalid("Hodge class kernels are only available on surfaces")
            }
            (_, Manifold::Torus(0)) => return invalid("torus dimension must be at least 1"),
            _ => {}
        }
        if self.kind == KernelKind::HodgeCompositional {
            let parts = self.parts.ok_or_else(|| Error::InvalidInput("compositional kernel without parts".into()))?;
            for p in [parts.div, parts.curl] {
                if !(p.kappa > 0.0 && p.kappa.is_finite() && p.variance >= 0.0 && p.variance.is_finite()) {
                    return invalid(format!("bad compositional part {p:?}"));
                }
            }
            if !(parts.harm_variance >= 0.0) {
                return invalid("harmonic variance must be nonnegative");
            }
            if self.manifold == Manifold::Sphere && parts.harm_variance != 0.0 {
                return invalid("the sphere has no harmonic fields; harmonic variance must be 0");
            }
        }
        if let Truncation::Level(_) = self.truncation {
            if self.manifold != Manifold::Sphere {
                return invalid("level truncation applies to the sphere only");
            }
        }
        Ok(())
    }
}

/// Eigenfield classes summed by a single-class kernel kind.
pub fn kind_classes(kind: KernelKind, manifold: Manifold) -> Vec<HodgeClass> {
    match kind {
        KernelKind::HodgeDiv => vec![HodgeClass::Div],
        KernelKind::HodgeCurl => vec![HodgeClass::Curl],
        KernelKind::HodgeFull => match manifold {
            Manifold::Sphere => vec![HodgeClass::Div, HodgeClass::Curl],
            _ => vec![HodgeClass::Div, HodgeClass::Curl, HodgeClass::Harm, HodgeClass::Mixed],
        },
        _ => Vec::new(),
    }
}

/// C = (1/vol M) Σ Φ(λ_n) over the entries of `spectrum` the spec sums over,
/// restricted to the spec's truncation.
///
/// Scalar and projected kernels sum over scalar eigenfunctions; Hodge kinds over
/// eigenfields of their class(es).
pub fn normalization(spec: &KernelSpec, spectrum: &Spectrum) -> Result<f64> {
    let bound = spec.truncation.lambda_bound();
    if spectrum.complete_to + 1e-9 < bound {
        return invalid(format!("spectrum complete to {} but truncation needs {bound}", spectrum.complete_to));
    }
    let p = &spec.params;
    let d = spectrum.dim();
    let sum: f64 = match spec.kind {
        KernelKind::Scalar | KernelKind::Projected => spectrum
            .scalars
            .iter()
            .filter(|s| s.eigenvalue <= bound + 1e-9)
            .map(|s| phi(p.nu, p.kappa, s.eigenvalue, d))
            .sum(),
        KernelKind::HodgeFull | KernelKind::HodgeDiv | KernelKind::HodgeCurl => {
            let classes = kind_classes(spec.kind, spectrum.manifold);
            let mut any = false;
            let s = spectrum
                .fields
                .iter()
                .filter(|f| f.eigenvalue <= bound + 1e-9 && classes.contains(&f.class))
                .inspect(|_| any = true)
                .map(|f| phi(p.nu, p.kappa, f.eigenvalue, d))
                .sum();
            if !any {
                return invalid(format!("no eigenfields of class {classes:?} in the spectrum"));
            }
            s
        }
        KernelKind::HodgeCompositional => return invalid("compositional kernels normalise each part separately"),
        KernelKind::PureNoise => return invalid("the noise kernel has no normalisation constant"),
    };
    Ok(sum / spectrum.volume)
}

/// A kernel with its normalisation and series coefficients precomputed.
#[derive(Clone, Debug)]
pub struct Kernel {
    spec: KernelSpec,
    eval: Evaluator,
}

#[derive(Clone, Debug)]
enum Evaluator {
    Noise,
    Sphere(sphere::SphereSeries),
    TorusLattice(torus::LatticeSeries),
    Spectral { spectrum: Arc<Spectrum>, weights: Vec<f64> },
}

impl Kernel {
    pub fn new(spec: KernelSpec) -> Result<Self> {
        spec.validate()?;
        let eval = match (spec.kind, spec.manifold) {
            (KernelKind::PureNoise, _) => Evaluator::Noise,
            (_, Manifold::Sphere) => Evaluator::Sphere(sphere::SphereSeries::new(&spec)?),
            (KernelKind::Scalar | KernelKind::HodgeFull, _) => {
                Evaluator::TorusLattice(torus::LatticeSeries::new(&spec)?)
            }
            _ => {
                let (spectrum, weights) = torus::classified_weights(&spec)?;
                Evaluator::Spectral {
                    spectrum: Arc::new(spectrum),
                    weights,
                }
            }
        };
        Ok(Kernel { spec, eval })
    }

    /// Builds a spectral-sum kernel over an already computed eigenfield basis.
    ///
    /// Only for kinds that [`Kernel::new`] evaluates as explicit sums; `spectrum`
    /// must be the basis [`Kernel::spectral`] returns for the same manifold and truncation.
    pub fn with_spectrum(spec: KernelSpec, spectrum: Arc<Spectrum>) -> Result<Self> {
        spec.validate()?;
        let spectral = !matches!(spec.kind, KernelKind::PureNoise | KernelKind::Scalar | KernelKind::HodgeFull)
            && spec.manifold != Manifold::Sphere;
        if !spectral || spectrum.manifold != spec.manifold {
            return invalid(format!("{} on {} is not a spectral-sum kernel", spec.kind, spec.manifold));
        }
        let weights = oracle::class_weights(&spec, &spectrum)?;
        Ok(Kernel {
            spec,
            eval: Evaluator::Spectral { spectrum, weights },
        })
    }

    /// Eigenfield basis and weights when the kernel is an explicit spectral sum.
    pub fn spectral(&self) -> Option<(&Arc<Spectrum>, &[f64])> {
        match &self.eval {
            Evaluator::Spectral { spectrum, weights } => Some((spectrum, weights)),
            _ => None,
        }
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn manifold(&self) -> Manifold {
        self.spec.manifold
    }

    /// Rows/columns of [`Kernel::eval`]: 1 for scalar kernels, else the ambient dimension.
    pub fn output_dim(&self) -> usize {
        if self.spec.kind == KernelKind::Scalar {
            1
        } else {
            self.spec.manifold.ambient_dim()
        }
    }

    /// k(x, x′) as a matrix in ambient (sphere) or global-frame (torus) coordinates.
    pub fn eval(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<DMatrix<f64>> {
        match &self.eval {
            Evaluator::Noise => Ok(DMatrix::zeros(self.output_dim(), self.output_dim())),
            Evaluator::Sphere(s) => {
                let (a, b) = (x.as_sphere()?, y.as_sphere()?);
                if self.spec.kind == KernelKind::Scalar {
                    return Ok(DMatrix::from_element(1, 1, s.scalar(a, b)));
                }
                let m = s.vector(a, b);
                Ok(DMatrix::from_column_slice(3, 3, m.as_slice()))
            }
            Evaluator::TorusLattice(l) => l.eval(x, y),
            Evaluator::Spectral { spectrum, weights } => {
                oracle::spectral_kernel_oracle(|i, _| weights[i], spectrum, x, y)
            }
        }
    }

    /// Scalar kernel value; errors for vector kinds.
    pub fn eval_scalar(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<f64> {
        if self.spec.kind != KernelKind::Scalar {
            return invalid("eval_scalar on a vector kernel");
        }
        Ok(self.eval(x, y)?[(0, 0)])
    }

    /// 2×2 frame block on the sphere from cached pair geometry.
    pub fn sphere_block(&self, pair: &SpherePair) -> Result<Matrix2<f64>> {
        match &self.eval {
            Evaluator::Noise => Ok(Matrix2::zeros()),
            Evaluator::Sphere(s) => Ok(s.block(pair)),
            _ => invalid("sphere_block on a non-sphere kernel"),
        }
    }

    /// Largest ℓ needed in cached Legendre tables.
    pub fn sphere_level(&self) -> usize {
        match &self.eval {
            Evaluator::Sphere(s) => s.l_max(),
            _ => 0,
        }
    }

    pub fn is_sphere_series(&self) -> bool {
        matches!(self.eval, Evaluator::Sphere(_) | Evaluator::Noise) && self.spec.manifold == Manifold::Sphere
    }
}
