//! Vector GP regression in tangent-frame coordinates.
//!
//! Every tangent vector is expressed in an orthonormal frame at its base point,
//! so a dataset of n vectors on a surface becomes a 2n-dimensional Gaussian.
//! Observation noise is isotropic in those frame coordinates.

pub mod fit;
pub mod sample;

use std::f64::consts::PI;

use log::debug;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix3, Matrix3x2, Vector3};

use crate::error::{invalid, Error, Result};
use crate::kernels::{Kernel, KernelKind, SpherePair};
use crate::manifold::{frame_matrix, Manifold, ManifoldPoint, TangentVector};
use crate::par;

pub use fit::{fit, FitConfig, FitResult};
pub use sample::{sample_posterior, sample_prior, PriorSample};

/// First jitter tried when the noise variance is zero, relative to σ².
pub const JITTER_START: f64 = 1e-10;
/// Largest jitter before conditioning gives up, relative to σ².
pub const JITTER_MAX: f64 = 1e-4;

/// Observed tangent vectors with their base points.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub points: Vec<ManifoldPoint>,
    pub observations: Vec<TangentVector>,
    /// Factor already applied to the observations; 1 when unscaled.
    pub scale: f64,
}

impl Dataset {
    pub fn new(observations: Vec<TangentVector>) -> Result<Self> {
        if let Some(first) = observations.first() {
            let m = first.base.manifold();
            if observations.iter().any(|o| o.base.manifold() != m) {
                return invalid("observations live on different manifolds");
            }
        }
        Ok(Dataset {
            points: observations.iter().map(|o| o.base.clone()).collect(),
            observations,
            scale: 1.0,
        })
    }

    pub fn sphere(points: &[Vector3<f64>], vectors: &[Vector3<f64>]) -> Result<Self> {
        if points.len() != vectors.len() {
            return invalid(format!("{} points but {} vectors", points.len(), vectors.len()));
        }
        let obs = points
            .iter()
            .zip(vectors)
            .map(|(x, v)| TangentVector::sphere(*x, *v))
            .collect::<Result<Vec<_>>>()?;
        Self::new(obs)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn manifold(&self) -> Option<Manifold> {
        self.points.first().map(ManifoldPoint::manifold)
    }

    /// Observations stacked as Bᵢᵀ vᵢ.
    pub fn frame_values(&self, frames: &[DMatrix<f64>]) -> DVector<f64> {
        let q = frames.first().map_or(0, |b| b.ncols());
        let mut y = DVector::zeros(q * self.len());
        for (i, (o, b)) in self.observations.iter().zip(frames).enumerate() {
            y.rows_mut(q * i, q).copy_from(&(b.transpose() * &o.components));
        }
        y
    }

    /// Same data with every observation multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Dataset {
            points: self.points.clone(),
            observations: self
                .observations
                .iter()
                .map(|o| TangentVector {
                    base: o.base.clone(),
                    components: &o.components * s,
                })
                .collect(),
            scale: self.scale * s,
        }
    }
}

/// Default frames: east/north on the sphere, the global basis on tori.
pub fn frames(points: &[ManifoldPoint]) -> Vec<DMatrix<f64>> {
    points.iter().map(frame_matrix).collect()
}

fn intrinsic_dim(kernel: &Kernel) -> usize {
    kernel.manifold().dim()
}

fn check_vector_kernel(kernel: &Kernel) -> Result<()> {
    if kernel.spec().kind == KernelKind::Scalar {
        return invalid("vector regression needs a vector kernel");
    }
    Ok(())
}

fn to3x2(b: &DMatrix<f64>) -> Result<Matrix3x2<f64>> {
    if b.shape() != (3, 2) {
        return invalid(format!("sphere frames must be 3×2, got {:?}", b.shape()));
    }
    Ok(Matrix3x2::from_column_slice(b.as_slice()))
}

/// Bₐᵀ k(a, b) B_b.
pub fn cross_block(
    kernel: &Kernel,
    a: &ManifoldPoint,
    ba: &DMatrix<f64>,
    b: &ManifoldPoint,
    bb: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if kernel.is_sphere_series() {
        let pair = SpherePair::new(kernel.sphere_level(), a.as_sphere()?, to3x2(ba)?, b.as_sphere()?, to3x2(bb)?);
        let m = kernel.sphere_block(&pair)?;
        return Ok(DMatrix::from_column_slice(2, 2, m.as_slice()));
    }
    Ok(ba.transpose() * kernel.eval(a, b)? * bb)
}

fn upper_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect()
}

fn assemble(n: usize, q: usize, pairs: &[(usize, usize)], blocks: Vec<DMatrix<f64>>) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(q * n, q * n);
    for (&(i, j), b) in pairs.iter().zip(blocks) {
        g.view_mut((q * i, q * j), (q, q)).copy_from(&b);
        if i != j {
            g.view_mut((q * j, q * i), (q, q)).copy_from(&b.transpose());
        }
    }
    g
}

/// Gram matrix with 2×2 (d×d on T^d) frame blocks Bᵢᵀ k(xᵢ, xⱼ) Bⱼ.
pub fn gram(kernel: &Kernel, points: &[ManifoldPoint], frames: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    check_vector_kernel(kernel)?;
    if points.len() != frames.len() {
        return invalid("one frame per point required");
    }
    let pairs = upper_pairs(points.len());
    let blocks = par::map_slice(&pairs, |&(i, j)| cross_block(kernel, &points[i], &frames[i], &points[j], &frames[j]))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(points.len(), intrinsic_dim(kernel), &pairs, blocks))
}

/// Pair geometry of a fixed sphere point set, reused across hyperparameters.
#[derive(Clone, Debug)]
pub struct PairCache {
    n: usize,
    l_max: usize,
    pairs: Vec<(usize, usize)>,
    geometry: Vec<SpherePair>,
}

impl PairCache {
    pub fn new(points: &[ManifoldPoint], frames: &[DMatrix<f64>], l_max: usize) -> Result<Self> {
        let pairs = upper_pairs(points.len());
        let geometry = par::map_slice(&pairs, |&(i, j)| -> Result<SpherePair> {
            Ok(SpherePair::new(
                l_max,
                points[i].as_sphere()?,
                to3x2(&frames[i])?,
                points[j].as_sphere()?,
                to3x2(&frames[j])?,
            ))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(PairCache {
            n: points.len(),
            l_max,
            pairs,
            geometry,
        })
    }

    pub fn gram(&self, kernel: &Kernel) -> Result<DMatrix<f64>> {
        check_vector_kernel(kernel)?;
        if !kernel.is_sphere_series() || kernel.sphere_level() > self.l_max {
            return invalid("kernel does not fit this pair cache");
        }
        let blocks = self
            .geometry
            .iter()
            .map(|p| kernel.sphere_block(p).map(|m| DMatrix::from_column_slice(2, 2, m.as_slice())))
            .collect::<Result<Vec<_>>>()?;
        Ok(assemble(self.n, 2, &self.pairs, blocks))
    }
}

/// Frame-projected eigenfield values Bᵢᵀ s_n(xᵢ) of a fixed point set, so
/// spectral-sum Gram matrices become Φ diag(w) Φᵀ.
#[derive(Clone, Debug)]
pub struct FieldCache {
    phi: DMatrix<f64>,
}

impl FieldCache {
    pub fn new(spectrum: &crate::spectrum::Spectrum, points: &[ManifoldPoint], frames: &[DMatrix<f64>]) -> Result<Self> {
        if points.len() != frames.len() {
            return invalid("one frame per point required");
        }
        let rows = par::map_range(points.len(), |i| -> Result<DMatrix<f64>> {
            Ok(frames[i].transpose() * spectrum.eval_fields(&points[i])?)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let q = rows.first().map_or(0, |r| r.nrows());
        let mut phi = DMatrix::zeros(q * rows.len(), spectrum.fields.len());
        for (i, r) in rows.iter().enumerate() {
            phi.rows_mut(q * i, q).copy_from(r);
        }
        Ok(FieldCache { phi })
    }

    pub fn gram(&self, kernel: &Kernel) -> Result<DMatrix<f64>> {
        let (_, w) = kernel.spectral().ok_or_else(|| Error::InvalidInput("kernel is not a spectral sum".into()))?;
        if w.len() != self.phi.ncols() {
            return invalid("kernel does not fit this field cache");
        }
        let mut scaled = self.phi.clone();
        for (j, &wj) in w.iter().enumerate() {
            scaled.column_mut(j).scale_mut(wj);
        }
        Ok(&scaled * self.phi.transpose())
    }
}

/// Cholesky factor of a covariance plus the jitter that made it succeed.
#[derive(Clone, Debug)]
pub struct Factor {
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

/// Factorises `k`, adding jitter from `start` (×10 per failure) up to
/// [`JITTER_MAX`]·`scale`.
pub(crate) fn factorize(k: DMatrix<f64>, start: f64, scale: f64) -> Result<Factor> {
    let limit = JITTER_MAX * scale * (1.0 + 1e-9);
    let mut jitter = start;
    loop {
        let mut m = k.clone();
        if jitter > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
        }
        if let Some(chol) = Cholesky::new(m) {
            if jitter > start {
                debug!("factorisation needed jitter {jitter:.1e}");
            }
            return Ok(Factor { chol, jitter });
        }
        let next = if jitter == 0.0 { JITTER_START * scale } else { jitter * 10.0 };
        if next > limit {
            let min_diag = k.diagonal().min();
            return Err(Error::Numerical(format!(
                "covariance of size {} not positive definite after jitter {jitter:.1e} (min diagonal {min_diag:.3e})",
                k.nrows()
            )));
        }
        jitter = next;
    }
}

/// Jitter scale and starting jitter for a kernel with given noise.
fn jitter_policy(kernel: &Kernel) -> (f64, f64) {
    let p = kernel.spec().params;
    let scale = if p.variance > 0.0 { p.variance } else { p.noise_variance.max(1.0) };
    let start = if p.noise_variance > 0.0 { 0.0 } else { JITTER_START * scale };
    (start, scale)
}

/// A GP conditioned on data.
#[derive(Clone, Debug)]
pub struct PosteriorModel {
    kernel: Kernel,
    points: Vec<ManifoldPoint>,
    frames: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    lower: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
}

/// Conditions `kernel` on `data` with noise σ_ε² from the kernel spec.
pub fn condition(kernel: &Kernel, data: &Dataset) -> Result<PosteriorModel> {
    check_vector_kernel(kernel)?;
    let fr = frames(&data.points);
    let k = gram(kernel, &data.points, &fr)?;
    condition_with_gram(kernel, data, fr, k)
}

pub(crate) fn condition_with_gram(
    kernel: &Kernel,
    data: &Dataset,
    frames: Vec<DMatrix<f64>>,
    mut k: DMatrix<f64>,
) -> Result<PosteriorModel> {
    if let Some(m) = data.manifold() {
        let km = kernel.manifold();
        if m != km && !matches!((m, km), (Manifold::Torus(1), Manifold::Circle)) {
            return invalid(format!("data on {m} but kernel on {km}"));
        }
    }
    let y = data.frame_values(&frames);
    let noise = kernel.spec().params.noise_variance;
    for i in 0..k.nrows() {
        k[(i, i)] += noise;
    }
    let (start, scale) = jitter_policy(kernel);
    let factor = factorize(k, start, scale)?;
    let alpha = factor.chol.solve(&y);
    Ok(PosteriorModel {
        kernel: kernel.clone(),
        points: data.points.clone(),
        frames,
        lower: factor.chol.l(),
        y,
        alpha,
        jitter: factor.jitter,
    })
}

/// Posterior marginal at one query point, in that point's frame.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub point: ManifoldPoint,
    pub frame: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Prediction {
    /// Mean as an ambient (sphere) or global-frame (torus) vector.
    pub fn mean_vector(&self) -> DVector<f64> {
        &self.frame * &self.mean
    }

    pub fn mean_tangent(&self) -> TangentVector {
        TangentVector {
            base: self.point.clone(),
            components: self.mean_vector(),
        }
    }

    /// √tr Σ of the latent posterior covariance.
    pub fn std_trace(&self) -> f64 {
        self.cov.trace().max(0.0).sqrt()
    }
}

impl PosteriorModel {
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// K(q, X) for one query with frame `bq`.
    fn cross(&self, query: &ManifoldPoint, bq: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let q = intrinsic_dim(&self.kernel);
        let mut out = DMatrix::zeros(q, q * self.points.len());
        for (j, (p, b)) in self.points.iter().zip(&self.frames).enumerate() {
            out.view_mut((0, q * j), (q, q)).copy_from(&cross_block(&self.kernel, query, bq, p, b)?);
        }
        Ok(out)
    }

    /// L⁻¹ K(X, Q) for a set of queries.
    fn whitened(&self, kxq: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if self.points.is_empty() {
            return Ok(DMatrix::zeros(0, kxq.ncols()));
        }
        self.lower
            .solve_lower_triangular(kxq)
            .ok_or_else(|| Error::Numerical("singular triangular factor".into()))
    }

    fn predict_one(&self, query: &ManifoldPoint) -> Result<Prediction> {
        let bq = frame_matrix(query);
        let kqx = self.cross(query, &bq)?;
        let prior = cross_block(&self.kernel, query, &bq, query, &bq)?;
        let mean = &kqx * &self.alpha;
        let v = self.whitened(&kqx.transpose())?;
        let cov = prior - v.transpose() * v;
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(Prediction {
            point: query.clone(),
            frame: bq,
            mean,
            cov,
        })
    }

    /// Joint posterior mean and covariance over several queries in their frames.
    pub(crate) fn joint(&self, queries: &[ManifoldPoint]) -> Result<(Vec<DMatrix<f64>>, DVector<f64>, DMatrix<f64>)> {
        let q = intrinsic_dim(&self.kernel);
        let fq = frames(queries);
        let prior = gram(&self.kernel, queries, &fq)?;
        let mut kqx = DMatrix::zeros(q * queries.len(), q * self.points.len());
        for (i, (p, b)) in queries.iter().zip(&fq).enumerate() {
            kqx.view_mut((q * i, 0), (q, q * self.points.len())).copy_from(&self.cross(p, b)?);
        }
        let mean = &kqx * &self.alpha;
        let v = self.whitened(&kqx.transpose())?;
        let cov = prior - v.transpose() * v;
        Ok((fq, mean, (&cov + cov.transpose()) * 0.5))
    }
}

/// Posterior mean and marginal covariance at each query point.
pub fn predict(model: &PosteriorModel, queries: &[ManifoldPoint]) -> Result<Vec<Prediction>> {
    par::map_slice(queries, |q| model.predict_one(q)).into_iter().collect()
}

/// log N(y | 0, K + σ_ε² I) in frame coordinates.
pub fn log_marginal_likelihood(kernel: &Kernel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return invalid("log marginal likelihood of an empty dataset");
    }
    Ok(model_log_likelihood(&condition(kernel, data)?))
}

pub(crate) fn model_log_likelihood(model: &PosteriorModel) -> f64 {
    let n = model.y.len() as f64;
    let logdet: f64 = model.lower.diagonal().iter().map(|d| d.ln()).sum();
    -0.5 * model.y.dot(&model.alpha) - logdet - 0.5 * n * (2.0 * PI).ln()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    pub pnll: f64,
}

/// MSE of the means and mean negative log density of each truth under
/// N(mean, cov + σ_ε² I) in the query frame.
pub fn metrics(predictions: &[Prediction], truths: &[TangentVector], noise_variance: f64) -> Result<Metrics> {
    if predictions.len() != truths.len() {
        return invalid(format!("{} predictions but {} truths", predictions.len(), truths.len()));
    }
    if predictions.is_empty() {
        return invalid("no predictions to score");
    }
    let mut mse = 0.0;
    let mut pnll = 0.0;
    for (p, t) in predictions.iter().zip(truths) {
        let truth = p.frame.transpose() * &t.components;
        let r = truth - &p.mean;
        mse += r.norm_squared();
        let q = r.len();
        let mut s = p.cov.clone();
        for i in 0..q {
            s[(i, i)] += noise_variance;
        }
        let chol = Cholesky::new(s).ok_or_else(|| Error::Numerical("singular predictive covariance".into()))?;
        let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        pnll += 0.5 * r.dot(&chol.solve(&r)) + 0.5 * logdet + 0.5 * q as f64 * (2.0 * PI).ln();
    }
    let n = predictions.len() as f64;
    Ok(Metrics {
        mse: mse / n,
        pnll: pnll / n,
    })
}

/// Posterior means computed in ambient 3-d coordinates on the sphere.
///
/// Uses K + σ_ε² blockdiag(P_x) + blockdiag(x xᵀ): the normal directions carry
/// unit variance and no signal, so they decouple from the tangential solve.
pub fn ambient_posterior_mean(kernel: &Kernel, data: &Dataset, queries: &[Vector3<f64>]) -> Result<Vec<Vector3<f64>>> {
    check_vector_kernel(kernel)?;
    if kernel.manifold() != Manifold::Sphere {
        return invalid("ambient coordinates are only used on the sphere");
    }
    let xs: Vec<Vector3<f64>> = data.points.iter().map(|p| p.as_sphere().copied()).collect::<Result<_>>()?;
    let n = xs.len();
    let noise = kernel.spec().params.noise_variance;
    let mut k = DMatrix::zeros(3 * n, 3 * n);
    for i in 0..n {
        for j in 0..n {
            let m = kernel.eval(&data.points[i], &data.points[j])?;
            k.view_mut((3 * i, 3 * j), (3, 3)).copy_from(&m);
        }
        let x = xs[i];
        let normal: Matrix3<f64> = x * x.transpose();
        let tangential = Matrix3::identity() - normal;
        let mut d = k.fixed_view_mut::<3, 3>(3 * i, 3 * i);
        d += tangential * noise + normal;
    }
    let mut y = DVector::zeros(3 * n);
    for (i, o) in data.observations.iter().enumerate() {
        y.rows_mut(3 * i, 3).copy_from(&o.components);
    }
    let (start, scale) = jitter_policy(kernel);
    let alpha = factorize(k, start, scale)?.chol.solve(&y);
    queries
        .iter()
        .map(|q| {
            let qp = ManifoldPoint::Sphere(*q);
            let mut m = Vector3::zeros();
            for (i, p) in data.points.iter().enumerate() {
                let kb = kernel.eval(&qp, p)?;
                m += Matrix3::from_column_slice(kb.as_slice()) * alpha.fixed_rows::<3>(3 * i);
            }
            Ok(m)
        })
        .collect()
}
