//! Experiment harness: data sources, train/test protocols, fitting sweeps and
//! CSV output.

pub mod config;
pub mod io;

use std::path::Path;

use log::{info, warn};
use nalgebra::Vector3;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::gp::sample::{sample_prior, spectrum_for};
use crate::gp::{condition, fit, metrics, predict, Dataset, FitConfig, Metrics};
use crate::kernels::{CompositionalParts, KernelKind, KernelSpec, MaternParams, PartParams, Truncation};
use crate::manifold::{lonlat_to_point, sample_hemisphere, sample_uniform, Hemisphere, Manifold, ManifoldPoint, TangentVector};
use crate::par;

pub use config::{nu_label, parse_nu, parse_seeds, ExperimentConfig, FieldSource, GridMode, Protocol};
pub use io::{emit_csv, ingest_csv, lonlat_grid, write_grid, Ingested};

/// Library version stamped on every results row.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Divides observations by their mean norm so the training set has unit mean norm.
///
/// Returns the factor `s` and the scaled copy; predictions divide by `s` to undo it.
pub fn normalize_dataset(train: &Dataset) -> Result<(f64, Dataset)> {
    if train.is_empty() {
        return invalid("cannot normalise an empty dataset");
    }
    let mean = train.observations.iter().map(TangentVector::norm).sum::<f64>() / train.len() as f64;
    if !(mean > 0.0 && mean.is_finite()) {
        return invalid("observations are all zero");
    }
    let s = 1.0 / mean;
    Ok((s, train.scaled(s)))
}

/// The rotation field (x, y, z) ↦ (y, −x, 0).
pub fn rotation_field(x: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(x.y, -x.x, 0.0)
}

/// Truncation used for a given manifold in a config.
fn truncation(m: Manifold, lmax: usize, lambda_cap: f64) -> Truncation {
    match m {
        Manifold::Sphere => Truncation::Level(lmax),
        _ => Truncation::EigenvalueCap(lambda_cap),
    }
}

/// Unit-variance noiseless kernel spec used to draw ground-truth fields.
pub fn field_spec(kind: KernelKind, nu: f64, kappa: f64, manifold: Manifold, t: Truncation) -> Result<KernelSpec> {
    let spec = KernelSpec::new(kind, MaternParams::new(nu, kappa, 1.0, 0.0)?, manifold).with_truncation(t);
    spec.validate()?;
    Ok(spec)
}

/// Evaluates a ground-truth field at `points`.
///
/// `Sample` draws one prior field from a generator seeded with `seed`, using the
/// default truncation for the points' manifold.
pub fn synthetic_field(source: &FieldSource, points: &[ManifoldPoint], seed: u64) -> Result<Dataset> {
    let Some(first) = points.first() else {
        return invalid("no points to evaluate the field at");
    };
    let t = Truncation::default_for(first.manifold());
    synthetic_field_truncated(source, points, seed, t)
}

/// [`synthetic_field`] with an explicit truncation for kernel samples.
pub fn synthetic_field_truncated(source: &FieldSource, points: &[ManifoldPoint], seed: u64, t: Truncation) -> Result<Dataset> {
    let Some(first) = points.first() else {
        return invalid("no points to evaluate the field at");
    };
    let m = first.manifold();
    let obs = match source {
        FieldSource::Rotation => points
            .iter()
            .map(|p| {
                let x = p.as_sphere()?;
                TangentVector::sphere(*x, rotation_field(x))
            })
            .collect::<Result<Vec<_>>>()?,
        FieldSource::Sample { kind, nu, kappa } => {
            let spec = field_spec(*kind, *nu, *kappa, m, t)?;
            let spectrum = spectrum_for(&spec)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = sample_prior(&spec, &spectrum, &mut rng)?;
            points.iter().map(|p| f.eval_tangent(p)).collect::<Result<Vec<_>>>()?
        }
    };
    Dataset::new(obs)
}

/// Train and test data for one seed, already normalised by the training mean norm.
#[derive(Clone, Debug)]
pub struct SeedData {
    pub train: Dataset,
    pub test: Dataset,
    pub scale: f64,
}

fn sphere_points(xs: Vec<Vector3<f64>>) -> Vec<ManifoldPoint> {
    xs.into_iter().map(ManifoldPoint::Sphere).collect()
}

fn on_longitude(lon: f64, target: f64) -> bool {
    let d = (lon - target).rem_euclid(360.0);
    d.min(360.0 - d) < 1e-6
}

fn meridian_points(longitudes: &[f64], resolution: f64) -> Result<Vec<ManifoldPoint>> {
    let n = (180.0 / resolution).round() as usize;
    let mut out = Vec::new();
    for &lon in longitudes {
        for i in 0..=n {
            let lat = -90.0 + i as f64 * resolution;
            if lat.abs() > io::MAX_INGEST_LATITUDE_DEG {
                continue;
            }
            out.push(ManifoldPoint::Sphere(lonlat_to_point(lon, lat)?));
        }
    }
    Ok(out)
}

fn subset(data: &Dataset, idx: &[usize]) -> Result<Dataset> {
    Dataset::new(idx.iter().map(|&i| data.observations[i].clone()).collect())
}

/// Builds the train/test split for one seed.
///
/// Point locations come from stream 1 of the seed, or of seed 0 when the
/// config keeps points fixed; kernel-sample fields use stream 0 of the seed.
pub fn seed_data(cfg: &ExperimentConfig, seed: u64) -> Result<SeedData> {
    let mut rng = ChaCha8Rng::seed_from_u64(if cfg.resamples_points() { seed } else { 0 });
    rng.set_stream(1);
    let t = truncation(cfg.manifold, cfg.lmax, cfg.lambda_cap);
    let synth = |train: Vec<ManifoldPoint>, test: Vec<ManifoldPoint>| -> Result<(Dataset, Dataset)> {
        let n = train.len();
        let all: Vec<ManifoldPoint> = train.into_iter().chain(test).collect();
        let d = synthetic_field_truncated(&cfg.field, &all, seed, t)?;
        let idx: Vec<usize> = (0..all.len()).collect();
        Ok((subset(&d, &idx[..n])?, subset(&d, &idx[n..])?))
    };
    let (train, test) = match &cfg.protocol {
        Protocol::HemisphereSplit { n_train, n_test } => {
            let tr = sphere_points(sample_hemisphere(Hemisphere::North, *n_train, &mut rng));
            let te = sphere_points(sample_hemisphere(Hemisphere::South, *n_test, &mut rng));
            synth(tr, te)?
        }
        Protocol::Uniform { n_train, n_test } => {
            let tr = sample_uniform(cfg.manifold, *n_train, &mut rng);
            let te = sample_uniform(cfg.manifold, *n_test, &mut rng);
            synth(tr, te)?
        }
        Protocol::GreatCircle {
            longitudes,
            stride,
            resolution_deg,
            n_test,
            source,
            test,
        } => match source {
            None => {
                let tr: Vec<ManifoldPoint> = meridian_points(longitudes, *resolution_deg)?.into_iter().step_by(*stride).collect();
                let te = sample_uniform(Manifold::Sphere, *n_test, &mut rng);
                synth(tr, te)?
            }
            Some(path) => {
                let all = ingest_csv(path)?.dataset;
                let mut on = Vec::new();
                let mut off = Vec::new();
                for (i, p) in all.points.iter().enumerate() {
                    let (lon, _) = crate::manifold::point_to_lonlat(p.as_sphere()?);
                    if longitudes.iter().any(|&l| on_longitude(lon, l)) {
                        on.push(i);
                    } else {
                        off.push(i);
                    }
                }
                let picked: Vec<usize> = on.into_iter().step_by(*stride).collect();
                if picked.is_empty() {
                    return invalid(format!("no rows of {} lie on the requested longitudes", path.display()));
                }
                let train = subset(&all, &picked)?;
                let test = match test {
                    Some(tp) => ingest_csv(tp)?.dataset,
                    None => {
                        if off.is_empty() {
                            return invalid("no rows left for testing");
                        }
                        let k = (*n_test).min(off.len());
                        let mut chosen: Vec<usize> = index::sample(&mut rng, off.len(), k).into_iter().map(|j| off[j]).collect();
                        chosen.sort_unstable();
                        subset(&all, &chosen)?
                    }
                };
                (train, test)
            }
        },
        Protocol::File { train, test } => (ingest_csv(train)?.dataset, ingest_csv(test)?.dataset),
    };
    if train.manifold() != Some(cfg.manifold) || test.manifold() != Some(cfg.manifold) {
        return invalid(format!("data does not live on the configured manifold {}", cfg.manifold));
    }
    let (scale, train) = normalize_dataset(&train)?;
    let test = test.scaled(scale);
    Ok(SeedData { train, test, scale })
}

/// Starting spec for fitting `kind` at smoothness `nu`.
pub fn base_spec(kind: KernelKind, nu: f64, manifold: Manifold, t: Truncation) -> Result<KernelSpec> {
    let spec = match kind {
        KernelKind::HodgeCompositional => {
            let part = PartParams { kappa: 1.0, variance: 0.5 };
            let parts = CompositionalParts {
                div: part,
                curl: part,
                harm_variance: if manifold == Manifold::Torus(2) { 0.5 } else { 0.0 },
            };
            KernelSpec::compositional(nu, parts, 0.1, manifold)
        }
        _ => KernelSpec::new(kind, MaternParams::new(nu, 1.0, 1.0, 0.1)?, manifold),
    }
    .with_truncation(t);
    spec.validate()?;
    Ok(spec)
}

/// Display name of a kernel at smoothness ν.
pub fn kernel_label(kind: KernelKind, nu: f64) -> String {
    match kind {
        KernelKind::PureNoise => kind.name().to_string(),
        _ => format!("{}-{}", kind.name(), nu_label(nu)),
    }
}

/// One (kernel, seed) result. Failed cells carry `None` parameters and NaN metrics.
#[derive(Clone, Debug)]
pub struct ResultRow {
    pub kernel: String,
    pub kind: KernelKind,
    pub nu: f64,
    pub seed: u64,
    pub fitted: Option<KernelSpec>,
    pub log_likelihood: f64,
    pub mse: f64,
    pub pnll: f64,
    /// Training normalisation factor s; unscaled metrics are mse/s² and pnll − q·ln s.
    pub scale: f64,
    pub status: String,
}

impl ResultRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    /// MSE in the units of the original observations.
    pub fn mse_unscaled(&self) -> f64 {
        self.mse / (self.scale * self.scale)
    }

    /// PNLL in the units of the original observations.
    pub fn pnll_unscaled(&self, q: usize) -> f64 {
        self.pnll - q as f64 * self.scale.ln()
    }

    /// σ²_div / σ²_curl for a fitted compositional kernel.
    pub fn div_curl_ratio(&self) -> Option<f64> {
        let p = self.fitted.as_ref()?.parts?;
        Some(p.div.variance / p.curl.variance)
    }
}

/// Mean and sample standard deviation of successful cells for one kernel.
#[derive(Clone, Debug)]
pub struct SummaryRow {
    pub kernel: String,
    pub kind: KernelKind,
    pub nu: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub pnll_mean: f64,
    pub pnll_std: f64,
    pub lml_mean: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub config_hash: String,
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentOutput {
    pub fn summary_for(&self, label: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.kernel == label)
    }

    pub fn rows_for<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a ResultRow> + 'a {
        self.rows.iter().filter(move |r| r.kernel == label)
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

#[derive(Clone, Copy)]
struct Cell {
    kind: KernelKind,
    nu: f64,
    seed: u64,
    order: usize,
}

fn grid_points(shape: (usize, usize)) -> Result<Vec<ManifoldPoint>> {
    lonlat_grid(shape.0, shape.1)?
        .into_iter()
        .map(|(lon, lat)| lonlat_to_point(lon, lat).map(ManifoldPoint::Sphere))
        .collect()
}

fn run_cell(cfg: &ExperimentConfig, cell: Cell, data: &SeedData) -> Result<(KernelSpec, f64, Metrics, f64)> {
    let t = truncation(cfg.manifold, cfg.lmax, cfg.lambda_cap);
    let base = base_spec(cell.kind, cell.nu, cfg.manifold, t)?;
    let fc = FitConfig {
        restarts: cfg.restarts,
        max_iters: cfg.max_iters,
        seed: cell.seed,
        frozen_kappa: cfg.frozen_kappa,
        ..FitConfig::default()
    };
    let fitted = fit(&data.train, &base, &fc)?;
    let kernel = crate::kernels::Kernel::new(fitted.spec.clone())?;
    let model = condition(&kernel, &data.train)?;
    let preds = predict(&model, &data.test.points)?;
    let m = metrics(&preds, &data.test.observations, fitted.spec.params.noise_variance)?;
    let want_grid = match cfg.grid {
        GridMode::None => false,
        GridMode::FirstSeed => Some(&cell.seed) == cfg.seeds.first(),
        GridMode::All => true,
    };
    if want_grid && cfg.manifold == Manifold::Sphere {
        if let Some(out) = &cfg.out {
            let g = predict(&model, &grid_points(cfg.grid_shape)?)?;
            let name = format!("grid_{}_seed{}.csv", kernel_label(cell.kind, cell.nu).replace('/', "_"), cell.seed);
            let dir = out.join("grids");
            std::fs::create_dir_all(&dir)?;
            write_grid(dir.join(name), &g, data.scale)?;
        }
    }
    Ok((fitted.spec, fitted.log_likelihood, m, data.scale))
}

/// Runs every (kernel, ν, seed) cell, writing `results.csv`, `summary.csv`,
/// `config.txt` and optional grids under `cfg.out`.
///
/// All kernels for a seed see the same data. Failures become NaN rows.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let hash = cfg.hash();
    info!("experiment {hash}: {} kernels, {} seeds", cfg.kernels.len(), cfg.seeds.len());
    let datasets: Vec<Result<SeedData>> = par::map_slice(&cfg.seeds, |&s| seed_data(cfg, s));
    if cfg.protocol.is_synthetic() {
        for (s, d) in cfg.seeds.iter().zip(&datasets) {
            if let Err(e) = d {
                warn!("seed {s}: could not build data: {e}");
            }
        }
    } else if let Some(Err(e)) = datasets.iter().find(|d| d.is_err()) {
        return Err(Error::InvalidInput(e.to_string()));
    }

    let mut cells = Vec::new();
    let mut order = 0;
    for &kind in &cfg.kernels {
        let nus: Vec<f64> = if kind == KernelKind::PureNoise { vec![cfg.nus[0]] } else { cfg.nus.clone() };
        for nu in nus {
            for &seed in &cfg.seeds {
                cells.push(Cell { kind, nu, seed, order });
            }
            order += 1;
        }
    }

    let seed_index = |s: u64| cfg.seeds.iter().position(|&x| x == s).unwrap_or(0);
    let mut rows: Vec<(usize, ResultRow)> = par::map_slice(&cells, |cell| {
        let label = kernel_label(cell.kind, cell.nu);
        let result = match &datasets[seed_index(cell.seed)] {
            Ok(d) => run_cell(cfg, *cell, d),
            Err(e) => Err(Error::InvalidInput(format!("no data: {e}"))),
        };
        let row = match result {
            Ok((spec, lml, m, scale)) => {
                info!("{label} seed {}: mse {:.4} pnll {:.4}", cell.seed, m.mse, m.pnll);
                ResultRow {
                    kernel: label,
                    kind: cell.kind,
                    nu: cell.nu,
                    seed: cell.seed,
                    fitted: Some(spec),
                    log_likelihood: lml,
                    mse: m.mse,
                    pnll: m.pnll,
                    scale,
                    status: "ok".into(),
                }
            }
            Err(e) => {
                warn!("{label} seed {}: {e}", cell.seed);
                ResultRow {
                    kernel: label,
                    kind: cell.kind,
                    nu: cell.nu,
                    seed: cell.seed,
                    fitted: None,
                    log_likelihood: f64::NAN,
                    mse: f64::NAN,
                    pnll: f64::NAN,
                    scale: f64::NAN,
                    status: format!("failed: {e}"),
                }
            }
        };
        (cell.order, row)
    });
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.seed.cmp(&b.1.seed)));

    let mut summary = Vec::new();
    for chunk in rows.chunk_by(|a, b| a.0 == b.0) {
        let ok: Vec<&ResultRow> = chunk.iter().map(|r| &r.1).filter(|r| r.ok()).collect();
        let (mse_mean, mse_std) = mean_std(&ok.iter().map(|r| r.mse).collect::<Vec<_>>());
        let (pnll_mean, pnll_std) = mean_std(&ok.iter().map(|r| r.pnll).collect::<Vec<_>>());
        let (lml_mean, _) = mean_std(&ok.iter().map(|r| r.log_likelihood).collect::<Vec<_>>());
        let first = &chunk[0].1;
        summary.push(SummaryRow {
            kernel: first.kernel.clone(),
            kind: first.kind,
            nu: first.nu,
            n_ok: ok.len(),
            n_failed: chunk.len() - ok.len(),
            mse_mean,
            mse_std,
            pnll_mean,
            pnll_std,
            lml_mean,
        });
    }
    let out = ExperimentOutput {
        config_hash: hash,
        rows: rows.into_iter().map(|r| r.1).collect(),
        summary,
    };
    if let Some(dir) = &cfg.out {
        write_outputs(dir, cfg, &out)?;
    }
    Ok(out)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

/// Column order of `results.csv`.
pub const RESULTS_HEADER: [&str; 19] = [
    "config_hash",
    "version",
    "seed",
    "kernel",
    "nu",
    "kappa",
    "variance",
    "noise_variance",
    "div_kappa",
    "div_variance",
    "curl_kappa",
    "curl_variance",
    "harm_variance",
    "log_likelihood",
    "mse",
    "pnll",
    "mse_unscaled",
    "pnll_unscaled",
    "status",
];

fn write_outputs(dir: &Path, cfg: &ExperimentConfig, out: &ExperimentOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    io::write_text(&dir.join("config.txt"), &format!("# config_hash = {}\n{}", out.config_hash, cfg.render()))?;

    let mut w = csv::Writer::from_path(dir.join("results.csv"))?;
    w.write_record(RESULTS_HEADER)?;
    for r in &out.rows {
        let spec = r.fitted.as_ref();
        let single = spec.filter(|s| !matches!(s.kind, KernelKind::PureNoise | KernelKind::HodgeCompositional));
        let parts = spec.and_then(|s| s.parts);
        let nan = |x: f64| if r.ok() { x.to_string() } else { "NaN".to_string() };
        w.write_record([
            out.config_hash.clone(),
            VERSION.to_string(),
            r.seed.to_string(),
            r.kernel.clone(),
            nu_label(r.nu),
            fmt_opt(single.map(|s| s.params.kappa)),
            fmt_opt(single.map(|s| s.params.variance)),
            if r.ok() { fmt_opt(spec.map(|s| s.params.noise_variance)) } else { "NaN".into() },
            fmt_opt(parts.map(|p| p.div.kappa)),
            fmt_opt(parts.map(|p| p.div.variance)),
            fmt_opt(parts.map(|p| p.curl.kappa)),
            fmt_opt(parts.map(|p| p.curl.variance)),
            fmt_opt(parts.map(|p| p.harm_variance)),
            nan(r.log_likelihood),
            nan(r.mse),
            nan(r.pnll),
            nan(r.mse_unscaled()),
            nan(r.pnll_unscaled(cfg.manifold.dim())),
            r.status.clone(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record([
        "config_hash",
        "kernel",
        "nu",
        "n_ok",
        "n_failed",
        "mse_mean",
        "mse_std",
        "pnll_mean",
        "pnll_std",
        "log_likelihood_mean",
    ])?;
    for s in &out.summary {
        w.write_record([
            out.config_hash.clone(),
            s.kernel.clone(),
            nu_label(s.nu),
            s.n_ok.to_string(),
            s.n_failed.to_string(),
            s.mse_mean.to_string(),
            s.mse_std.to_string(),
            s.pnll_mean.to_string(),
            s.pnll_std.to_string(),
            s.lml_mean.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
