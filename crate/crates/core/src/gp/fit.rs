//! Marginal-likelihood hyperparameter fitting with restarted Nelder–Mead.

use std::sync::Arc;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use log::{debug, warn};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{condition_with_gram, frames, gram, model_log_likelihood, Dataset, FieldCache, PairCache};
use crate::error::{invalid, Error, Result};
use crate::kernels::{CompositionalParts, Kernel, KernelKind, KernelSpec, PartParams};
use crate::manifold::Manifold;
use crate::par;
use crate::spectrum::Spectrum;

/// Cost returned for parameters whose model cannot be evaluated.
const FAILED_COST: f64 = 1e20;
const BOUND_PENALTY: f64 = 1e3;

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub restarts: usize,
    pub max_iters: u64,
    /// Simplex standard-deviation tolerance on the negative log likelihood.
    pub tolerance: f64,
    pub log_kappa_bounds: (f64, f64),
    pub log_variance_bounds: (f64, f64),
    pub log_noise_bounds: (f64, f64),
    pub seed: u64,
    /// Keeps κ (every κ of a compositional kernel) at this value.
    pub frozen_kappa: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            restarts: 5,
            max_iters: 300,
            tolerance: 1e-6,
            log_kappa_bounds: (0.01f64.ln(), 100f64.ln()),
            log_variance_bounds: (-6.0, 6.0),
            log_noise_bounds: (-10.0, 2.0),
            seed: 0,
            frozen_kappa: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub spec: KernelSpec,
    pub log_likelihood: f64,
    /// Index of the winning restart.
    pub restart: usize,
    pub restarts_succeeded: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Slot {
    Kappa,
    Variance,
    Noise,
    DivKappa,
    DivVariance,
    CurlKappa,
    CurlVariance,
    HarmVariance,
}

struct Layout {
    slots: Vec<(Slot, f64, f64)>,
}

impl Layout {
    fn new(base: &KernelSpec, cfg: &FitConfig) -> Self {
        let k = cfg.log_kappa_bounds;
        let v = cfg.log_variance_bounds;
        let mut slots = Vec::new();
        let free_kappa = cfg.frozen_kappa.is_none();
        match base.kind {
            KernelKind::PureNoise => {}
            KernelKind::HodgeCompositional => {
                if free_kappa {
                    slots.push((Slot::DivKappa, k.0, k.1));
                }
                slots.push((Slot::DivVariance, v.0, v.1));
                if free_kappa {
                    slots.push((Slot::CurlKappa, k.0, k.1));
                }
                slots.push((Slot::CurlVariance, v.0, v.1));
                if base.manifold == Manifold::Torus(2) {
                    slots.push((Slot::HarmVariance, v.0, v.1));
                }
            }
            _ => {
                if free_kappa {
                    slots.push((Slot::Kappa, k.0, k.1));
                }
                slots.push((Slot::Variance, v.0, v.1));
            }
        }
        slots.push((Slot::Noise, cfg.log_noise_bounds.0, cfg.log_noise_bounds.1));
        Layout { slots }
    }

    fn clamp(&self, p: &[f64]) -> (Vec<f64>, f64) {
        let mut excess = 0.0;
        let c = p
            .iter()
            .zip(&self.slots)
            .map(|(&x, &(_, lo, hi))| {
                let y = x.clamp(lo, hi);
                excess += (x - y).powi(2);
                y
            })
            .collect();
        (c, excess)
    }

    fn decode(&self, base: &KernelSpec, frozen: Option<f64>, p: &[f64]) -> KernelSpec {
        let mut spec = base.clone();
        let mut parts = base.parts.unwrap_or(CompositionalParts {
            div: PartParams { kappa: 1.0, variance: 1.0 },
            curl: PartParams { kappa: 1.0, variance: 1.0 },
            harm_variance: 0.0,
        });
        if let Some(k) = frozen {
            spec.params.kappa = k;
            parts.div.kappa = k;
            parts.curl.kappa = k;
        }
        for (&(slot, _, _), &x) in self.slots.iter().zip(p) {
            let e = x.exp();
            match slot {
                Slot::Kappa => spec.params.kappa = e,
                Slot::Variance => spec.params.variance = e,
                Slot::Noise => spec.params.noise_variance = e,
                Slot::DivKappa => parts.div.kappa = e,
                Slot::DivVariance => parts.div.variance = e,
                Slot::CurlKappa => parts.curl.kappa = e,
                Slot::CurlVariance => parts.curl.variance = e,
                Slot::HarmVariance => parts.harm_variance = e,
            }
        }
        if spec.kind == KernelKind::HodgeCompositional {
            let noise = spec.params.noise_variance;
            spec = KernelSpec {
                truncation: base.truncation,
                ..KernelSpec::compositional(base.params.nu, parts, noise, base.manifold)
            };
        }
        spec
    }
}

#[derive(Clone, Copy)]
struct Objective<'a> {
    data: &'a Dataset,
    base: &'a KernelSpec,
    frozen: Option<f64>,
    layout: &'a Layout,
    frames: &'a [DMatrix<f64>],
    cache: Option<&'a PairCache>,
    fields: Option<(&'a Arc<Spectrum>, &'a FieldCache)>,
}

impl Objective<'_> {
    fn log_likelihood(&self, spec: KernelSpec) -> Result<f64> {
        let (kernel, k) = match (self.cache, self.fields) {
            (Some(c), _) => {
                let kernel = Kernel::new(spec)?;
                let k = c.gram(&kernel)?;
                (kernel, k)
            }
            (None, Some((spectrum, f))) => {
                let kernel = Kernel::with_spectrum(spec, Arc::clone(spectrum))?;
                let k = f.gram(&kernel)?;
                (kernel, k)
            }
            (None, None) => {
                let kernel = Kernel::new(spec)?;
                let k = gram(&kernel, &self.data.points, self.frames)?;
                (kernel, k)
            }
        };
        let model = condition_with_gram(&kernel, self.data, self.frames.to_vec(), k)?;
        Ok(model_log_likelihood(&model))
    }
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let (c, excess) = self.layout.clamp(p);
        let spec = self.layout.decode(self.base, self.frozen, &c);
        let value = match self.log_likelihood(spec) {
            Ok(l) if l.is_finite() => -l,
            _ => FAILED_COST,
        };
        Ok(value + BOUND_PENALTY * excess)
    }
}

/// Maximises the log marginal likelihood over log-parameters of `base`.
///
/// ν, the truncation and any coregionalisation matrix are taken from `base`;
/// restarts begin at independent uniform draws inside the bounds.
pub fn fit(data: &Dataset, base: &KernelSpec, cfg: &FitConfig) -> Result<FitResult> {
    if data.is_empty() {
        return invalid("cannot fit to an empty dataset");
    }
    if cfg.restarts == 0 {
        return invalid("at least one restart is required");
    }
    if base.kind == KernelKind::Scalar {
        return invalid("vector regression needs a vector kernel");
    }
    if let Some(k) = cfg.frozen_kappa {
        if !(k > 0.0 && k.is_finite()) {
            return invalid(format!("frozen κ must be positive, got {k}"));
        }
    }
    let layout = Layout::new(base, cfg);
    let fr = frames(&data.points);
    let probe = Kernel::new(base.clone())?;
    let cache = if base.manifold == Manifold::Sphere && probe.is_sphere_series() {
        Some(PairCache::new(&data.points, &fr, probe.sphere_level())?)
    } else {
        None
    };
    let spectral = match probe.spectral() {
        Some((spectrum, _)) => Some((Arc::clone(spectrum), FieldCache::new(spectrum, &data.points, &fr)?)),
        None => None,
    };
    let objective = Objective {
        data,
        base,
        frozen: cfg.frozen_kappa,
        layout: &layout,
        frames: &fr,
        cache: cache.as_ref(),
        fields: spectral.as_ref().map(|(s, f)| (s, f)),
    };

    let runs = par::map_range(cfg.restarts, |r| run_restart(&objective, &layout, cfg, r));
    let mut best: Option<(usize, Vec<f64>, f64)> = None;
    let mut ok = 0;
    for (r, run) in runs.into_iter().enumerate() {
        match run {
            Ok((p, cost)) if cost < FAILED_COST => {
                ok += 1;
                if best.as_ref().is_none_or(|b| cost < b.2) {
                    best = Some((r, p, cost));
                }
            }
            Ok(_) => debug!("restart {r} never found an evaluable point"),
            Err(e) => warn!("restart {r} failed: {e}"),
        }
    }
    let (restart, p, _) = best.ok_or_else(|| Error::Numerical(format!("all {} restarts failed", cfg.restarts)))?;
    let (c, _) = layout.clamp(&p);
    let spec = layout.decode(base, cfg.frozen_kappa, &c);
    let log_likelihood = objective.log_likelihood(spec.clone())?;
    Ok(FitResult {
        spec,
        log_likelihood,
        restart,
        restarts_succeeded: ok,
    })
}

fn run_restart(objective: &Objective<'_>, layout: &Layout, cfg: &FitConfig, r: usize) -> Result<(Vec<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(r as u64);
    let x0: Vec<f64> = layout.slots.iter().map(|&(_, lo, hi)| rng.random_range(lo..=hi)).collect();
    let mut simplex = vec![x0.clone()];
    for (i, &(_, lo, hi)) in layout.slots.iter().enumerate() {
        let step = 0.1 * (hi - lo);
        let mut v = x0.clone();
        v[i] = if v[i] + step <= hi { v[i] + step } else { v[i] - step };
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(cfg.tolerance)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let res = Executor::new(*objective, solver)
        .configure(|s| s.max_iters(cfg.max_iters))
        .run()
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let state = res.state();
    let p = state
        .get_best_param()
        .cloned()
        .ok_or_else(|| Error::Numerical("optimizer returned no parameters".into()))?;
    Ok((p, state.get_best_cost()))
}
