//! Command-line front end: experiment sweeps and diagnostics.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hodgefield::diagnostics::{band_points, divergence_report, limitation_demo, sphere_spec};
use hodgefield::gp::sample::{sample_prior, spectrum_for};
use hodgefield::gp::Dataset;
use hodgefield::harness::config::parse_pairs;
use hodgefield::harness::{emit_csv, lonlat_grid, nu_label, parse_nu, run_experiment, ExperimentConfig};
use hodgefield::kernels::{KernelKind, MaternParams, DEFAULT_L_MAX};
use hodgefield::manifold::{lonlat_to_point, ManifoldPoint};
use hodgefield::{Error, Result};
use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser, Debug)]
#[command(name = "hodgefield", version, about = "Gaussian vector fields on the sphere and tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit kernels over seeds and write results.csv, summary.csv and grids.
    Run(RunArgs),
    /// Projected-kernel covariance against its large-κ limits.
    Limitation(LimitationArgs),
    /// Analytic against Monte-Carlo divergence variance.
    Divvar(DivvarArgs),
    /// Draw one prior field and write it on a lat-lon grid.
    Sample(SampleArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated kernels: noise, projected, hodge, div-free, curl-free, compositional.
    #[arg(long)]
    kernel: Option<String>,
    /// Comma-separated smoothness values from 1/2, 3/2, 5/2, inf.
    #[arg(long)]
    nu: Option<String>,
    /// Freeze the length scale at this value.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    lmax: Option<usize>,
    /// `a..b`, `a..=b` or a comma-separated list.
    #[arg(long)]
    seeds: Option<String>,
    /// hemisphere-split, uniform, great-circle or file.
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `rotation` or `sample:<kernel>:<nu>:<kappa>`.
    #[arg(long)]
    field: Option<String>,
    /// sphere or torusD.
    #[arg(long)]
    manifold: Option<String>,
    /// none, first or all.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iters: Option<u64>,
}

#[derive(Args, Debug)]
struct LimitationArgs {
    #[arg(long, default_value = "1/2")]
    nu: String,
    #[arg(long, default_value_t = 100.0)]
    kappa: f64,
    #[arg(long, default_value_t = DEFAULT_L_MAX)]
    lmax: usize,
    /// Row-major 3×3 mixing matrix A; identity when omitted.
    #[arg(long, value_delimiter = ',', num_args = 9, allow_negative_numbers = true)]
    a: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct DivvarArgs {
    #[arg(long, default_value = "hodge")]
    kernel: String,
    #[arg(long, default_value = "1/2")]
    nu: String,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    variance: f64,
    #[arg(long, default_value_t = 15)]
    lmax: usize,
    #[arg(long, default_value_t = 300)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long, default_value = "div-free")]
    kernel: String,
    #[arg(long, default_value = "1/2")]
    nu: String,
    #[arg(long, default_value_t = 0.5)]
    kappa: f64,
    #[arg(long, default_value_t = DEFAULT_L_MAX)]
    lmax: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV in the ingestion format.
    #[arg(long)]
    out: PathBuf,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn run(args: RunArgs) -> Result<()> {
    let mut map = match &args.config {
        Some(p) => parse_pairs(&std::fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?)?,
        None => BTreeMap::new(),
    };
    let mut set = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            map.insert(k.to_string(), v);
        }
    };
    let path = |p: Option<PathBuf>| p.map(|p| p.display().to_string());
    set("kernels", args.kernel);
    set("nu", args.nu);
    set("kappa", args.kappa.map(|k| k.to_string()));
    set("lmax", args.lmax.map(|l| l.to_string()));
    set("seeds", args.seeds);
    set("protocol", args.protocol);
    set("train", path(args.train));
    set("test", path(args.test));
    set("out", path(args.out));
    set("field", args.field);
    set("manifold", args.manifold);
    set("grid", args.grid);
    set("n_train", args.n_train.map(|n| n.to_string()));
    set("n_test", args.n_test.map(|n| n.to_string()));
    set("restarts", args.restarts.map(|n| n.to_string()));
    set("max_iters", args.max_iters.map(|n| n.to_string()));
    let cfg = ExperimentConfig::from_pairs(&map)?;
    let out = run_experiment(&cfg)?;
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "config {}", out.config_hash)?;
    writeln!(stdout, "{:<18} {:>4} {:>10} {:>10} {:>10} {:>10}", "kernel", "ok", "mse", "±", "pnll", "±")?;
    for s in &out.summary {
        writeln!(
            stdout,
            "{:<18} {:>4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            s.kernel, s.n_ok, s.mse_mean, s.mse_std, s.pnll_mean, s.pnll_std
        )?;
    }
    Ok(())
}

fn limitation(args: LimitationArgs) -> Result<()> {
    let nu = parse_nu(&args.nu)?;
    let a = match args.a {
        Some(v) => Matrix3::from_row_slice(&v),
        None => Matrix3::identity(),
    };
    let r = limitation_demo(&a, nu, args.kappa, args.lmax)?;
    println!("x = [{:.6}, {:.6}, {:.6}]", r.x.x, r.x.y, r.x.z);
    println!("x' = [{:.6}, {:.6}, {:.6}]", r.x_prime.x, r.x_prime.y, r.x_prime.z);
    println!("projected ‖k(x, x')‖_F = {:.6} (limit {:.6})", r.near, r.near_limit);
    println!("projected ‖k(x, -x)‖_F = {:.6} (limit {:.6})", r.antipodal, r.antipodal_limit);
    println!("hodge     ‖k(x, x')‖_F = {:.6}", r.hodge_near);
    println!("hodge     ‖k(x, -x)‖_F = {:.6}", r.hodge_antipodal);
    Ok(())
}

fn divvar(args: DivvarArgs) -> Result<()> {
    let kind: KernelKind = args.kernel.parse().map_err(|e: Error| usage(e.to_string()))?;
    let nu = parse_nu(&args.nu)?;
    let params = MaternParams::new(nu, args.kappa, args.variance, 0.0)?;
    let spec = sphere_spec(kind, params, args.lmax);
    let r = divergence_report(&spec, &band_points(12, 60.0), args.samples, args.seed, 1e-4)?;
    println!(
        "{}-{} κ={} σ²={}: analytic {:.6}, monte-carlo {:.6} over {} samples, relative gap {:.4}",
        kind,
        nu_label(nu),
        args.kappa,
        args.variance,
        r.analytic,
        r.monte_carlo,
        r.samples,
        r.relative_gap
    );
    Ok(())
}

fn sample(args: SampleArgs) -> Result<()> {
    let kind: KernelKind = args.kernel.parse().map_err(|e: Error| usage(e.to_string()))?;
    let nu = parse_nu(&args.nu)?;
    let spec = sphere_spec(kind, MaternParams::new(nu, args.kappa, 1.0, 0.0)?, args.lmax);
    spec.validate()?;
    let spectrum = spectrum_for(&spec)?;
    let f = sample_prior(&spec, &spectrum, &mut ChaCha8Rng::seed_from_u64(args.seed))?;
    let obs = lonlat_grid(37, 72)?
        .into_iter()
        .filter(|(_, lat)| lat.abs() < 90.0)
        .map(|(lon, lat)| f.eval_tangent(&ManifoldPoint::Sphere(lonlat_to_point(lon, lat)?)))
        .collect::<Result<Vec<_>>>()?;
    emit_csv(&args.out, &Dataset::new(obs)?)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stdout)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Limitation(a) => limitation(a),
        Command::Divvar(a) => divvar(a),
        Command::Sample(a) => sample(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
