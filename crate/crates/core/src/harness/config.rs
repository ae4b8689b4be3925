//! Experiment configuration as `key = value` text with flag overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernels::{KernelKind, DEFAULT_LAMBDA_CAP, DEFAULT_L_MAX};
use crate::manifold::Manifold;

fn bad<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

/// Smoothness values accepted on the command line.
pub const ALLOWED_NUS: [f64; 4] = [0.5, 1.5, 2.5, f64::INFINITY];

/// Parses ½, 3/2, 5/2 or ∞ in fraction, decimal or word form.
pub fn parse_nu(s: &str) -> Result<f64> {
    let t = s.trim().to_ascii_lowercase();
    let v = match t.as_str() {
        "inf" | "infinity" | "∞" => f64::INFINITY,
        "1/2" | "½" => 0.5,
        "3/2" => 1.5,
        "5/2" => 2.5,
        other => other.parse::<f64>().map_err(|_| Error::Config(format!("cannot parse ν `{s}`")))?,
    };
    if !ALLOWED_NUS.contains(&v) {
        return bad(format!("ν must be one of 1/2, 3/2, 5/2, inf; got `{s}`"));
    }
    Ok(v)
}

/// Short label for ν used in kernel names.
pub fn nu_label(nu: f64) -> String {
    if nu.is_infinite() {
        "inf".into()
    } else if nu == 0.5 {
        "1/2".into()
    } else if nu == 1.5 {
        "3/2".into()
    } else if nu == 2.5 {
        "5/2".into()
    } else {
        nu.to_string()
    }
}

/// Parses `a..b`, `a..=b` or a comma-separated list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let t = s.trim();
    let num = |x: &str| x.trim().parse::<u64>().map_err(|_| Error::Config(format!("bad seed `{x}`")));
    let seeds: Vec<u64> = if let Some((a, b)) = t.split_once("..=") {
        (num(a)?..=num(b)?).collect()
    } else if let Some((a, b)) = t.split_once("..") {
        (num(a)?..num(b)?).collect()
    } else {
        t.split(',').filter(|x| !x.trim().is_empty()).map(num).collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return bad(format!("seed list `{s}` is empty"));
    }
    Ok(seeds)
}

pub fn parse_manifold(s: &str) -> Result<Manifold> {
    let t = s.trim().to_ascii_lowercase();
    match t.as_str() {
        "sphere" | "s2" => Ok(Manifold::Sphere),
        "circle" | "s1" => Ok(Manifold::Circle),
        _ => match t.strip_prefix("torus").or_else(|| t.strip_prefix('t')) {
            Some(d) => match d.parse::<usize>() {
                Ok(d) if d >= 1 => Ok(Manifold::Torus(d)),
                _ => bad(format!("bad torus dimension in `{s}`")),
            },
            None => bad(format!("unknown manifold `{s}`")),
        },
    }
}

fn manifold_name(m: Manifold) -> String {
    match m {
        Manifold::Sphere => "sphere".into(),
        Manifold::Circle => "circle".into(),
        Manifold::Torus(d) => format!("torus{d}"),
    }
}

/// Ground-truth vector field for synthetic experiments.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldSource {
    /// (x, y, z) ↦ (y, −x, 0) on the sphere.
    Rotation,
    /// Fresh prior draw with unit variance.
    Sample { kind: KernelKind, nu: f64, kappa: f64 },
}

impl FromStr for FieldSource {
    type Err = Error;

    /// `rotation` or `sample:<kernel>:<nu>:<kappa>`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("rotation") {
            return Ok(FieldSource::Rotation);
        }
        let parts: Vec<&str> = t.split(':').collect();
        if parts.len() == 4 && parts[0].eq_ignore_ascii_case("sample") {
            let kind: KernelKind = parts[1].parse().map_err(|e: Error| Error::InvalidInput(e.to_string()))?;
            let nu = parse_nu(parts[2]).map_err(|e| Error::InvalidInput(e.to_string()))?;
            let kappa: f64 = parts[3]
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad κ `{}` in field `{s}`", parts[3])))?;
            if !(kappa > 0.0 && kappa.is_finite()) {
                return Err(Error::InvalidInput(format!("κ must be positive in field `{s}`")));
            }
            return Ok(FieldSource::Sample { kind, nu, kappa });
        }
        Err(Error::InvalidInput(format!(
            "unknown field `{s}`; expected `rotation` or `sample:<kernel>:<nu>:<kappa>`"
        )))
    }
}

impl std::fmt::Display for FieldSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FieldSource::Rotation => f.write_str("rotation"),
            FieldSource::Sample { kind, nu, kappa } => write!(f, "sample:{kind}:{}:{kappa}", nu_label(*nu)),
        }
    }
}

/// How training and test points are chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum Protocol {
    /// Uniform training points on the northern hemisphere, test points on the southern.
    HemisphereSplit { n_train: usize, n_test: usize },
    /// Uniform training and test points on the whole manifold.
    Uniform { n_train: usize, n_test: usize },
    /// Observations along fixed meridians, keeping every `stride`-th; random test points.
    ///
    /// Without a source file the meridians are sampled every `resolution_deg`.
    /// With one, rows on the meridians train and the test set is either `test` or
    /// `n_test` random rows off the meridians.
    GreatCircle {
        longitudes: Vec<f64>,
        stride: usize,
        resolution_deg: f64,
        n_test: usize,
        source: Option<PathBuf>,
        test: Option<PathBuf>,
    },
    /// Fixed training and test files.
    File { train: PathBuf, test: PathBuf },
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::HemisphereSplit { .. } => "hemisphere-split",
            Protocol::Uniform { .. } => "uniform",
            Protocol::GreatCircle { .. } => "great-circle",
            Protocol::File { .. } => "file",
        }
    }

    /// True when observations come from a synthetic field.
    pub fn is_synthetic(&self) -> bool {
        match self {
            Protocol::File { .. } => false,
            Protocol::GreatCircle { source, .. } => source.is_none(),
            _ => true,
        }
    }
}

/// Which cells get prediction grids written.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridMode {
    None,
    FirstSeed,
    All,
}

impl FromStr for GridMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "off" => Ok(GridMode::None),
            "first" | "first-seed" => Ok(GridMode::FirstSeed),
            "all" => Ok(GridMode::All),
            other => bad(format!("grid mode must be none, first or all; got `{other}`")),
        }
    }
}

impl GridMode {
    fn name(&self) -> &'static str {
        match self {
            GridMode::None => "none",
            GridMode::FirstSeed => "first",
            GridMode::All => "all",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub manifold: Manifold,
    pub kernels: Vec<KernelKind>,
    pub nus: Vec<f64>,
    pub seeds: Vec<u64>,
    pub protocol: Protocol,
    pub field: FieldSource,
    /// Length scale held fixed during fitting.
    pub frozen_kappa: Option<f64>,
    pub lmax: usize,
    pub lambda_cap: f64,
    pub restarts: usize,
    pub max_iters: u64,
    pub out: Option<PathBuf>,
    pub grid: GridMode,
    /// Grid size as (latitudes, longitudes).
    pub grid_shape: (usize, usize),
    /// Draw new point locations per seed. Defaults to true for the rotation
    /// field and false for kernel samples, which draw a new field instead.
    pub resample_points: Option<bool>,
}

/// Keys understood by [`ExperimentConfig::from_pairs`].
pub const KEYS: [&str; 21] = [
    "manifold",
    "kernels",
    "nu",
    "seeds",
    "protocol",
    "n_train",
    "n_test",
    "longitudes",
    "stride",
    "resolution",
    "train",
    "test",
    "field",
    "kappa",
    "lmax",
    "lambda_cap",
    "restarts",
    "max_iters",
    "out",
    "grid",
    "resample_points",
];

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return bad(format!("config line {}: expected key = value", i + 1));
        };
        let k = k.trim().to_ascii_lowercase();
        if !KEYS.contains(&k.as_str()) {
            return bad(format!("config line {}: unknown key `{k}`", i + 1));
        }
        map.insert(k, v.trim().to_string());
    }
    Ok(map)
}

fn list<T>(s: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(f).collect()
}

fn number<T: FromStr>(key: &str, s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Config(format!("bad value `{s}` for `{key}`")))
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            manifold: Manifold::Sphere,
            kernels: vec![
                KernelKind::PureNoise,
                KernelKind::Projected,
                KernelKind::HodgeFull,
                KernelKind::HodgeCurl,
                KernelKind::HodgeDiv,
            ],
            nus: vec![0.5, f64::INFINITY],
            seeds: (0..10).collect(),
            protocol: Protocol::HemisphereSplit { n_train: 30, n_test: 100 },
            field: FieldSource::Rotation,
            frozen_kappa: None,
            lmax: DEFAULT_L_MAX,
            lambda_cap: DEFAULT_LAMBDA_CAP,
            restarts: 5,
            max_iters: 300,
            out: None,
            grid: GridMode::None,
            grid_shape: (37, 72),
            resample_points: None,
        }
    }
}

impl ExperimentConfig {
    /// Builds a config from key/value pairs on top of the defaults.
    pub fn from_pairs(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        let get = |k: &str| map.get(k).map(String::as_str);
        for k in map.keys() {
            if !KEYS.contains(&k.as_str()) {
                return bad(format!("unknown key `{k}`"));
            }
        }
        if let Some(v) = get("manifold") {
            c.manifold = parse_manifold(v)?;
            if c.manifold != Manifold::Sphere && get("kernels").is_none() {
                c.kernels = vec![
                    KernelKind::PureNoise,
                    KernelKind::HodgeFull,
                    KernelKind::HodgeCurl,
                    KernelKind::HodgeDiv,
                ];
            }
        }
        if let Some(v) = get("kernels") {
            c.kernels = list(v, |x| x.parse::<KernelKind>().map_err(|e| Error::Config(e.to_string())))?;
        }
        if let Some(v) = get("nu") {
            c.nus = list(v, parse_nu)?;
        }
        if let Some(v) = get("seeds") {
            c.seeds = parse_seeds(v)?;
        }
        if let Some(v) = get("field") {
            c.field = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
        }
        if let Some(v) = get("kappa") {
            let k: f64 = number("kappa", v)?;
            if !(k > 0.0 && k.is_finite()) {
                return bad(format!("frozen κ must be positive, got {v}"));
            }
            c.frozen_kappa = Some(k);
        }
        if let Some(v) = get("lmax") {
            c.lmax = number("lmax", v)?;
        }
        if let Some(v) = get("lambda_cap") {
            c.lambda_cap = number("lambda_cap", v)?;
        }
        if let Some(v) = get("restarts") {
            c.restarts = number("restarts", v)?;
        }
        if let Some(v) = get("max_iters") {
            c.max_iters = number("max_iters", v)?;
        }
        if let Some(v) = get("out") {
            c.out = Some(PathBuf::from(v));
        }
        if let Some(v) = get("grid") {
            c.grid = v.parse()?;
        }
        if let Some(v) = get("resample_points") {
            c.resample_points = Some(number("resample_points", v)?);
        }

        let n_train: Option<usize> = get("n_train").map(|v| number("n_train", v)).transpose()?;
        let n_test: Option<usize> = get("n_test").map(|v| number("n_test", v)).transpose()?;
        let train = get("train").map(PathBuf::from);
        let test = get("test").map(PathBuf::from);
        let default_protocol = if train.is_some() && test.is_some() { "file" } else { "hemisphere-split" };
        let proto = get("protocol").unwrap_or(if c.manifold == Manifold::Sphere { default_protocol } else { "uniform" });
        c.protocol = match proto.trim().to_ascii_lowercase().as_str() {
            "hemisphere-split" | "hemisphere" => Protocol::HemisphereSplit {
                n_train: n_train.unwrap_or(30),
                n_test: n_test.unwrap_or(100),
            },
            "uniform" => Protocol::Uniform {
                n_train: n_train.unwrap_or(30),
                n_test: n_test.unwrap_or(100),
            },
            "great-circle" | "great_circle" => Protocol::GreatCircle {
                longitudes: match get("longitudes") {
                    Some(v) => list(v, |x| number("longitudes", x))?,
                    None => vec![90.0, -90.0],
                },
                stride: get("stride").map(|v| number("stride", v)).transpose()?.unwrap_or(40),
                resolution_deg: get("resolution").map(|v| number("resolution", v)).transpose()?.unwrap_or(0.25),
                n_test: n_test.unwrap_or(100),
                source: train,
                test,
            },
            "file" => match (train, test) {
                (Some(train), Some(test)) => Protocol::File { train, test },
                _ => return bad("protocol `file` needs both `train` and `test`"),
            },
            other => return bad(format!("unknown protocol `{other}`")),
        };
        c.validate()?;
        Ok(c)
    }

    /// Parses a config file body.
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_pairs(&parse_pairs(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.kernels.is_empty() {
            return bad("at least one kernel is required");
        }
        if self.nus.is_empty() {
            return bad("at least one ν is required");
        }
        if self.kernels.contains(&KernelKind::Scalar) {
            return bad("the scalar kernel cannot model vector observations");
        }
        if self.restarts == 0 || self.max_iters == 0 {
            return bad("restarts and max_iters must be positive");
        }
        if self.lmax == 0 || !(self.lambda_cap > 0.0) {
            return bad("truncation must keep at least one level");
        }
        let sphere_only = |what: &str| -> Result<()> {
            if self.manifold != Manifold::Sphere {
                return bad(format!("{what} needs the sphere"));
            }
            Ok(())
        };
        match &self.protocol {
            Protocol::HemisphereSplit { n_train, n_test } | Protocol::Uniform { n_train, n_test } => {
                if *n_train == 0 || *n_test == 0 {
                    return bad("point counts must be positive");
                }
                if matches!(self.protocol, Protocol::HemisphereSplit { .. }) {
                    sphere_only("the hemisphere split")?;
                }
            }
            Protocol::GreatCircle {
                longitudes,
                stride,
                resolution_deg,
                n_test,
                ..
            } => {
                sphere_only("the great-circle protocol")?;
                if longitudes.is_empty() || *stride == 0 || *n_test == 0 || !(*resolution_deg > 0.0) {
                    return bad("great-circle protocol needs longitudes, a positive stride, resolution and test count");
                }
            }
            Protocol::File { .. } => {}
        }
        if self.protocol.is_synthetic() {
            match self.field {
                FieldSource::Rotation => sphere_only("the rotation field")?,
                FieldSource::Sample { kind, .. } => {
                    if matches!(kind, KernelKind::PureNoise | KernelKind::HodgeCompositional | KernelKind::Scalar) {
                        return bad(format!("cannot draw ground-truth fields from the `{kind}` kernel"));
                    }
                }
            }
        }
        if self.kernels.contains(&KernelKind::Projected) && self.manifold != Manifold::Sphere {
            return bad("the projected kernel needs the sphere");
        }
        Ok(())
    }

    /// Canonical `key = value` rendering; the config hash is taken over this text.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let join = |v: Vec<String>| v.join(",");
        let _ = writeln!(s, "manifold = {}", manifold_name(self.manifold));
        let _ = writeln!(s, "kernels = {}", join(self.kernels.iter().map(|k| k.name().to_string()).collect()));
        let _ = writeln!(s, "nu = {}", join(self.nus.iter().map(|n| nu_label(*n)).collect()));
        let _ = writeln!(s, "seeds = {}", join(self.seeds.iter().map(u64::to_string).collect()));
        let _ = writeln!(s, "protocol = {}", self.protocol.name());
        match &self.protocol {
            Protocol::HemisphereSplit { n_train, n_test } | Protocol::Uniform { n_train, n_test } => {
                let _ = writeln!(s, "n_train = {n_train}");
                let _ = writeln!(s, "n_test = {n_test}");
            }
            Protocol::GreatCircle {
                longitudes,
                stride,
                resolution_deg,
                n_test,
                source,
                test,
            } => {
                let _ = writeln!(s, "longitudes = {}", join(longitudes.iter().map(f64::to_string).collect()));
                let _ = writeln!(s, "stride = {stride}");
                let _ = writeln!(s, "resolution = {resolution_deg}");
                let _ = writeln!(s, "n_test = {n_test}");
                if let Some(p) = source {
                    let _ = writeln!(s, "train = {}", p.display());
                }
                if let Some(p) = test {
                    let _ = writeln!(s, "test = {}", p.display());
                }
            }
            Protocol::File { train, test } => {
                let _ = writeln!(s, "train = {}", train.display());
                let _ = writeln!(s, "test = {}", test.display());
            }
        }
        if self.protocol.is_synthetic() {
            let _ = writeln!(s, "field = {}", self.field);
        }
        if let Some(k) = self.frozen_kappa {
            let _ = writeln!(s, "kappa = {k}");
        }
        let _ = writeln!(s, "lmax = {}", self.lmax);
        let _ = writeln!(s, "lambda_cap = {}", self.lambda_cap);
        let _ = writeln!(s, "restarts = {}", self.restarts);
        let _ = writeln!(s, "max_iters = {}", self.max_iters);
        let _ = writeln!(s, "grid = {}", self.grid.name());
        if let Some(r) = self.resample_points {
            let _ = writeln!(s, "resample_points = {r}");
        }
        s
    }

    /// Whether synthetic point locations change with the seed.
    pub fn resamples_points(&self) -> bool {
        self.resample_points.unwrap_or(self.field == FieldSource::Rotation)
    }

    /// First 12 hex digits of the SHA-256 of [`render`](Self::render).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.render().as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}
