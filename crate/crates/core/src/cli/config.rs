//! Flat `key = value` experiment configs.
//!
//! Lines starting with `#` are comments. List values are comma separated;
//! vector coordinates are separated by `;`, so `family.centers = 0;0, 1;0`
//! describes two centres in the plane. Unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::tasks::{gap_family_with, quadratic_family_with, FamilyOptions, ParamVector, TaskFamily};
use crate::weighting::Balancer;

pub const KNOWN_KEYS: &[&str] = &[
    "family.kind",
    "family.centers",
    "family.curvatures",
    "family.noise_sigma",
    "family.T",
    "family.domain_radius",
    "balancer",
    "balancers",
    "step.mode",
    "step.value",
    "alpha.mode",
    "alpha.value",
    "alpha.R0",
    "alpha.Lp",
    "alpha.T",
    "alpha.B",
    "K",
    "K_list",
    "theta0",
    "eps",
    "delta",
    "N_grid",
    "trials",
    "seed",
    "outdir",
    "study",
    "batch_size",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config line {line}: expected 'key = value'")]
    Syntax { line: usize },
    #[error("config key '{key}': {message}")]
    Key { key: String, message: String },
}

fn key_err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Key {
        key: key.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Constant,
    Theoretical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilyKind {
    Quadratic {
        centers: Vec<Vec<f64>>,
        curvatures: Vec<f64>,
    },
    Gap {
        tasks: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    pub noise_sigma: f64,
    pub domain_radius: Option<f64>,
}

impl FamilySpec {
    pub fn build(&self) -> Result<TaskFamily, ConfigError> {
        let options = FamilyOptions {
            noise_sigma: self.noise_sigma,
            domain_radius: self.domain_radius,
        };
        match &self.kind {
            FamilyKind::Quadratic {
                centers,
                curvatures,
            } => {
                let centers = centers
                    .iter()
                    .map(|c| ParamVector::new(c.clone()))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| key_err("family.centers", e.to_string()))?;
                quadratic_family_with(centers, curvatures.clone(), options)
                    .map_err(|e| key_err("family.centers", e.to_string()))
            }
            FamilyKind::Gap { tasks } => {
                gap_family_with(*tasks, options).map_err(|e| key_err("family.T", e.to_string()))
            }
        }
    }
}

/// Overrides for the constants entering the theoretical α schedule.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AlphaOverrides {
    pub r0: Option<f64>,
    pub lipschitz: Option<f64>,
    pub tasks: Option<usize>,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub family: Option<FamilySpec>,
    pub balancer: Balancer,
    pub balancers: Vec<Balancer>,
    pub step_mode: Mode,
    pub step_value: Option<f64>,
    pub alpha_mode: Mode,
    pub alpha_value: Option<f64>,
    pub alpha_overrides: AlphaOverrides,
    pub iterations: Option<usize>,
    pub k_list: Option<Vec<usize>>,
    pub theta0: Option<Vec<f64>>,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub n_grid: Option<Vec<usize>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub outdir: Option<PathBuf>,
    pub study: Option<String>,
    pub batch_size: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            family: None,
            balancer: Balancer::Minimax,
            balancers: Balancer::ALL.to_vec(),
            step_mode: Mode::Theoretical,
            step_value: None,
            alpha_mode: Mode::Theoretical,
            alpha_value: None,
            alpha_overrides: AlphaOverrides::default(),
            iterations: None,
            k_list: None,
            theta0: None,
            eps: None,
            delta: None,
            n_grid: None,
            trials: None,
            seed: None,
            outdir: None,
            study: None,
            batch_size: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        text.parse()
    }

    /// Builds the configured family, checking `theta0` against its dimension.
    pub fn family(&self) -> Result<TaskFamily, ConfigError> {
        let spec = self
            .family
            .as_ref()
            .ok_or_else(|| key_err("family.kind", "missing"))?;
        let family = spec.build()?;
        if let Some(theta0) = &self.theta0 {
            if theta0.len() != family.dim() {
                return Err(key_err(
                    "theta0",
                    format!("has {} coordinates, family has d = {}", theta0.len(), family.dim()),
                ));
            }
        }
        Ok(family)
    }
}

impl FromStr for ExperimentConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut entries = Entries::parse(text)?;
        let mut cfg = ExperimentConfig {
            family: parse_family(&mut entries)?,
            ..ExperimentConfig::default()
        };
        if let Some(v) = entries.take("balancer") {
            cfg.balancer = parse_balancer("balancer", &v)?;
        }
        if let Some(v) = entries.take("balancers") {
            cfg.balancers = split_list(&v)
                .map(|s| parse_balancer("balancers", s))
                .collect::<Result<_, _>>()?;
            if cfg.balancers.is_empty() {
                return Err(key_err("balancers", "empty list"));
            }
        }
        if let Some(v) = entries.take("step.mode") {
            cfg.step_mode = parse_mode("step.mode", &v)?;
        }
        cfg.step_value = entries.positive("step.value")?;
        if cfg.step_mode == Mode::Constant && cfg.step_value.is_none() {
            return Err(key_err("step.value", "required when step.mode = constant"));
        }
        if let Some(v) = entries.take("alpha.mode") {
            cfg.alpha_mode = parse_mode("alpha.mode", &v)?;
        }
        cfg.alpha_value = entries.nonnegative("alpha.value")?;
        if cfg.alpha_mode == Mode::Constant && cfg.alpha_value.is_none() {
            return Err(key_err("alpha.value", "required when alpha.mode = constant"));
        }
        cfg.alpha_overrides = AlphaOverrides {
            r0: entries.positive("alpha.R0")?,
            lipschitz: entries.positive("alpha.Lp")?,
            tasks: entries.count("alpha.T")?,
            bound: entries.positive("alpha.B")?,
        };
        cfg.iterations = entries.count("K")?;
        cfg.k_list = entries.count_list("K_list")?;
        if let Some(v) = entries.take("theta0") {
            cfg.theta0 = Some(parse_vector("theta0", &v)?);
        }
        cfg.eps = entries.positive("eps")?;
        cfg.delta = entries.unit_interval("delta")?;
        cfg.n_grid = entries.count_list("N_grid")?;
        cfg.trials = entries.count("trials")?;
        if let Some(v) = entries.take("seed") {
            cfg.seed = Some(
                v.parse()
                    .map_err(|_| key_err("seed", format!("'{v}' is not a nonnegative integer")))?,
            );
        }
        cfg.outdir = entries.take("outdir").map(PathBuf::from);
        cfg.study = entries.take("study");
        cfg.batch_size = entries.count("batch_size")?;

        entries.finish()?;
        // surface family errors at parse time
        if cfg.family.is_some() {
            cfg.family()?;
        }
        Ok(cfg)
    }
}

fn parse_family(entries: &mut Entries) -> Result<Option<FamilySpec>, ConfigError> {
    let kind = entries.take("family.kind");
    let centers = entries.take("family.centers");
    let curvatures = entries.take("family.curvatures");
    let tasks = entries.count("family.T")?;
    let noise_sigma = entries.nonnegative("family.noise_sigma")?.unwrap_or(0.0);
    let domain_radius = entries.positive("family.domain_radius")?;

    let Some(kind) = kind else {
        if centers.is_some() || curvatures.is_some() || tasks.is_some() {
            return Err(key_err("family.kind", "missing"));
        }
        return Ok(None);
    };
    let kind = match kind.as_str() {
        "quadratic" => {
            if tasks.is_some() {
                return Err(key_err("family.T", "only applies to family.kind = gap"));
            }
            let centers = centers.ok_or_else(|| key_err("family.centers", "missing"))?;
            let centers = split_list(&centers)
                .map(|c| parse_vector("family.centers", c))
                .collect::<Result<Vec<_>, _>>()?;
            let curvatures = curvatures.ok_or_else(|| key_err("family.curvatures", "missing"))?;
            let curvatures = split_list(&curvatures)
                .map(|c| parse_f64("family.curvatures", c))
                .collect::<Result<Vec<_>, _>>()?;
            if centers.is_empty() {
                return Err(key_err("family.centers", "empty list"));
            }
            if curvatures.len() != centers.len() {
                return Err(key_err(
                    "family.curvatures",
                    format!("{} curvatures for {} centers", curvatures.len(), centers.len()),
                ));
            }
            if curvatures.iter().any(|&c| !(c > 0.0)) {
                return Err(key_err("family.curvatures", "must be positive"));
            }
            if centers.iter().any(|c| c.len() != centers[0].len()) {
                return Err(key_err("family.centers", "centers differ in dimension"));
            }
            FamilyKind::Quadratic {
                centers,
                curvatures,
            }
        }
        "gap" => {
            if centers.is_some() {
                return Err(key_err("family.centers", "only applies to family.kind = quadratic"));
            }
            if curvatures.is_some() {
                return Err(key_err("family.curvatures", "only applies to family.kind = quadratic"));
            }
            let tasks = tasks.ok_or_else(|| key_err("family.T", "missing"))?;
            if tasks < 2 {
                return Err(key_err("family.T", "gap family needs T >= 2"));
            }
            FamilyKind::Gap { tasks }
        }
        other => {
            return Err(key_err(
                "family.kind",
                format!("'{other}' is not one of quadratic, gap"),
            ))
        }
    };
    Ok(Some(FamilySpec {
        kind,
        noise_sigma,
        domain_radius,
    }))
}

struct Entries(BTreeMap<String, String>);

impl Entries {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            if !KNOWN_KEYS.contains(&key) {
                return Err(key_err(key, "unknown key"));
            }
            if map.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(key_err(key, "given more than once"));
            }
        }
        Ok(Self(map))
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.0.remove(key)
    }

    fn number(&mut self, key: &str, ok: impl Fn(f64) -> bool, what: &str) -> Result<Option<f64>, ConfigError> {
        self.take(key)
            .map(|v| {
                let x = parse_f64(key, &v)?;
                if ok(x) {
                    Ok(x)
                } else {
                    Err(key_err(key, format!("{v} is not {what}")))
                }
            })
            .transpose()
    }

    fn positive(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.number(key, |x| x > 0.0, "positive")
    }

    fn nonnegative(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.number(key, |x| x >= 0.0, "nonnegative")
    }

    fn unit_interval(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.number(key, |x| x > 0.0 && x < 1.0, "in (0, 1)")
    }

    fn count(&mut self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.take(key).map(|v| parse_count(key, &v)).transpose()
    }

    fn count_list(&mut self, key: &str) -> Result<Option<Vec<usize>>, ConfigError> {
        self.take(key)
            .map(|v| {
                let list = split_list(&v)
                    .map(|s| parse_count(key, s))
                    .collect::<Result<Vec<_>, _>>()?;
                if list.is_empty() {
                    return Err(key_err(key, "empty list"));
                }
                Ok(list)
            })
            .transpose()
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.0.into_keys().next() {
            Some(key) => Err(key_err(&key, "unused key")),
            None => Ok(()),
        }
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_f64(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = v
        .trim()
        .parse()
        .map_err(|_| key_err(key, format!("'{v}' is not a number")))?;
    if !x.is_finite() {
        return Err(key_err(key, format!("'{v}' is not finite")));
    }
    Ok(x)
}

fn parse_count(key: &str, v: &str) -> Result<usize, ConfigError> {
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(key_err(key, format!("'{v}' is not a positive integer"))),
    }
}

fn parse_vector(key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    let coords = v
        .split(';')
        .map(|c| parse_f64(key, c))
        .collect::<Result<Vec<_>, _>>()?;
    if coords.is_empty() {
        return Err(key_err(key, "empty vector"));
    }
    Ok(coords)
}

fn parse_mode(key: &str, v: &str) -> Result<Mode, ConfigError> {
    match v {
        "constant" => Ok(Mode::Constant),
        "theoretical" => Ok(Mode::Theoretical),
        other => Err(key_err(
            key,
            format!("'{other}' is not one of constant, theoretical"),
        )),
    }
}

fn parse_balancer(key: &str, v: &str) -> Result<Balancer, ConfigError> {
    v.parse().map_err(|_| {
        key_err(
            key,
            format!("'{v}' is not one of minimax, none, uncertainty, gradnorm, dwa"),
        )
    })
}
