//! Oracle tables for the benchmark problems.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use weighted_ensemble::analysis::{geometric_model, MicrobinModel, OuAnalytic};
use weighted_ensemble::kernels::{IsingKernel, DEFAULT_UPDATES_PER_STEP};
use weighted_ensemble::rng::Streams;

use crate::config::ConfigError;
use crate::output::float;

pub const HEADER: [&str; 8] = [
    "model",
    "mu_f",
    "mu_v2",
    "mu_v_squared",
    "oif",
    "mcmc_constant",
    "optimal_constant",
    "time_unit",
];

/// One row of the analysis table. Constants are `N T Var / mu(f)^2` limits with
/// `T` measured in `time_unit` per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub model: String,
    pub mu_f: f64,
    pub mu_v2: f64,
    pub mu_v_squared: f64,
    pub time_unit: f64,
}

impl Row {
    pub fn oif(&self) -> f64 {
        if self.mu_v_squared > 0.0 {
            self.mu_v2 / self.mu_v_squared
        } else {
            1.0
        }
    }

    pub fn mcmc_constant(&self) -> f64 {
        self.time_unit * self.mu_v2 / (self.mu_f * self.mu_f)
    }

    pub fn optimal_constant(&self) -> f64 {
        self.time_unit * self.mu_v_squared / (self.mu_f * self.mu_f)
    }

    pub fn cells(&self) -> Vec<String> {
        vec![
            self.model.clone(),
            float(self.mu_f),
            float(self.mu_v2),
            float(self.mu_v_squared),
            float(self.oif()),
            float(self.mcmc_constant()),
            float(self.optimal_constant()),
            float(self.time_unit),
        ]
    }

    /// Independent draws from the invariant law: `v^2 = p (1 - p)` everywhere.
    pub fn independence(&self) -> Row {
        let p = self.mu_f;
        Row {
            model: "independence".into(),
            mu_f: p,
            mu_v2: p * (1.0 - p),
            mu_v_squared: p * (1.0 - p),
            time_unit: self.time_unit,
        }
    }
}

/// `name:key=value,key=value`.
pub struct ModelSpec {
    pub name: String,
    pub params: BTreeMap<String, String>,
}

impl ModelSpec {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let (name, rest) = text.split_once(':').unwrap_or((text, ""));
        let mut params = BTreeMap::new();
        if name == "microbin" {
            params.insert("file".to_string(), rest.to_string());
        } else {
            for pair in rest.split(',').filter(|p| !p.is_empty()) {
                let (k, v) = pair
                    .split_once('=')
                    .ok_or_else(|| ConfigError(format!("model parameter `{pair}` is not key=value")))?;
                params.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(Self {
            name: name.to_string(),
            params,
        })
    }

    fn number<T: std::str::FromStr>(&self, key: &str, default: Option<T>) -> Result<T, ConfigError> {
        match self.params.get(key) {
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError(format!("model parameter `{key}`: cannot parse `{v}`"))),
            None => default.ok_or_else(|| ConfigError(format!("model `{}` needs `{key}`", self.name))),
        }
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        match self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(ConfigError(format!("model `{}` has no parameter `{k}`", self.name))),
            None => Ok(()),
        }
    }
}

pub struct Analysis {
    pub row: Row,
    pub microbin: Option<MicrobinModel>,
}

pub fn analyze(spec: &ModelSpec) -> Result<Analysis> {
    match spec.name.as_str() {
        "geometric" => {
            spec.check_keys(&["a"])?;
            let a: u64 = spec.number("a", None)?;
            let m = geometric_model(a)?;
            Ok(Analysis {
                row: Row {
                    model: format!("geometric a={a}"),
                    mu_f: m.mean_observable(),
                    mu_v2: m.mean_square_variance(),
                    mu_v_squared: m.mean_variance().powi(2),
                    time_unit: 1.0,
                },
                microbin: None,
            })
        }
        "ou" => {
            spec.check_keys(&["a", "dt"])?;
            let a: f64 = spec.number("a", None)?;
            let dt: f64 = spec.number("dt", Some(0.01))?;
            let m = OuAnalytic::new(a, dt)?;
            Ok(Analysis {
                row: Row {
                    model: format!("ou a={a} dt={dt}"),
                    mu_f: m.tail_probability(),
                    mu_v2: m.mcmc_constant()? / dt,
                    mu_v_squared: m.optimal_constant()? / dt,
                    time_unit: dt,
                },
                microbin: None,
            })
        }
        "ising" => {
            spec.check_keys(&["side", "beta", "above", "below", "samples", "seed", "updates"])?;
            let side: usize = spec.number("side", None)?;
            let beta: f64 = spec.number("beta", None)?;
            let samples: usize = spec.number("samples", Some(10_000))?;
            let seed: u64 = spec.number("seed", Some(0))?;
            let updates: usize = spec.number("updates", Some(DEFAULT_UPDATES_PER_STEP))?;
            let kernel = IsingKernel::new(side, beta, updates)?;
            let (label, model) = match (spec.params.get("above"), spec.params.get("below")) {
                (Some(_), None) => {
                    let level: f64 = spec.number("above", None)?;
                    let m = MicrobinModel::estimate(&kernel, samples, &Streams::new(seed), |m| {
                        (m.abs() > level) as u8 as f64
                    })?;
                    (format!("|m|>{level}"), m)
                }
                (None, Some(_)) => {
                    let level: f64 = spec.number("below", None)?;
                    let m = MicrobinModel::estimate(&kernel, samples, &Streams::new(seed), |m| {
                        (m.abs() < level) as u8 as f64
                    })?;
                    (format!("|m|<{level}"), m)
                }
                _ => bail!(ConfigError("model `ising` needs exactly one of `above` or `below`".into())),
            };
            Ok(Analysis {
                row: microbin_row(format!("ising L={side} beta={beta} {label}"), &model),
                microbin: Some(model),
            })
        }
        "microbin" => {
            let file = spec.params.get("file").filter(|f| !f.is_empty()).ok_or_else(|| {
                ConfigError("model `microbin` needs a file: microbin:<path>".into())
            })?;
            let text = std::fs::read_to_string(file).with_context(|| format!("reading {file}"))?;
            let model: MicrobinModel =
                serde_json::from_str(&text).map_err(|e| ConfigError(format!("{file}: {e}")))?;
            Ok(Analysis {
                row: microbin_row(format!("microbin {file}"), &model),
                microbin: Some(model),
            })
        }
        other => Err(anyhow!(ConfigError(format!(
            "unknown model `{other}`; expected geometric, ou, ising or microbin"
        )))),
    }
}

fn microbin_row(model: String, m: &MicrobinModel) -> Row {
    Row {
        model,
        mu_f: m.model.mean_observable(),
        mu_v2: m.model.mean_square_variance(),
        mu_v_squared: m.model.mean_variance().powi(2),
        time_unit: 1.0,
    }
}

pub fn save_model(path: &Path, model: &MicrobinModel) -> Result<()> {
    let text = serde_json::to_string_pretty(model)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
