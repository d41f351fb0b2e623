//! Experiment files: TOML, or JSON when the extension is `.json`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use weighted_ensemble::allocation::AllocationPolicy;
use weighted_ensemble::binning::PartitionSpec;
use weighted_ensemble::resampling::ResamplingScheme;

/// A problem with the experiment file; reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn field_error(field: &str, reason: impl fmt::Display) -> ConfigError {
    ConfigError(format!("field `{field}`: {reason}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    #[serde(default = "one")]
    pub replicates: u64,
    #[serde(default)]
    pub seed: u64,
    pub kernel: KernelConfig,
    pub observable: ObservableConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    pub run: RunBlock,
    pub splitting: SplittingConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    /// Particle counts for `emit-figure-data`; `run` executes each of them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<usize>>,
    /// Record every `stride`-th weight sum in `collapse-demo` output.
    #[serde(default = "one_usize")]
    pub stride: usize,
}

fn one() -> u64 {
    1
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Geometric,
    Ar1 {
        dt: f64,
    },
    Ising {
        side: usize,
        beta: f64,
        #[serde(default = "default_updates")]
        updates_per_step: usize,
    },
}

fn default_updates() -> usize {
    weighted_ensemble::kernels::DEFAULT_UPDATES_PER_STEP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableConfig {
    /// `1{x >= threshold}`.
    Tail { threshold: f64 },
    /// `1{|m| > level}`.
    MagnetizationAbove { level: f64 },
    /// `1{|m| < level}`.
    MagnetizationBelow { level: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    /// The invariant law (uniform spins for the lattice).
    #[default]
    Stationary,
    /// Every particle at one point of the line or integers.
    Point { value: f64 },
    /// One uniformly drawn lattice shared by every particle.
    SharedUniform,
    /// All spins down.
    AllDown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub particles: usize,
    pub steps: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default)]
    pub scheme: ResamplingScheme,
    #[serde(default)]
    pub parallel_evolution: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplittingConfig {
    We {
        partition: PartitionConfig,
        #[serde(default)]
        allocation: AllocationPolicy,
    },
    /// Splitting without bins, mean child counts proportional to `w * importance`.
    Generic { importance: ImportanceConfig },
    /// Independent chains, one per particle, averaged.
    Mcmc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PartitionConfig {
    Fixed(PartitionSpec),
    Derived(DerivedPartition),
}

/// Partitions computed from the problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DerivedPartition {
    /// Approximate level sets of the Poisson solution on `[first, last]`.
    OuMesh { first: f64, last: f64, tolerance: f64 },
    /// Magnetization cells with centers `-1, -1 + step, ..., 1`.
    VoronoiStep { step: f64 },
}

/// Importance as a function of the scalar coordinate (`x`, or `|m|` on a lattice).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImportanceConfig {
    Uniform,
    /// `high` at or above `at`, `low` below.
    Step { at: f64, low: f64, high: f64 },
    /// `base^x`.
    Exponential { base: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Lag window for the IAT variance; first nonpositive autocovariance when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iat_lag: Option<usize>,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default = "default_microbin")]
    pub microbin_samples: usize,
}

fn default_resamples() -> usize {
    weighted_ensemble::estimators::DEFAULT_BOOTSTRAP_RESAMPLES
}

fn default_microbin() -> usize {
    10_000
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            iat_lag: None,
            bootstrap_resamples: default_resamples(),
            microbin_samples: default_microbin(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let config = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
        .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.id.is_empty() || !self.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(field_error("id", "use letters, digits, '_' or '-'"));
        }
        if self.replicates == 0 {
            return Err(field_error("replicates", "must be at least 1"));
        }
        if self.run.particles == 0 {
            return Err(field_error("run.particles", "must be at least 1"));
        }
        if self.run.steps == 0 {
            return Err(field_error("run.steps", "must be at least 1"));
        }
        if self.stride == 0 {
            return Err(field_error("stride", "must be at least 1"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.is_empty() || sweep.contains(&0) {
                return Err(field_error("sweep", "needs positive particle counts"));
            }
        }
        match (&self.kernel, &self.observable) {
            (KernelConfig::Geometric, ObservableConfig::Tail { threshold }) => {
                if *threshold < 0.0 || threshold.fract() != 0.0 {
                    return Err(field_error("observable.threshold", "must be a nonnegative integer for the geometric chain"));
                }
            }
            (KernelConfig::Ar1 { dt }, ObservableConfig::Tail { .. }) => {
                if !(*dt > 0.0) {
                    return Err(field_error("kernel.dt", "must be positive"));
                }
            }
            (KernelConfig::Ising { side, beta, updates_per_step }, ObservableConfig::MagnetizationAbove { .. })
            | (KernelConfig::Ising { side, beta, updates_per_step }, ObservableConfig::MagnetizationBelow { .. }) => {
                if *side == 0 || !beta.is_finite() || *updates_per_step == 0 {
                    return Err(field_error("kernel", "ising needs side >= 1, finite beta and updates_per_step >= 1"));
                }
            }
            _ => return Err(field_error("observable", "does not match the kernel type")),
        }
        match (&self.kernel, &self.initial) {
            (_, InitialConfig::Stationary) => {}
            (KernelConfig::Geometric, InitialConfig::Point { value }) if *value >= 0.0 && value.fract() == 0.0 => {}
            (KernelConfig::Ar1 { .. }, InitialConfig::Point { value }) if value.is_finite() => {}
            (KernelConfig::Ising { .. }, InitialConfig::SharedUniform | InitialConfig::AllDown) => {}
            _ => return Err(field_error("initial", "not available for this kernel")),
        }
        match &self.splitting {
            SplittingConfig::We { partition, allocation } => {
                if !self.run.scheme.is_binned() {
                    return Err(field_error("run.scheme", "weighted ensemble needs a binned scheme"));
                }
                if let AllocationPolicy::DeltaFloored { delta } = allocation {
                    if !(0.0..0.5).contains(delta) {
                        return Err(field_error("splitting.allocation.delta", "must lie in [0, 1/2)"));
                    }
                }
                let fits = match (&self.kernel, partition) {
                    (_, PartitionConfig::Fixed(PartitionSpec::Single | PartitionSpec::PerParticle)) => true,
                    (KernelConfig::Geometric, PartitionConfig::Fixed(PartitionSpec::IntegerLevels { .. })) => true,
                    (KernelConfig::Ar1 { .. }, PartitionConfig::Fixed(PartitionSpec::Mesh { .. })) => true,
                    (KernelConfig::Ar1 { .. }, PartitionConfig::Derived(DerivedPartition::OuMesh { .. })) => true,
                    (KernelConfig::Ising { .. }, PartitionConfig::Fixed(PartitionSpec::VoronoiMagnetization { .. })) => true,
                    (KernelConfig::Ising { .. }, PartitionConfig::Derived(DerivedPartition::VoronoiStep { .. })) => true,
                    _ => false,
                };
                if !fits {
                    return Err(field_error("splitting.partition", "does not apply to this kernel"));
                }
            }
            SplittingConfig::Generic { importance } => match importance {
                ImportanceConfig::Step { low, high, .. } if !(*low > 0.0 && *high > 0.0) => {
                    return Err(field_error("splitting.importance", "step values must be positive"));
                }
                ImportanceConfig::Exponential { base } if !(*base > 0.0) => {
                    return Err(field_error("splitting.importance.base", "must be positive"));
                }
                _ => {}
            },
            SplittingConfig::Mcmc => {}
        }
        if self.analysis.bootstrap_resamples == 0 || self.analysis.microbin_samples == 0 {
            return Err(field_error("analysis", "counts must be positive"));
        }
        Ok(())
    }

    /// Physical length of one step: `dt` for the autoregressive chain, 1 otherwise.
    pub fn step_length(&self) -> f64 {
        match self.kernel {
            KernelConfig::Ar1 { dt } => dt,
            _ => 1.0,
        }
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("configs serialise");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// The same experiment with a different particle count.
    pub fn with_particles(&self, particles: usize) -> Self {
        let mut c = self.clone();
        c.run.particles = particles;
        c.sweep = None;
        c.id = format!("{}_n{particles}", self.id);
        c
    }
}
