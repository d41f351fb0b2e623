//! Builds kernels, partitions and value functions from a config and runs replicates.

use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use weighted_ensemble::allocation::AllocationPolicy;
use weighted_ensemble::analysis::{geometric_model, geometric_value, CoarseModel, MicrobinModel, OuAnalytic};
use weighted_ensemble::binning::{
    IntegerLevels, IntervalMesh, MagnetizationVoronoi, Partition, PartitionSpec, PerParticle, SingleBin,
};
use weighted_ensemble::ensemble::{
    generic_splitting_run, importance_mean_counts, we_run, Binning, ParticleEnsemble, Problem, RunConfig, RunTrace,
};
use weighted_ensemble::estimators::{iat_variance, VarianceReport};
use weighted_ensemble::kernels::{AutoregressiveChain, GeometricChain, IsingKernel, IsingLattice, Kernel};
use weighted_ensemble::rng::{Lane, StreamRng, Streams};

use crate::config::{
    DerivedPartition, ExperimentConfig, ImportanceConfig, InitialConfig, KernelConfig, ObservableConfig,
    PartitionConfig, SplittingConfig,
};

/// Outcome of one replicate.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub id: u64,
    pub seed: u64,
    pub estimate: f64,
    pub final_weight_sum: f64,
    pub iat: VarianceReport,
    pub extinct_at: Option<usize>,
    pub seconds: f64,
    /// Every weight sum, kept only when requested.
    pub weight_sums: Option<Vec<f64>>,
}

/// Problem-level data shared by every replicate.
pub enum Setup {
    Geometric {
        threshold: u64,
        model: CoarseModel,
    },
    Ar1 {
        kernel: AutoregressiveChain,
        analytic: OuAnalytic,
    },
    Ising {
        kernel: IsingKernel,
        observable: fn(f64, f64) -> f64,
        level: f64,
        microbin: Option<MicrobinModel>,
    },
}

fn above(m: f64, level: f64) -> f64 {
    (m.abs() > level) as u8 as f64
}

fn below(m: f64, level: f64) -> f64 {
    (m.abs() < level) as u8 as f64
}

impl Setup {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let needs_values = match &config.splitting {
            SplittingConfig::We { allocation, .. } => allocation.needs_values(),
            _ => false,
        };
        Ok(match (&config.kernel, &config.observable) {
            (KernelConfig::Geometric, ObservableConfig::Tail { threshold }) => {
                let threshold = *threshold as u64;
                Setup::Geometric {
                    threshold,
                    model: geometric_model(threshold)?,
                }
            }
            (KernelConfig::Ar1 { dt }, ObservableConfig::Tail { threshold }) => Setup::Ar1 {
                kernel: AutoregressiveChain::new(*dt)?,
                analytic: OuAnalytic::new(*threshold, *dt)?,
            },
            (KernelConfig::Ising { side, beta, updates_per_step }, obs) => {
                let kernel = IsingKernel::new(*side, *beta, *updates_per_step)?;
                let (observable, level): (fn(f64, f64) -> f64, f64) = match obs {
                    ObservableConfig::MagnetizationAbove { level } => (above, *level),
                    ObservableConfig::MagnetizationBelow { level } => (below, *level),
                    ObservableConfig::Tail { .. } => return Err(anyhow!("tail observables need a scalar chain")),
                };
                let microbin = if needs_values {
                    let streams = Streams::new(config.seed);
                    Some(MicrobinModel::estimate(
                        &kernel,
                        config.analysis.microbin_samples,
                        &streams,
                        |m| observable(m, level),
                    )?)
                } else {
                    None
                };
                Setup::Ising {
                    kernel,
                    observable,
                    level,
                    microbin,
                }
            }
            _ => return Err(anyhow!("observable does not match the kernel")),
        })
    }

    /// `(mu(f), MCMC constant, optimal constant)` per unit of physical time.
    pub fn theory(&self, config: &ExperimentConfig) -> Result<(f64, f64, f64)> {
        Ok(match self {
            Setup::Geometric { model, .. } => (model.mean_observable(), model.mcmc_constant(), model.optimal_constant()),
            Setup::Ar1 { analytic, .. } => {
                let p = analytic.tail_probability();
                (p, analytic.mcmc_constant()? / (p * p), analytic.optimal_constant()? / (p * p))
            }
            Setup::Ising {
                kernel,
                observable,
                level,
                microbin,
            } => {
                let model = match microbin {
                    Some(m) => m.clone(),
                    None => MicrobinModel::estimate(
                        kernel,
                        config.analysis.microbin_samples,
                        &Streams::new(config.seed),
                        |m| observable(m, *level),
                    )?,
                };
                let m = &model.model;
                (m.mean_observable(), m.mcmc_constant(), m.optimal_constant())
            }
        })
    }
}

fn importance_fn(spec: &ImportanceConfig) -> impl Fn(f64) -> f64 + Sync + '_ {
    move |x| match spec {
        ImportanceConfig::Uniform => 1.0,
        ImportanceConfig::Step { at, low, high } => {
            if x >= *at {
                *high
            } else {
                *low
            }
        }
        ImportanceConfig::Exponential { base } => base.powf(x),
    }
}

struct Plan<'a, S> {
    partition: Option<Box<dyn Partition<S> + 'a>>,
    policy: AllocationPolicy,
}

fn execute<K: Kernel>(
    config: &ExperimentConfig,
    run: &RunConfig,
    problem: &Problem<'_, K>,
    plan: Plan<'_, K::State>,
    value: Option<&(dyn Fn(&K::State) -> f64 + Sync)>,
    coordinate: &(dyn Fn(&K::State) -> f64 + Sync),
) -> Result<RunTrace> {
    Ok(match &config.splitting {
        SplittingConfig::Generic { importance } => {
            let imp = importance_fn(importance);
            let counts = |e: &ParticleEnsemble<K::State>| {
                let i: Vec<f64> = e.states().iter().map(|s| imp(coordinate(s))).collect();
                importance_mean_counts(e.weights(), &i, run.particles)
            };
            generic_splitting_run(problem, &counts, run)?
        }
        SplittingConfig::We { .. } | SplittingConfig::Mcmc => {
            let partition = plan.partition.expect("weighted-ensemble plans carry a partition");
            let binning = Binning {
                partition: partition.as_ref(),
                policy: plan.policy,
                value,
            };
            we_run(problem, &binning, run)?
        }
    })
}

fn fixed_partition<'a, S: 'a>(spec: &PartitionSpec) -> Option<Box<dyn Partition<S> + 'a>> {
    match spec {
        PartitionSpec::Single => Some(Box::new(SingleBin)),
        PartitionSpec::PerParticle => Some(Box::new(PerParticle)),
        _ => None,
    }
}

impl Setup {
    fn plan<'a, S: 'a>(
        config: &ExperimentConfig,
        specific: impl FnOnce(&PartitionConfig) -> Result<Box<dyn Partition<S> + 'a>>,
    ) -> Result<Plan<'a, S>> {
        Ok(match &config.splitting {
            SplittingConfig::We { partition, allocation } => {
                let p = match partition {
                    PartitionConfig::Fixed(spec) => match fixed_partition(spec) {
                        Some(p) => p,
                        None => specific(partition)?,
                    },
                    PartitionConfig::Derived(_) => specific(partition)?,
                };
                Plan {
                    partition: Some(p),
                    policy: *allocation,
                }
            }
            // Independent chains: one bin per particle slot, one child each.
            SplittingConfig::Mcmc => Plan {
                partition: Some(Box::new(PerParticle)),
                policy: AllocationPolicy::Uniform,
            },
            SplittingConfig::Generic { .. } => Plan {
                partition: None,
                policy: AllocationPolicy::Uniform,
            },
        })
    }

    pub fn run_replicate(&self, config: &ExperimentConfig, replicate: u64, keep_weights: bool) -> Result<Replicate> {
        let start = Instant::now();
        let seed = Streams::new(config.seed).replicate(replicate).seed();
        let run = RunConfig {
            particles: config.run.particles,
            steps: config.run.steps,
            burn_in: config.run.burn_in,
            scheme: config.run.scheme,
            seed,
            parallel_evolution: config.run.parallel_evolution,
        };
        let trace = match self {
            Setup::Geometric { threshold, model } => {
                let a = *threshold;
                let obs = move |x: &u64| (*x >= a) as u8 as f64;
                let value = |x: &u64| geometric_value(model, *x);
                let point = match config.initial {
                    InitialConfig::Point { value } => Some(value as u64),
                    _ => None,
                };
                let initial = move |rng: &mut StreamRng| match point {
                    Some(x) => x,
                    None => {
                        let mut x = 0;
                        while rng.random::<bool>() {
                            x += 1;
                        }
                        x
                    }
                };
                let problem = Problem {
                    kernel: &GeometricChain,
                    observable: &obs,
                    initial: &initial,
                };
                let plan = Self::plan(config, |p| match p {
                    PartitionConfig::Fixed(PartitionSpec::IntegerLevels { cut }) => {
                        Ok(Box::new(IntegerLevels { cut: *cut }) as Box<dyn Partition<u64>>)
                    }
                    _ => Err(anyhow!("partition does not apply to the geometric chain")),
                })?;
                execute(config, &run, &problem, plan, Some(&value), &|x: &u64| *x as f64)?
            }
            Setup::Ar1 { kernel, analytic } => {
                let a = analytic.threshold();
                let obs = move |x: &f64| (*x >= a) as u8 as f64;
                let value = |x: &f64| analytic.vbar(*x);
                let point = match config.initial {
                    InitialConfig::Point { value } => Some(value),
                    _ => None,
                };
                let initial = move |rng: &mut StreamRng| point.unwrap_or_else(|| rng.sample(StandardNormal));
                let problem = Problem {
                    kernel,
                    observable: &obs,
                    initial: &initial,
                };
                let plan = Self::plan(config, |p| match p {
                    PartitionConfig::Fixed(PartitionSpec::Mesh { points }) => {
                        Ok(Box::new(IntervalMesh::new(points)?) as Box<dyn Partition<f64>>)
                    }
                    PartitionConfig::Derived(DerivedPartition::OuMesh { first, last, tolerance }) => {
                        let points = analytic.mesh(*first, *last, *tolerance)?;
                        Ok(Box::new(IntervalMesh::new(&points)?) as Box<dyn Partition<f64>>)
                    }
                    _ => Err(anyhow!("partition does not apply to the autoregressive chain")),
                })?;
                execute(config, &run, &problem, plan, Some(&value), &|x: &f64| *x)?
            }
            Setup::Ising {
                kernel,
                observable,
                level,
                microbin,
            } => {
                let (f, level) = (*observable, *level);
                let obs = move |l: &IsingLattice| f(l.magnetization(), level);
                let side = kernel.side();
                let shared = match config.initial {
                    InitialConfig::SharedUniform => {
                        let mut rng = Streams::new(seed).stream(Lane::Initial, 1, 0);
                        Some(uniform_lattice(side, &mut rng))
                    }
                    InitialConfig::AllDown => Some(IsingLattice::filled(side, -1)?),
                    _ => None,
                };
                let initial = move |rng: &mut StreamRng| match &shared {
                    Some(l) => l.clone(),
                    None => uniform_lattice(side, rng),
                };
                let problem = Problem {
                    kernel,
                    observable: &obs,
                    initial: &initial,
                };
                let value_fn = microbin.as_ref().map(|m| move |l: &IsingLattice| m.value(l));
                let plan = Self::plan(config, |p| match p {
                    PartitionConfig::Fixed(PartitionSpec::VoronoiMagnetization { centers }) => {
                        Ok(Box::new(MagnetizationVoronoi::new(centers)?) as Box<dyn Partition<IsingLattice>>)
                    }
                    PartitionConfig::Derived(DerivedPartition::VoronoiStep { step }) => {
                        Ok(Box::new(MagnetizationVoronoi::evenly_spaced(*step)?) as Box<dyn Partition<IsingLattice>>)
                    }
                    _ => Err(anyhow!("partition does not apply to the lattice")),
                })?;
                let value = value_fn.as_ref().map(|v| v as &(dyn Fn(&IsingLattice) -> f64 + Sync));
                execute(config, &run, &problem, plan, value, &|l: &IsingLattice| l.magnetization().abs())?
            }
        };
        let iat = iat_variance(&trace.observables, config.analysis.iat_lag)?;
        Ok(Replicate {
            id: replicate,
            seed,
            estimate: trace.time_average(),
            final_weight_sum: trace.final_weight_sum(),
            iat,
            extinct_at: trace.extinct_at,
            seconds: start.elapsed().as_secs_f64(),
            weight_sums: keep_weights.then_some(trace.weight_sums),
        })
    }
}

fn uniform_lattice(side: usize, rng: &mut StreamRng) -> IsingLattice {
    let spins = (0..side * side).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
    IsingLattice::from_spins(side, spins).expect("side is positive")
}

/// Runs every replicate on `threads` workers; results come back in replicate order.
pub fn run_replicates(config: &ExperimentConfig, threads: Option<usize>, keep_weights: bool) -> Result<Vec<Replicate>> {
    let setup = Setup::new(config).context("preparing the experiment")?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().context("starting worker threads")?;
    pool.install(|| {
        (0..config.replicates)
            .into_par_iter()
            .map(|r| {
                setup
                    .run_replicate(config, r, keep_weights)
                    .with_context(|| format!("replicate {r} failed"))
            })
            .collect()
    })
}
