//! Weighted particle ensembles and the splitting / evolution loop.

use serde::{Deserialize, Serialize};

use crate::allocation::AllocationPolicy;
use crate::binning::{partition, BinnedEnsemble, Partition};
use crate::error::{invalid, Error, Result};
use crate::kernels::Kernel;
use crate::resampling::{multinomial_counts, ResamplingScheme};
use crate::rng::{Lane, StreamRng, Streams};
use crate::sum::compensated_sum;

/// Weight sums may drift by this much per thousand steps before a run is aborted.
pub const WEIGHT_DRIFT_PER_1000_STEPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble<S> {
    states: Vec<S>,
    weights: Vec<f64>,
    step: usize,
}

impl<S> ParticleEnsemble<S> {
    pub fn new(states: Vec<S>, weights: Vec<f64>) -> Result<Self> {
        if states.is_empty() {
            return Err(invalid("states", "an ensemble needs at least one particle"));
        }
        if states.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} states but {} weights",
                states.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(invalid("weights", format!("weights must be finite and nonnegative, got {w}")));
        }
        Ok(Self { states, weights, step: 0 })
    }

    /// Equal weights `1/N`.
    pub fn uniform(states: Vec<S>) -> Result<Self> {
        let n = states.len();
        Self::new(states, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn weight_sum(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    /// `sum_i w_i f(x_i)`.
    pub fn observe<F: Fn(&S) -> f64 + ?Sized>(&self, f: &F) -> f64 {
        compensated_sum(self.states.iter().zip(&self.weights).map(|(s, w)| w * f(s)))
    }
}

/// Realised split of one ensemble.
///
/// Parent `order[k]` is copied `children[order[k]]` times, each copy carrying
/// `child_weights[order[k]]`. Parents absent from `order` or with no children
/// are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub mean_children: Vec<f64>,
    pub children: Vec<usize>,
    pub child_weights: Vec<f64>,
    pub order: Vec<usize>,
}

impl SplitPlan {
    /// Children of parent `i` receive `w_i / C_i`.
    pub fn generic(weights: &[f64], mean_children: Vec<f64>, children: Vec<usize>) -> Result<Self> {
        let n = weights.len();
        if mean_children.len() != n || children.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} parents, {} mean counts, {} realised counts",
                mean_children.len(),
                children.len()
            )));
        }
        let mut child_weights = Vec::with_capacity(n);
        for i in 0..n {
            let c = mean_children[i];
            if !(c >= 0.0) || !c.is_finite() {
                return Err(invalid("mean_children", format!("mean counts must be finite and nonnegative, got {c}")));
            }
            if c == 0.0 && children[i] > 0 {
                return Err(invalid("children", format!("parent {i} has zero mean count but {} children", children[i])));
            }
            child_weights.push(if c > 0.0 { weights[i] / c } else { 0.0 });
        }
        Ok(Self {
            mean_children,
            children,
            child_weights,
            order: (0..n).collect(),
        })
    }

    /// Children in bin `u` all receive `w(u) / N(u)`; parents are visited bin by bin.
    ///
    /// `counts[b]` lists the realised counts of the members of the `b`-th occupied bin.
    pub fn weighted_ensemble(
        binned: &BinnedEnsemble,
        weights: &[f64],
        budgets: &[usize],
        counts: &[Vec<usize>],
    ) -> Result<Self> {
        let bins = binned.bins();
        if budgets.len() != bins.len() || counts.len() != bins.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} bins, {} budgets, {} count vectors",
                bins.len(),
                budgets.len(),
                counts.len()
            )));
        }
        let n = weights.len();
        let mut plan = Self {
            mean_children: vec![0.0; n],
            children: vec![0; n],
            child_weights: vec![0.0; n],
            order: Vec::with_capacity(n),
        };
        for ((bin, &budget), c) in bins.iter().zip(budgets).zip(counts) {
            if c.len() != bin.members.len() {
                return Err(Error::DimensionMismatch(format!(
                    "bin {} has {} members but {} counts",
                    bin.id,
                    bin.members.len(),
                    c.len()
                )));
            }
            if budget == 0 || !(bin.weight > 0.0) {
                return Err(Error::EmptyBin { bin: bin.id });
            }
            let realised: usize = c.iter().sum();
            if realised != budget {
                return Err(invalid(
                    "counts",
                    format!("bin {} received {realised} children against a budget of {budget}", bin.id),
                ));
            }
            let child_weight = bin.weight / budget as f64;
            for (&i, &k) in bin.members.iter().zip(c) {
                plan.mean_children[i] = budget as f64 * weights[i] / bin.weight;
                plan.children[i] = k;
                plan.child_weights[i] = child_weight;
                plan.order.push(i);
            }
        }
        Ok(plan)
    }

    pub fn total_children(&self) -> usize {
        self.order.iter().map(|&i| self.children[i]).sum()
    }
}

/// Replaces each parent by its children.
pub fn splitting_step<S: Clone>(ensemble: &ParticleEnsemble<S>, plan: &SplitPlan) -> Result<ParticleEnsemble<S>> {
    let n = ensemble.len();
    if plan.children.len() != n || plan.child_weights.len() != n || plan.order.iter().any(|&i| i >= n) {
        return Err(Error::DimensionMismatch(format!(
            "plan covers {} parents, ensemble has {n}",
            plan.children.len()
        )));
    }
    let total = plan.total_children();
    if total == 0 {
        return Err(Error::Extinct { step: ensemble.step });
    }
    let mut states = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    for &i in &plan.order {
        for _ in 0..plan.children[i] {
            states.push(ensemble.states[i].clone());
            weights.push(plan.child_weights[i]);
        }
    }
    Ok(ParticleEnsemble {
        states,
        weights,
        step: ensemble.step,
    })
}

/// Advances every particle by one kernel application using stream
/// `(Evolve, step, slot)`; weights are untouched and the step counter increments.
pub fn evolution_step<K: Kernel>(ensemble: &mut ParticleEnsemble<K::State>, kernel: &K, streams: &Streams) {
    let step = ensemble.step as u64;
    for (i, s) in ensemble.states.iter_mut().enumerate() {
        let mut rng = streams.stream(Lane::Evolve, step, i as u64);
        kernel.evolve(s, &mut rng);
    }
    ensemble.step += 1;
}

/// Same result as [`evolution_step`], with particles spread over the rayon pool.
#[cfg(feature = "parallel")]
pub fn par_evolution_step<K: Kernel>(ensemble: &mut ParticleEnsemble<K::State>, kernel: &K, streams: &Streams) {
    use rayon::prelude::*;
    let step = ensemble.step as u64;
    ensemble.states.par_iter_mut().enumerate().for_each(|(i, s)| {
        let mut rng = streams.stream(Lane::Evolve, step, i as u64);
        kernel.evolve(s, &mut rng);
    });
    ensemble.step += 1;
}

fn evolve_ensemble<K: Kernel>(ensemble: &mut ParticleEnsemble<K::State>, kernel: &K, streams: &Streams, parallel: bool) {
    #[cfg(feature = "parallel")]
    if parallel {
        par_evolution_step(ensemble, kernel, streams);
        return;
    }
    let _ = parallel;
    evolution_step(ensemble, kernel, streams);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub particles: usize,
    /// Recorded steps after burn-in.
    pub steps: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default)]
    pub scheme: ResamplingScheme,
    pub seed: u64,
    #[serde(default)]
    pub parallel_evolution: bool,
}

impl RunConfig {
    pub fn new(particles: usize, steps: usize, seed: u64) -> Self {
        Self {
            particles,
            steps,
            burn_in: 0,
            scheme: ResamplingScheme::default(),
            seed,
            parallel_evolution: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(invalid("particles", "must be at least 1"));
        }
        if self.steps == 0 {
            return Err(invalid("steps", "must be at least 1"));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.burn_in + self.steps
    }

    fn drift_tolerance(&self) -> f64 {
        WEIGHT_DRIFT_PER_1000_STEPS * self.total_steps().div_ceil(1000) as f64
    }
}

/// Per-step record of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    /// `sum_i w_t^i f(x_t^i)` for the recorded (post burn-in) steps.
    pub observables: Vec<f64>,
    /// `sum_i w_t^i` for every step including burn-in.
    pub weight_sums: Vec<f64>,
    pub burn_in: usize,
    pub particles: usize,
    pub seed: u64,
    /// Step at which every particle was killed, if that happened.
    pub extinct_at: Option<usize>,
    /// Largest `|sum_i w_t^i - 1|` seen.
    pub max_weight_drift: f64,
}

impl RunTrace {
    fn start(config: &RunConfig) -> Self {
        Self {
            observables: Vec::with_capacity(config.steps),
            weight_sums: Vec::with_capacity(config.total_steps()),
            burn_in: config.burn_in,
            particles: config.particles,
            seed: config.seed,
            extinct_at: None,
            max_weight_drift: 0.0,
        }
    }

    fn record<S, F: Fn(&S) -> f64 + ?Sized>(&mut self, ensemble: &ParticleEnsemble<S>, observable: &F) {
        let t = self.weight_sums.len();
        let ws = ensemble.weight_sum();
        self.max_weight_drift = self.max_weight_drift.max((ws - 1.0).abs());
        self.weight_sums.push(ws);
        if t >= self.burn_in {
            self.observables.push(ensemble.observe(observable));
        }
    }

    /// `(1/T) sum_t g_t` over the recorded steps.
    pub fn time_average(&self) -> f64 {
        crate::estimators::time_average(&self.observables)
    }

    pub fn final_weight_sum(&self) -> f64 {
        self.weight_sums.last().copied().unwrap_or(0.0)
    }
}

/// Kernel, observable and initial law of one experiment.
pub struct Problem<'a, K: Kernel> {
    pub kernel: &'a K,
    pub observable: &'a (dyn Fn(&K::State) -> f64 + Sync),
    /// Draws one initial state; particle `i` uses stream `(Initial, 0, i)`.
    pub initial: &'a (dyn Fn(&mut StreamRng) -> K::State + Sync),
}

/// Bins and budgets of a weighted-ensemble run.
pub struct Binning<'a, S> {
    pub partition: &'a dyn Partition<S>,
    pub policy: AllocationPolicy,
    /// Approximate variance function used by the optimal and floored policies.
    pub value: Option<&'a (dyn Fn(&S) -> f64 + Sync)>,
}

fn initial_ensemble<K: Kernel>(problem: &Problem<'_, K>, particles: usize, streams: &Streams) -> Result<ParticleEnsemble<K::State>> {
    let states = (0..particles)
        .map(|i| (problem.initial)(&mut streams.stream(Lane::Initial, 0, i as u64)))
        .collect();
    ParticleEnsemble::uniform(states)
}

/// One weighted-ensemble splitting step: partition, allocate, resample within bins.
pub fn we_split<S: Clone>(
    ensemble: &ParticleEnsemble<S>,
    binning: &Binning<'_, S>,
    particles: usize,
    scheme: ResamplingScheme,
    streams: &Streams,
) -> Result<ParticleEnsemble<S>> {
    let binned = partition(&ensemble.states, &ensemble.weights, binning.partition);
    let bin_weights = binned.weights();
    let products = if binning.policy.needs_values() {
        let value = binning
            .value
            .ok_or_else(|| invalid("value", "this allocation policy needs a value function"))?;
        let v: Vec<f64> = ensemble.states.iter().map(value).collect();
        binned.weighted_sums(&ensemble.weights, &v)
    } else {
        Vec::new()
    };
    let budgets = binning.policy.allocate(&bin_weights, &products, particles)?;
    let step = ensemble.step as u64;
    let counts = binned
        .bins()
        .iter()
        .zip(&budgets)
        .map(|(bin, &budget)| {
            let w: Vec<f64> = bin.members.iter().map(|&i| ensemble.weights[i]).collect();
            let mut rng = streams.stream(Lane::Resample, step, bin.id as u64);
            scheme.bin_counts(&w, budget, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let plan = SplitPlan::weighted_ensemble(&binned, &ensemble.weights, &budgets, &counts)?;
    splitting_step(ensemble, &plan)
}

/// Weighted-ensemble run of `burn_in + steps` steps.
///
/// Each step records the ensemble, then partitions, allocates, resamples within
/// bins and evolves. The weight sum is never renormalised; drift beyond
/// [`WEIGHT_DRIFT_PER_1000_STEPS`] per thousand steps aborts the run.
pub fn we_run<K: Kernel>(
    problem: &Problem<'_, K>,
    binning: &Binning<'_, K::State>,
    config: &RunConfig,
) -> Result<RunTrace> {
    config.validate()?;
    if !config.scheme.is_binned() {
        return Err(invalid("scheme", "weighted-ensemble runs need a binned resampling scheme"));
    }
    let streams = Streams::new(config.seed);
    let tolerance = config.drift_tolerance();
    let mut trace = RunTrace::start(config);
    let mut ensemble = initial_ensemble(problem, config.particles, &streams)?;
    let total = config.total_steps();
    for t in 0..total {
        trace.record(&ensemble, problem.observable);
        let drift = (ensemble.weight_sum() - 1.0).abs();
        if drift > tolerance {
            return Err(Error::WeightDrift { step: t, drift });
        }
        if t + 1 == total {
            break;
        }
        ensemble = we_split(&ensemble, binning, config.particles, config.scheme, &streams)?;
        evolve_ensemble(&mut ensemble, problem.kernel, &streams, config.parallel_evolution);
    }
    Ok(trace)
}

/// Mean child counts `N w_i I(x_i) / sum_j w_j I(x_j)` for an importance function `I > 0`.
pub fn importance_mean_counts(weights: &[f64], importance: &[f64], particles: usize) -> Result<Vec<f64>> {
    if weights.len() != importance.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights but {} importances",
            weights.len(),
            importance.len()
        )));
    }
    let total = compensated_sum(weights.iter().zip(importance).map(|(w, i)| w * i));
    if !(total > 0.0) {
        return Err(invalid("importance", "weighted importance sums to zero"));
    }
    Ok(weights
        .iter()
        .zip(importance)
        .map(|(w, i)| particles as f64 * w * i / total)
        .collect())
}

/// Splitting without bins.
///
/// `mean_counts` maps the current ensemble to mean child counts summing to the
/// particle count. Multinomial resampling draws all children jointly; the
/// binned schemes are applied to the whole ensemble as a single group with
/// the mean counts as weights. The weight sum is free to wander. If every
/// particle is killed the trace ends early with `extinct_at` set.
pub fn generic_splitting_run<K: Kernel>(
    problem: &Problem<'_, K>,
    mean_counts: &(dyn Fn(&ParticleEnsemble<K::State>) -> Result<Vec<f64>> + Sync),
    config: &RunConfig,
) -> Result<RunTrace> {
    config.validate()?;
    let streams = Streams::new(config.seed);
    let mut trace = RunTrace::start(config);
    let mut ensemble = initial_ensemble(problem, config.particles, &streams)?;
    let total = config.total_steps();
    for t in 0..total {
        trace.record(&ensemble, problem.observable);
        if t + 1 == total {
            break;
        }
        let c = mean_counts(&ensemble)?;
        let mut rng = streams.stream(Lane::Resample, t as u64, 0);
        let children = match config.scheme {
            ResamplingScheme::Multinomial => multinomial_counts(&c, config.particles, &mut rng)?,
            scheme => scheme.bin_counts(&c, config.particles, &mut rng)?,
        };
        let plan = SplitPlan::generic(&ensemble.weights, c, children)?;
        ensemble = match splitting_step(&ensemble, &plan) {
            Ok(e) => e,
            Err(Error::Extinct { .. }) => {
                trace.extinct_at = Some(t);
                return Ok(trace);
            }
            Err(e) => return Err(e),
        };
        evolve_ensemble(&mut ensemble, problem.kernel, &streams, config.parallel_evolution);
    }
    Ok(trace)
}

/// Single Markov chain using slot `chain` of the evolution streams.
///
/// With `chain = 0` this reproduces a one-particle weighted-ensemble run with the
/// same seed.
pub fn mcmc_chain<K: Kernel>(problem: &Problem<'_, K>, steps: usize, burn_in: usize, seed: u64, chain: u64) -> Result<RunTrace> {
    let config = RunConfig {
        particles: 1,
        steps,
        burn_in,
        scheme: ResamplingScheme::default(),
        seed,
        parallel_evolution: false,
    };
    config.validate()?;
    let streams = Streams::new(seed);
    let mut state = (problem.initial)(&mut streams.stream(Lane::Initial, 0, chain));
    let mut trace = RunTrace::start(&config);
    let total = config.total_steps();
    for t in 0..total {
        trace.weight_sums.push(1.0);
        if t >= burn_in {
            trace.observables.push((problem.observable)(&state));
        }
        if t + 1 == total {
            break;
        }
        let mut rng = streams.stream(Lane::Evolve, t as u64, chain);
        problem.kernel.evolve(&mut state, &mut rng);
    }
    Ok(trace)
}

pub fn mcmc_run<K: Kernel>(problem: &Problem<'_, K>, steps: usize, burn_in: usize, seed: u64) -> Result<RunTrace> {
    mcmc_chain(problem, steps, burn_in, seed, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::{IntegerLevels, PerParticle, SingleBin};
    use crate::kernels::{AutoregressiveChain, GeometricChain};
    use rand::Rng;

    struct Frozen;

    impl Kernel for Frozen {
        type State = f64;
        fn evolve<R: Rng + ?Sized>(&self, _state: &mut f64, _rng: &mut R) {}
    }

    fn zero_start(_: &mut StreamRng) -> u64 {
        0
    }

    #[test]
    fn one_parent_two_children() {
        let e = ParticleEnsemble::new(vec![7u64], vec![1.0]).unwrap();
        let plan = SplitPlan::generic(e.weights(), vec![2.0], vec![2]).unwrap();
        let out = splitting_step(&e, &plan).unwrap();
        assert_eq!(out.states(), &[7, 7]);
        assert_eq!(out.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn identity_split() {
        let e = ParticleEnsemble::new(vec![1u64, 2, 3], vec![0.2, 0.3, 0.5]).unwrap();
        let plan = SplitPlan::generic(e.weights(), vec![1.0; 3], vec![1; 3]).unwrap();
        assert_eq!(splitting_step(&e, &plan).unwrap(), e);
    }

    #[test]
    fn we_single_bin_gives_uniform_children() {
        let e = ParticleEnsemble::new(vec![1u64, 2, 3], vec![0.1, 0.6, 0.3]).unwrap();
        let binned = partition(e.states(), e.weights(), &SingleBin);
        let plan = SplitPlan::weighted_ensemble(&binned, e.weights(), &[4], &[vec![0, 3, 1]]).unwrap();
        let out = splitting_step(&e, &plan).unwrap();
        assert_eq!(out.states(), &[2, 2, 2, 3]);
        assert!(out.weights().iter().all(|&w| (w - 0.25).abs() < 1e-16));
    }

    #[test]
    fn plan_and_ensemble_must_match() {
        let e = ParticleEnsemble::new(vec![1u64, 2], vec![0.5, 0.5]).unwrap();
        let plan = SplitPlan::generic(&[1.0], vec![1.0], vec![1]).unwrap();
        assert!(matches!(splitting_step(&e, &plan), Err(Error::DimensionMismatch(_))));
        let dead = SplitPlan::generic(e.weights(), vec![1.0, 1.0], vec![0, 0]).unwrap();
        assert!(matches!(splitting_step(&e, &dead), Err(Error::Extinct { .. })));
    }

    #[test]
    fn evolution_keeps_weights() {
        let mut e = ParticleEnsemble::new(vec![0.5, -1.0, 2.0], vec![0.2, 0.3, 0.5]).unwrap();
        let before = e.clone();
        evolution_step(&mut e, &Frozen, &Streams::new(1));
        assert_eq!(e.states(), before.states());
        assert_eq!(e.weights(), before.weights());
        assert_eq!(e.step(), 1);

        let mut e = ParticleEnsemble::new(vec![0.5, -1.0, 2.0], vec![0.2, 0.3, 0.5]).unwrap();
        evolution_step(&mut e, &AutoregressiveChain::new(0.1).unwrap(), &Streams::new(1));
        assert_eq!(e.weights(), &[0.2, 0.3, 0.5]);
    }

    #[test]
    fn evolution_with_forced_coins() {
        // Find a seed whose streams flip (up, down) for slots (0, 1) at step 0.
        let seed = (0..)
            .find(|&seed| {
                let s = Streams::new(seed);
                let up = crate::kernels::geometric_step(3, &mut s.stream(Lane::Evolve, 0, 0)) == 4;
                let down = crate::kernels::geometric_step(5, &mut s.stream(Lane::Evolve, 0, 1)) == 0;
                up && down
            })
            .unwrap();
        let mut e = ParticleEnsemble::new(vec![3u64, 5], vec![0.4, 0.6]).unwrap();
        evolution_step(&mut e, &GeometricChain, &Streams::new(seed));
        assert_eq!(e.states(), &[4, 0]);
        assert_eq!(e.weights(), &[0.4, 0.6]);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_evolution_matches_serial() {
        let k = AutoregressiveChain::new(0.05).unwrap();
        let streams = Streams::new(9);
        let start = ParticleEnsemble::uniform((0..257).map(|i| i as f64 / 100.0).collect()).unwrap();
        let mut a = start.clone();
        let mut b = start;
        for _ in 0..20 {
            evolution_step(&mut a, &k, &streams);
            par_evolution_step(&mut b, &k, &streams);
        }
        assert_eq!(a, b);
    }

    #[test]
    fn constant_observable_is_exact() {
        let obs = |_: &u64| 0.37;
        let problem = Problem {
            kernel: &GeometricChain,
            observable: &obs,
            initial: &zero_start,
        };
        let binning = Binning {
            partition: &SingleBin,
            policy: AllocationPolicy::Uniform,
            value: None,
        };
        let trace = we_run(&problem, &binning, &RunConfig::new(20, 300, 4)).unwrap();
        assert_eq!(trace.observables.len(), 300);
        assert!(trace.observables.iter().all(|&g| (g - 0.37).abs() < 1e-15));
        assert!((trace.time_average() - 0.37).abs() < 1e-15);
    }

    #[test]
    fn one_particle_is_plain_mcmc() {
        let obs = |x: &u64| *x as f64;
        let problem = Problem {
            kernel: &GeometricChain,
            observable: &obs,
            initial: &zero_start,
        };
        let binning = Binning {
            partition: &IntegerLevels { cut: 10 },
            policy: AllocationPolicy::Optimal,
            value: Some(&|x: &u64| 1.0 + *x as f64),
        };
        let mut config = RunConfig::new(1, 500, 77);
        config.burn_in = 13;
        let we = we_run(&problem, &binning, &config).unwrap();
        let chain = mcmc_run(&problem, 500, 13, 77).unwrap();
        assert_eq!(we.observables, chain.observables);
        assert!(we.observables.iter().any(|&g| g > 0.0));
    }

    #[test]
    fn per_particle_bins_are_independent_chains() {
        let obs = |x: &u64| *x as f64;
        let problem = Problem {
            kernel: &GeometricChain,
            observable: &obs,
            initial: &zero_start,
        };
        let binning = Binning {
            partition: &PerParticle,
            policy: AllocationPolicy::Uniform,
            value: None,
        };
        let n = 6;
        let we = we_run(&problem, &binning, &RunConfig::new(n, 200, 5)).unwrap();
        let chains: Vec<RunTrace> = (0..n as u64).map(|c| mcmc_chain(&problem, 200, 0, 5, c).unwrap()).collect();
        for t in 0..200 {
            let mean: f64 = chains.iter().map(|c| c.observables[t]).sum::<f64>() / n as f64;
            assert!((we.observables[t] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn we_rejects_global_multinomial() {
        let obs = |x: &u64| *x as f64;
        let problem = Problem {
            kernel: &GeometricChain,
            observable: &obs,
            initial: &zero_start,
        };
        let binning = Binning {
            partition: &SingleBin,
            policy: AllocationPolicy::Uniform,
            value: None,
        };
        let mut config = RunConfig::new(4, 10, 1);
        config.scheme = ResamplingScheme::Multinomial;
        assert!(we_run(&problem, &binning, &config).is_err());
    }

    #[test]
    fn fine_mesh_with_few_particles() {
        let obs = |x: &f64| *x;
        let start = |rng: &mut StreamRng| rng.random::<f64>();
        let problem = Problem {
            kernel: &Frozen,
            observable: &obs,
            initial: &start,
        };
        let mesh = crate::binning::IntervalMesh::new(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]).unwrap();
        let binning = Binning {
            partition: &mesh,
            policy: AllocationPolicy::Uniform,
            value: None,
        };
        let r = we_run(&problem, &binning, &RunConfig::new(50, 10, 1));
        assert!(r.is_ok());
        // Occupied bins never outnumber particles, so every bin keeps a child.
        let r = we_run(&problem, &binning, &RunConfig::new(3, 10, 1)).unwrap();
        assert!((r.final_weight_sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_counts_keep_unit_weight() {
        let obs = |x: &u64| *x as f64;
        let problem = Problem {
            kernel: &GeometricChain,
            observable: &obs,
            initial: &zero_start,
        };
        let ones = |e: &ParticleEnsemble<u64>| -> Result<Vec<f64>> { Ok(vec![1.0; e.len()]) };
        let mut config = RunConfig::new(8, 500, 2);
        config.scheme = ResamplingScheme::BinnedResidual;
        let trace = generic_splitting_run(&problem, &ones, &config).unwrap();
        assert!(trace.weight_sums.iter().all(|&w| (w - 1.0).abs() < 1e-15));
        assert_eq!(trace.extinct_at, None);
    }

    #[test]
    fn importance_counts_sum_to_particles() {
        let c = importance_mean_counts(&[0.25, 0.25, 0.5], &[1.0, 2.0, 3.0], 10).unwrap();
        assert!((c.iter().sum::<f64>() - 10.0).abs() < 1e-12);
        assert!((c[2] / c[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn runs_are_reproducible() {
        let obs = |x: &f64| (*x > 1.0) as u8 as f64;
        let start = |rng: &mut StreamRng| rng.sample::<f64, _>(rand_distr::StandardNormal);
        let kernel = AutoregressiveChain::new(0.1).unwrap();
        let problem = Problem {
            kernel: &kernel,
            observable: &obs,
            initial: &start,
        };
        let mesh = crate::binning::IntervalMesh::new(&[-1.0, 0.0, 0.5, 1.0, 1.5]).unwrap();
        let value = |x: &f64| x.abs();
        let binning = Binning {
            partition: &mesh,
            policy: AllocationPolicy::Optimal,
            value: Some(&value),
        };
        let mut config = RunConfig::new(30, 100, 11);
        let a = we_run(&problem, &binning, &config).unwrap();
        config.parallel_evolution = true;
        let b = we_run(&problem, &binning, &config).unwrap();
        assert_eq!(a, b);
        assert!(a.max_weight_drift < 1e-13);
    }
}
