//! Browser bindings: OU value profiles, weight-sum trajectories and geometric-chain runs.
//! Every entry point returns a JSON string.

use rand::Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use weighted_ensemble::allocation::AllocationPolicy;
use weighted_ensemble::analysis::{geometric_model, geometric_value, OuAnalytic};
use weighted_ensemble::binning::IntegerLevels;
use weighted_ensemble::ensemble::{
    generic_splitting_run, importance_mean_counts, we_run, Binning, ParticleEnsemble, Problem, RunConfig,
};
use weighted_ensemble::kernels::GeometricChain;
use weighted_ensemble::resampling::ResamplingScheme;
use weighted_ensemble::rng::{StreamRng, Streams};

const MAX_PARTICLES: usize = 5_000;
const MAX_STEPS: usize = 200_000;

#[derive(Debug, Serialize)]
pub struct OuProfile {
    pub x: Vec<f64>,
    pub vbar: Vec<f64>,
    pub hbar: Vec<f64>,
    pub mesh: Vec<f64>,
    pub tail_probability: f64,
    pub mcmc_constant: f64,
    pub optimal_constant: f64,
}

/// `vbar` and `hbar` on `samples` points of `[first, last]`, plus the value-level mesh.
pub fn ou_profile(threshold: f64, dt: f64, first: f64, last: f64, tolerance: f64, samples: usize) -> Result<OuProfile, String> {
    if !(last > first) || samples < 2 || samples > 10_000 {
        return Err("need first < last and 2..=10000 samples".into());
    }
    let m = OuAnalytic::new(threshold, dt).map_err(|e| e.to_string())?;
    let x: Vec<f64> = (0..samples)
        .map(|i| first + (last - first) * i as f64 / (samples - 1) as f64)
        .collect();
    let vbar = x.iter().map(|&x| m.vbar(x)).collect();
    let hbar = x.iter().map(|&x| m.hbar(x)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let p = m.tail_probability();
    Ok(OuProfile {
        mesh: m.mesh(first, last, tolerance).map_err(|e| e.to_string())?,
        x,
        vbar,
        hbar,
        tail_probability: p,
        mcmc_constant: m.mcmc_constant().map_err(|e| e.to_string())? / (p * p),
        optimal_constant: m.optimal_constant().map_err(|e| e.to_string())? / (p * p),
    })
}

#[derive(Debug, Serialize)]
pub struct Trajectories {
    pub steps: Vec<usize>,
    /// One row per replicate.
    pub weighted_ensemble: Vec<Vec<f64>>,
    pub generic: Vec<Vec<f64>>,
}

fn geometric_start(rng: &mut StreamRng) -> u64 {
    let mut x = 0;
    while rng.random::<bool>() {
        x += 1;
    }
    x
}

fn check_size(particles: usize, steps: usize) -> Result<(), String> {
    if particles == 0 || particles > MAX_PARTICLES || steps == 0 || steps > MAX_STEPS {
        return Err(format!("particles in 1..={MAX_PARTICLES}, steps in 1..={MAX_STEPS}"));
    }
    Ok(())
}

/// Weight sums of binned splitting against generic multinomial splitting with
/// importance 1 at the origin and `boost` elsewhere.
pub fn weight_trajectories(
    particles: usize,
    steps: usize,
    replicates: usize,
    boost: f64,
    stride: usize,
    seed: u64,
) -> Result<Trajectories, String> {
    check_size(particles, steps)?;
    if replicates == 0 || replicates > 200 || stride == 0 || !(boost > 0.0) {
        return Err("replicates in 1..=200, stride >= 1, boost > 0".into());
    }
    let model = geometric_model(5).map_err(|e| e.to_string())?;
    let value = |x: &u64| geometric_value(&model, *x);
    let obs = |x: &u64| (*x >= 5) as u8 as f64;
    let problem = Problem {
        kernel: &GeometricChain,
        observable: &obs,
        initial: &geometric_start,
    };
    let levels = IntegerLevels { cut: 4 };
    let binning = Binning {
        partition: &levels,
        policy: AllocationPolicy::Optimal,
        value: Some(&value),
    };
    let counts = |e: &ParticleEnsemble<u64>| {
        let importance: Vec<f64> = e.states().iter().map(|&x| if x == 0 { 1.0 } else { boost }).collect();
        importance_mean_counts(e.weights(), &importance, particles)
    };
    let sample = |w: Vec<f64>| w.into_iter().step_by(stride).collect::<Vec<_>>();
    let streams = Streams::new(seed);
    let mut out = Trajectories {
        steps: (0..steps).step_by(stride).collect(),
        weighted_ensemble: Vec::new(),
        generic: Vec::new(),
    };
    for r in 0..replicates as u64 {
        let mut config = RunConfig::new(particles, steps, streams.replicate(r).seed());
        let we = we_run(&problem, &binning, &config).map_err(|e| e.to_string())?;
        config.scheme = ResamplingScheme::Multinomial;
        let generic = generic_splitting_run(&problem, &counts, &config).map_err(|e| e.to_string())?;
        out.weighted_ensemble.push(sample(we.weight_sums));
        out.generic.push(sample(generic.weight_sums));
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct GeometricRun {
    pub estimate: f64,
    pub exact: f64,
    pub final_weight_sum: f64,
    /// Running time average of the tail indicator, every `stride` steps.
    pub running: Vec<f64>,
    pub stride: usize,
}

/// One weighted-ensemble run on the geometric chain with optimal allocation.
pub fn geometric_run(threshold: u64, particles: usize, steps: usize, seed: u64) -> Result<GeometricRun, String> {
    check_size(particles, steps)?;
    if threshold == 0 || threshold > 60 {
        return Err("threshold in 1..=60".into());
    }
    let model = geometric_model(threshold).map_err(|e| e.to_string())?;
    let value = |x: &u64| geometric_value(&model, *x);
    let obs = move |x: &u64| (*x >= threshold) as u8 as f64;
    let problem = Problem {
        kernel: &GeometricChain,
        observable: &obs,
        initial: &geometric_start,
    };
    let levels = IntegerLevels { cut: threshold - 1 };
    let binning = Binning {
        partition: &levels,
        policy: AllocationPolicy::Optimal,
        value: Some(&value),
    };
    let trace = we_run(&problem, &binning, &RunConfig::new(particles, steps, seed)).map_err(|e| e.to_string())?;
    let stride = (steps / 500).max(1);
    let mut sum = 0.0;
    let mut running = Vec::new();
    for (t, f) in trace.observables.iter().enumerate() {
        sum += f;
        if t % stride == 0 {
            running.push(sum / (t + 1) as f64);
        }
    }
    Ok(GeometricRun {
        estimate: trace.time_average(),
        exact: 0.5f64.powi(threshold as i32),
        final_weight_sum: trace.final_weight_sum(),
        running,
        stride,
    })
}

fn json<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = ouProfile)]
pub fn ou_profile_js(threshold: f64, dt: f64, first: f64, last: f64, tolerance: f64, samples: usize) -> Result<String, JsValue> {
    json(ou_profile(threshold, dt, first, last, tolerance, samples))
}

#[wasm_bindgen(js_name = weightTrajectories)]
pub fn weight_trajectories_js(
    particles: usize,
    steps: usize,
    replicates: usize,
    boost: f64,
    stride: usize,
    seed: u32,
) -> Result<String, JsValue> {
    json(weight_trajectories(particles, steps, replicates, boost, stride, seed as u64))
}

#[wasm_bindgen(js_name = geometricRun)]
pub fn geometric_run_js(threshold: u32, particles: usize, steps: usize, seed: u32) -> Result<String, JsValue> {
    json(geometric_run(threshold as u64, particles, steps, seed as u64))
}
