//! Time averages and variance estimates from run traces.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sum::{compensated_sum, CompensatedSum};

/// `(1/T) sum g_t`; `NaN` for an empty trace.
pub fn time_average(trace: &[f64]) -> f64 {
    compensated_sum(trace.iter().copied()) / trace.len() as f64
}

/// Prefix means `(1/t) sum_{s<t} g_s` for `t = 1..=T`.
pub fn running_average(trace: &[f64]) -> Vec<f64> {
    let mut acc = CompensatedSum::new();
    trace
        .iter()
        .enumerate()
        .map(|(t, &g)| {
            acc.add(g);
            acc.value() / (t + 1) as f64
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMethod {
    Iat,
    Bootstrap,
    Replicate,
}

impl VarianceMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            VarianceMethod::Iat => "iat",
            VarianceMethod::Bootstrap => "bootstrap",
            VarianceMethod::Replicate => "replicate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub estimate: f64,
    /// Always `>= 0`.
    pub variance: f64,
    pub method: VarianceMethod,
    /// Lag window `L` for IAT, resample count `M` for bootstrap, replicate count otherwise.
    pub auxiliary: usize,
    /// Percentile interval of the bootstrap distribution.
    pub interval: Option<(f64, f64)>,
    /// Set when a negative lag-window sum was clamped to zero.
    pub clamped: bool,
    pub relative_constant: Option<f64>,
}

impl VarianceReport {
    /// Fills in [`relative_variance_constant`]; left empty when the estimate is zero.
    pub fn with_relative_constant(mut self, particles: usize, effective_time: f64) -> Self {
        self.relative_constant = relative_variance_constant(self.variance, particles, effective_time, self.estimate).ok();
        self
    }
}

fn autocovariance(centered: &[f64], lag: usize) -> f64 {
    let t = centered.len();
    compensated_sum(centered[..t - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b)) / t as f64
}

fn centered(trace: &[f64]) -> Vec<f64> {
    let mean = time_average(trace);
    trace.iter().map(|g| g - mean).collect()
}

/// First lag `k >= 1` with `gamma_k <= 0`, or `T - 1` when there is none.
pub fn default_lag(trace: &[f64]) -> usize {
    let t = trace.len();
    if t < 2 {
        return 0;
    }
    let c = centered(trace);
    (1..t).find(|&k| autocovariance(&c, k) <= 0.0).unwrap_or(t - 1)
}

/// Lag-window variance of the time average, `(gamma_0 + 2 sum_{k=1..L} gamma_k) / T`.
///
/// `lag = None` uses [`default_lag`].
pub fn iat_variance(trace: &[f64], lag: Option<usize>) -> Result<VarianceReport> {
    let t = trace.len();
    if t == 0 {
        return Err(invalid("trace", "empty trace"));
    }
    let lag = lag.unwrap_or_else(|| default_lag(trace));
    if lag >= t {
        return Err(invalid("lag", format!("L = {lag} must be below T = {t}")));
    }
    let c = centered(trace);
    let mut sum = CompensatedSum::new();
    sum.add(autocovariance(&c, 0));
    for k in 1..=lag {
        sum.add(2.0 * autocovariance(&c, k));
    }
    let raw = sum.value() / t as f64;
    Ok(VarianceReport {
        estimate: time_average(trace),
        variance: raw.max(0.0),
        method: VarianceMethod::Iat,
        auxiliary: lag,
        interval: None,
        clamped: raw < 0.0,
        relative_constant: None,
    })
}

pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 10_000;

fn sample_variance(xs: &[f64]) -> f64 {
    let m = time_average(xs);
    compensated_sum(xs.iter().map(|x| (x - m) * (x - m))) / (xs.len() - 1) as f64
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bootstrap estimate of the variance of one replicate estimate.
///
/// Draws `resamples` samples of size `sample_size` with replacement and reports
/// the mean of their unbiased sample variances with a 95% percentile interval.
pub fn bootstrap_variance<R: Rng + ?Sized>(
    estimates: &[f64],
    resamples: usize,
    sample_size: usize,
    rng: &mut R,
) -> Result<VarianceReport> {
    if estimates.len() < 2 {
        return Err(invalid("estimates", "bootstrap needs at least two replicates"));
    }
    if resamples == 0 || sample_size < 2 {
        return Err(invalid("resamples", "need M >= 1 and B >= 2"));
    }
    let mut draws = Vec::with_capacity(resamples);
    let mut sample = vec![0.0; sample_size];
    for _ in 0..resamples {
        for s in sample.iter_mut() {
            *s = estimates[rng.random_range(0..estimates.len())];
        }
        draws.push(sample_variance(&sample));
    }
    let variance = time_average(&draws).max(0.0);
    draws.sort_by(f64::total_cmp);
    Ok(VarianceReport {
        estimate: time_average(estimates),
        variance,
        method: VarianceMethod::Bootstrap,
        auxiliary: resamples,
        interval: Some((percentile(&draws, 0.025), percentile(&draws, 0.975))),
        clamped: false,
        relative_constant: None,
    })
}

/// Unbiased variance across replicate estimates.
pub fn replicate_variance(estimates: &[f64]) -> Result<VarianceReport> {
    if estimates.len() < 2 {
        return Err(invalid("estimates", "need at least two replicates"));
    }
    Ok(VarianceReport {
        estimate: time_average(estimates),
        variance: sample_variance(estimates),
        method: VarianceMethod::Replicate,
        auxiliary: estimates.len(),
        interval: None,
        clamped: false,
        relative_constant: None,
    })
}

/// `N T_eff Var / mu^2`.
pub fn relative_variance_constant(variance: f64, particles: usize, effective_time: f64, estimate: f64) -> Result<f64> {
    if estimate == 0.0 || !estimate.is_finite() {
        return Err(invalid("estimate", "relative variance needs a nonzero estimate"));
    }
    Ok(particles as f64 * effective_time * variance / (estimate * estimate))
}
