//! Child-count generators.
//!
//! Every function here maps mean child counts (or within-bin weights and a bin
//! budget) to realised integer counts whose expectation equals the mean counts.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sum::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResamplingScheme {
    /// Global multinomial draw over all particles. Not bin-conserving.
    Multinomial,
    BinnedMultinomial,
    /// One uniform offset per bin on an evenly spaced grid.
    BinnedSystematic,
    /// Deterministic floors, then a multinomial draw for the remainder.
    BinnedResidual,
}

impl Default for ResamplingScheme {
    fn default() -> Self {
        ResamplingScheme::BinnedSystematic
    }
}

impl ResamplingScheme {
    pub const ALL: [ResamplingScheme; 4] = [
        ResamplingScheme::Multinomial,
        ResamplingScheme::BinnedMultinomial,
        ResamplingScheme::BinnedSystematic,
        ResamplingScheme::BinnedResidual,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ResamplingScheme::Multinomial => "multinomial",
            ResamplingScheme::BinnedMultinomial => "binned_multinomial",
            ResamplingScheme::BinnedSystematic => "binned_systematic",
            ResamplingScheme::BinnedResidual => "binned_residual",
        }
    }

    pub fn is_binned(self) -> bool {
        self != ResamplingScheme::Multinomial
    }

    /// Counts for one bin: sum to `budget`, mean `budget * w_i / sum(w)`.
    pub fn bin_counts<R: Rng + ?Sized>(self, weights: &[f64], budget: usize, rng: &mut R) -> Result<Vec<usize>> {
        match self {
            ResamplingScheme::Multinomial => Err(invalid(
                "scheme",
                "global multinomial resampling does not operate within bins",
            )),
            ResamplingScheme::BinnedMultinomial => binned_multinomial_counts(weights, budget, rng),
            ResamplingScheme::BinnedSystematic => binned_systematic_counts(weights, budget, rng),
            ResamplingScheme::BinnedResidual => binned_residual_counts(weights, budget, rng),
        }
    }
}

impl fmt::Display for ResamplingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ResamplingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|scheme| scheme.as_str() == s)
            .ok_or_else(|| {
                invalid(
                    "scheme",
                    format!("unknown resampling scheme `{s}` (expected multinomial, binned_multinomial, binned_systematic or binned_residual)"),
                )
            })
    }
}

fn check_weights(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(invalid("weights", "bin holds no particles"));
    }
    let mut total = CompensatedSum::new();
    for &w in weights {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(invalid("weights", format!("weights must be finite and nonnegative, got {w}")));
        }
        total.add(w);
    }
    let total = total.value();
    if !(total > 0.0) {
        return Err(invalid("weights", "bin carries zero total weight"));
    }
    Ok(total)
}

/// Normalised cumulative weights. The entry of the last positive weight and
/// everything after it are exactly 1.
fn cumulative(weights: &[f64], total: f64) -> Vec<f64> {
    let mut acc = CompensatedSum::new();
    let mut cum: Vec<f64> = weights
        .iter()
        .map(|&w| {
            acc.add(w);
            acc.value() / total
        })
        .collect();
    if let Some(last) = weights.iter().rposition(|&w| w > 0.0) {
        for c in &mut cum[last..] {
            *c = 1.0;
        }
    }
    cum
}

/// Index `i` with `cum[i-1] <= u < cum[i]`.
#[inline]
fn invert(cum: &[f64], u: f64) -> usize {
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

fn categorical_draws<R: Rng + ?Sized>(cum: &[f64], draws: usize, counts: &mut [usize], rng: &mut R) {
    for _ in 0..draws {
        counts[invert(cum, rng.random::<f64>())] += 1;
    }
}

// Rounds `x` to the nearest integer when it is within a few ulps of it.
#[inline]
fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 8.0 * f64::EPSILON * x.abs().max(1.0) {
        r
    } else {
        x
    }
}

/// Multinomial draw of `total` children with probabilities `mean_counts / total`.
///
/// `mean_counts` must sum to `total` within `1e-9` relative.
pub fn multinomial_counts<R: Rng + ?Sized>(mean_counts: &[f64], total: usize, rng: &mut R) -> Result<Vec<usize>> {
    if mean_counts.is_empty() {
        return Err(invalid("mean_counts", "no particles"));
    }
    let mut sum = CompensatedSum::new();
    for &c in mean_counts {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(invalid("mean_counts", format!("mean counts must be finite and nonnegative, got {c}")));
        }
        sum.add(c);
    }
    let sum = sum.value();
    if (sum - total as f64).abs() > 1e-9 * (total as f64).max(1.0) {
        return Err(Error::MeanCountMismatch { sum, expected: total });
    }
    let mut counts = vec![0; mean_counts.len()];
    if total == 0 {
        return Ok(counts);
    }
    let cum = cumulative(mean_counts, sum);
    categorical_draws(&cum, total, &mut counts, rng);
    Ok(counts)
}

/// Multinomial(`budget`, `w_i / sum(w)`) within one bin.
pub fn binned_multinomial_counts<R: Rng + ?Sized>(weights: &[f64], budget: usize, rng: &mut R) -> Result<Vec<usize>> {
    let total = check_weights(weights)?;
    let mut counts = vec![0; weights.len()];
    categorical_draws(&cumulative(weights, total), budget, &mut counts, rng);
    Ok(counts)
}

/// Systematic resampling within one bin.
///
/// With offset `u ~ U[0, 1)` and scaled cumulative weights `s_i = budget * c_i`,
/// particle `i` receives `ceil(s_i - u) - ceil(s_{i-1} - u)` children. A grid
/// point landing exactly on a boundary goes to the higher index.
pub fn binned_systematic_counts<R: Rng + ?Sized>(weights: &[f64], budget: usize, rng: &mut R) -> Result<Vec<usize>> {
    let total = check_weights(weights)?;
    let cum = cumulative(weights, total);
    let u: f64 = rng.random();
    let n = budget as f64;
    let mut prev = 0i64;
    let counts = cum
        .iter()
        .map(|&c| {
            let upper = (snap(n * c) - u).ceil() as i64;
            let k = (upper - prev).max(0) as usize;
            prev = prev.max(upper);
            k
        })
        .collect();
    Ok(counts)
}

/// Residual resampling within one bin.
pub fn binned_residual_counts<R: Rng + ?Sized>(weights: &[f64], budget: usize, rng: &mut R) -> Result<Vec<usize>> {
    let total = check_weights(weights)?;
    let n = budget as f64;
    let mut counts = Vec::with_capacity(weights.len());
    let mut residuals = Vec::with_capacity(weights.len());
    let mut assigned = 0usize;
    for &w in weights {
        let target = snap(n * w / total);
        let floor = target.floor();
        counts.push(floor as usize);
        residuals.push((target - floor).max(0.0));
        assigned += floor as usize;
    }
    // Rounding can push the floors one past the budget only when the
    // targets were snapped upwards; trim from the largest count.
    while assigned > budget {
        let i = (0..counts.len()).max_by_key(|&i| counts[i]).unwrap();
        counts[i] -= 1;
        residuals[i] += 1.0;
        assigned -= 1;
    }
    let left = budget - assigned;
    if left > 0 {
        let rtotal: f64 = residuals.iter().sum();
        if rtotal > 0.0 {
            let cum = cumulative(&residuals, rtotal);
            categorical_draws(&cum, left, &mut counts, rng);
        } else {
            let cum = cumulative(weights, total);
            categorical_draws(&cum, left, &mut counts, rng);
        }
    }
    Ok(counts)
}
