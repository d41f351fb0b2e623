use super::coarse::{solve_coarse_model, CoarseModel};
use crate::error::{invalid, Result};

/// Truncation margin above the threshold. The mass beyond the cap is `2^-cap`.
pub const TRUNCATION_MARGIN: u64 = 64;

/// Up-or-reset chain on `{0, ..., cap}` with the cap's up-move folded onto itself.
///
/// Lumping `[cap, inf)` into one state is exact for this chain, so the
/// truncated invariant law is `2^(-x-1)` below the cap and `2^-cap` at it.
pub fn truncated_geometric_matrix(cap: u64) -> Vec<Vec<f64>> {
    let n = cap as usize + 1;
    (0..n)
        .map(|x| {
            let mut row = vec![0.0; n];
            row[0] += 0.5;
            row[(x + 1).min(n - 1)] += 0.5;
            row
        })
        .collect()
}

fn tail_indicator(threshold: u64, cap: u64) -> Vec<f64> {
    (0..=cap).map(|x| if x >= threshold { 1.0 } else { 0.0 }).collect()
}

/// Coarse model of the chain for `f = 1{x >= threshold}`.
pub fn geometric_exact_model(threshold: u64, cap: u64) -> Result<CoarseModel> {
    if cap < threshold + TRUNCATION_MARGIN {
        return Err(invalid(
            "cap",
            format!("truncation {cap} must be at least threshold + {TRUNCATION_MARGIN}"),
        ));
    }
    let labels = (0..=cap).map(|x| x as f64).collect();
    solve_coarse_model(labels, truncated_geometric_matrix(cap), tail_indicator(threshold, cap))
}

/// [`geometric_exact_model`] with the smallest admissible cap.
pub fn geometric_model(threshold: u64) -> Result<CoarseModel> {
    geometric_exact_model(threshold, threshold + TRUNCATION_MARGIN)
}

/// Variance function of a geometric model at an untruncated state.
pub fn geometric_value(model: &CoarseModel, x: u64) -> f64 {
    model.variance[(x as usize).min(model.len() - 1)]
}

/// `(mu_0 K^t f)` for `t = 0, ..., steps - 1` from the point mass at `start`.
pub fn transient_tail_probabilities(threshold: u64, start: u64, steps: usize) -> Vec<f64> {
    // States past max(threshold, start) + steps are never reached in time.
    let cap = threshold.max(start) + steps as u64 + 1;
    let k = truncated_geometric_matrix(cap);
    let f = tail_indicator(threshold, cap);
    let mut law = vec![0.0; cap as usize + 1];
    law[start as usize] = 1.0;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        out.push(law.iter().zip(&f).map(|(p, f)| p * f).sum());
        let mut next = vec![0.0; law.len()];
        for (x, &p) in law.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (y, &q) in k[x].iter().enumerate() {
                next[y] += p * q;
            }
        }
        law = next;
    }
    out
}

/// `(1/T) sum_{t<T} mu_0 K^t f` from the point mass at `start`.
pub fn expected_time_average(threshold: u64, start: u64, steps: usize) -> f64 {
    crate::sum::compensated_sum(transient_tail_probabilities(threshold, start, steps)) / steps as f64
}
