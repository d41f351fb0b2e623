//! Child budgets per occupied bin.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sum::compensated_sum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AllocationPolicy {
    /// Equal budgets, remainder to the lowest bin ids.
    Uniform,
    /// Budgets proportional to `w(u) * eta^u(v)`.
    Optimal,
    /// Optimal shares mixed with a floor proportional to bin weight.
    DeltaFloored { delta: f64 },
}

impl Default for AllocationPolicy {
    fn default() -> Self {
        AllocationPolicy::Optimal
    }
}

impl AllocationPolicy {
    pub fn needs_values(&self) -> bool {
        !matches!(self, AllocationPolicy::Uniform)
    }

    /// `bin_weights[u] = w(u)`, `products[u] = w(u) * eta^u(v)`; `products` is
    /// ignored by the uniform policy.
    pub fn allocate(&self, bin_weights: &[f64], products: &[f64], particles: usize) -> Result<Vec<usize>> {
        match *self {
            AllocationPolicy::Uniform => allocate_uniform(bin_weights.len(), particles),
            AllocationPolicy::Optimal => allocate_optimal(products, particles),
            AllocationPolicy::DeltaFloored { delta } => {
                allocate_delta_floored(bin_weights, products, particles, delta)
            }
        }
    }
}

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x
    }
}

/// Largest-remainder rounding of `total * shares / sum(shares)`.
///
/// Ties in the remainder go to the lower index. All-zero shares are treated as equal.
pub fn apportion(shares: &[f64], total: usize) -> Vec<usize> {
    let n = shares.len();
    if n == 0 {
        return Vec::new();
    }
    let sum = compensated_sum(shares.iter().copied());
    let targets: Vec<f64> = if sum > 0.0 {
        shares.iter().map(|&s| snap(total as f64 * s / sum)).collect()
    } else {
        vec![total as f64 / n as f64; n]
    };
    let mut out: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
    let mut assigned: usize = out.iter().sum();
    // Snapping can overshoot by a unit in degenerate cases.
    while assigned > total {
        let i = (0..n).rev().max_by_key(|&i| out[i]).unwrap();
        out[i] -= 1;
        assigned -= 1;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        let ri = targets[i] - targets[i].floor();
        let rj = targets[j] - targets[j].floor();
        rj.partial_cmp(&ri).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j))
    });
    for &i in order.iter().cycle().take(total - assigned) {
        out[i] += 1;
    }
    out
}

fn check_occupancy(bins: usize, particles: usize) -> Result<()> {
    if bins == 0 {
        return Err(invalid("bins", "no occupied bins"));
    }
    if particles < bins {
        return Err(Error::TooFewParticles { particles, bins });
    }
    Ok(())
}

pub fn allocate_uniform(bins: usize, particles: usize) -> Result<Vec<usize>> {
    check_occupancy(bins, particles)?;
    Ok(apportion(&vec![1.0; bins], particles))
}

/// Targets `N p_u / sum(p)` with every bin clamped to at least one child.
///
/// Bins whose target falls below one are fixed at one and the rest of the budget
/// is spread over the remaining bins in proportion to their products, repeating
/// until no target is below one. Falls back to uniform when every product is zero.
pub fn allocate_optimal(products: &[f64], particles: usize) -> Result<Vec<usize>> {
    check_occupancy(products.len(), particles)?;
    if let Some(p) = products.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
        return Err(invalid("products", format!("bin products must be finite and nonnegative, got {p}")));
    }
    if compensated_sum(products.iter().copied()) <= 0.0 {
        return allocate_uniform(products.len(), particles);
    }
    let n = products.len();
    let mut pinned = vec![false; n];
    loop {
        let free_total = compensated_sum((0..n).filter(|&u| !pinned[u]).map(|u| products[u]));
        let budget = (particles - pinned.iter().filter(|&&p| p).count()) as f64;
        let mut changed = false;
        for u in 0..n {
            if !pinned[u] && (free_total <= 0.0 || snap(budget * products[u] / free_total) < 1.0) {
                pinned[u] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let free: Vec<usize> = (0..n).filter(|&u| !pinned[u]).collect();
    let mut out = vec![1usize; n];
    if !free.is_empty() {
        let budget = particles - (n - free.len());
        let shares: Vec<f64> = free.iter().map(|&u| products[u]).collect();
        for (&u, k) in free.iter().zip(apportion(&shares, budget)) {
            out[u] = k;
        }
    } else {
        // Every bin was pinned; spread the surplus as evenly as possible.
        for (u, k) in apportion(&vec![1.0; n], particles - n).into_iter().enumerate() {
            out[u] += k;
        }
    }
    Ok(out)
}

/// Budgets with `N(u) / N >= max(delta * w(u), (1 - 2 delta) * optimal share)`.
///
/// The per-bin lower bounds are rounded up and clamped to one; the leftover
/// budget follows the gap between each bin's mixed target
/// `N ((1 - 2 delta) opt_u + 2 delta w_u)` and its bound.
pub fn allocate_delta_floored(
    bin_weights: &[f64],
    products: &[f64],
    particles: usize,
    delta: f64,
) -> Result<Vec<usize>> {
    if !(0.0..0.5).contains(&delta) {
        return Err(invalid("delta", format!("must lie in [0, 1/2), got {delta}")));
    }
    if bin_weights.len() != products.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} bin weights but {} products",
            bin_weights.len(),
            products.len()
        )));
    }
    if delta == 0.0 {
        return allocate_optimal(products, particles);
    }
    check_occupancy(products.len(), particles)?;
    let wsum = compensated_sum(bin_weights.iter().copied());
    if !(wsum > 0.0) {
        return Err(invalid("bin_weights", "bins carry no weight"));
    }
    let w: Vec<f64> = bin_weights.iter().map(|x| x / wsum).collect();
    let psum = compensated_sum(products.iter().copied());
    let opt: Vec<f64> = if psum > 0.0 {
        products.iter().map(|p| p / psum).collect()
    } else {
        vec![1.0 / products.len() as f64; products.len()]
    };
    let bounds = |n: usize| -> Vec<usize> {
        w.iter()
            .zip(&opt)
            .map(|(&wu, &ou)| {
                let share = (delta * wu).max((1.0 - 2.0 * delta) * ou);
                (snap(n as f64 * share).ceil() as usize).max(1)
            })
            .collect()
    };
    let lower = bounds(particles);
    let needed: usize = lower.iter().sum();
    if needed > particles {
        let minimum = (particles + 1..)
            .find(|&n| bounds(n).iter().sum::<usize>() <= n)
            .expect("the bounds sum to at most (1 - delta) N plus the bin count");
        return Err(Error::InfeasibleAllocation { particles, minimum });
    }
    let gaps: Vec<f64> = w
        .iter()
        .zip(&opt)
        .zip(&lower)
        .map(|((&wu, &ou), &l)| {
            let target = particles as f64 * ((1.0 - 2.0 * delta) * ou + 2.0 * delta * wu);
            (target - l as f64).max(0.0)
        })
        .collect();
    let extra = apportion(&gaps, particles - needed);
    Ok(lower.iter().zip(extra).map(|(l, e)| l + e).collect())
}
