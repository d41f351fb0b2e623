//! Magnetization-level coarse models and exact enumeration for small lattices.

use serde::{Deserialize, Serialize};

use super::coarse::{solve_coarse_model, CoarseModel};
use crate::error::{invalid, Result};
use crate::kernels::{IsingKernel, IsingLattice, Kernel};
use crate::rng::{Lane, Streams};

/// Largest lattice the enumeration accepts (`2^25` configurations).
pub const MAX_ENUMERATION_SITES: usize = 25;

/// Magnetization of the configuration with `up` of `sites` spins set.
pub fn level_magnetization(up: usize, sites: usize) -> f64 {
    (2.0 * up as f64 - sites as f64) / sites as f64
}

/// Row-normalised transition frequencies between up-spin counts.
///
/// For each count `k = 0..=L^2`, `samples` lattices are drawn uniformly with `k`
/// up spins, evolved for one kernel step and tallied by their new count. Row
/// `k` uses streams `(Microbin, k, s)`.
pub fn estimate_microbin_matrix(kernel: &IsingKernel, samples: usize, streams: &Streams) -> Result<Vec<Vec<f64>>> {
    if samples == 0 {
        return Err(invalid("samples", "need at least one sample per level"));
    }
    let side = kernel.side();
    let n = side * side;
    let row = |k: usize| -> Result<Vec<f64>> {
        let mut counts = vec![0u64; n + 1];
        for s in 0..samples {
            let mut rng = streams.stream(Lane::Microbin, k as u64, s as u64);
            let mut lattice = IsingLattice::with_up_count(side, k, &mut rng)?;
            kernel.evolve(&mut lattice, &mut rng);
            counts[lattice.up_count()] += 1;
        }
        Ok(counts.iter().map(|&c| c as f64 / samples as f64).collect())
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..=n).into_par_iter().map(row).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..=n).map(row).collect()
    }
}

/// States of the largest closed communicating class, ascending.
/// Ties between equally large classes go to the one with the smallest state.
pub fn largest_closed_class(rows: &[Vec<f64>]) -> Vec<usize> {
    let n = rows.len();
    let reach = |start: usize, forward: bool| -> Vec<bool> {
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(x) = stack.pop() {
            for y in 0..n {
                let edge = if forward { rows[x][y] > 0.0 } else { rows[y][x] > 0.0 };
                if edge && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen
    };
    let mut assigned = vec![false; n];
    let mut best: Vec<usize> = Vec::new();
    for x in 0..n {
        if assigned[x] {
            continue;
        }
        let fwd = reach(x, true);
        let bwd = reach(x, false);
        let class: Vec<usize> = (0..n).filter(|&y| fwd[y] && bwd[y]).collect();
        for &y in &class {
            assigned[y] = true;
        }
        // Closed when nothing outside the class is reachable.
        let closed = (0..n).all(|y| !fwd[y] || bwd[y]);
        if closed && class.len() > best.len() {
            best = class;
        }
    }
    best
}

/// Microbin coarse model on up-spin counts, restricted to its largest closed class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicrobinModel {
    pub side: usize,
    pub beta: f64,
    /// Up-spin count of each model state.
    pub levels: Vec<usize>,
    pub model: CoarseModel,
}

impl MicrobinModel {
    /// `observable` is evaluated at each level's magnetization.
    pub fn estimate<F: Fn(f64) -> f64>(
        kernel: &IsingKernel,
        samples: usize,
        streams: &Streams,
        observable: F,
    ) -> Result<Self> {
        let rows = estimate_microbin_matrix(kernel, samples, streams)?;
        Self::from_matrix(kernel.side(), kernel.beta(), &rows, observable)
    }

    pub fn from_matrix<F: Fn(f64) -> f64>(side: usize, beta: f64, rows: &[Vec<f64>], observable: F) -> Result<Self> {
        let sites = side * side;
        if rows.len() != sites + 1 {
            return Err(invalid("rows", format!("expected {} levels, got {}", sites + 1, rows.len())));
        }
        let levels = largest_closed_class(rows);
        let restricted: Vec<Vec<f64>> = levels
            .iter()
            .map(|&x| {
                let r: Vec<f64> = levels.iter().map(|&y| rows[x][y]).collect();
                let s: f64 = r.iter().sum();
                r.iter().map(|v| v / s).collect()
            })
            .collect();
        let labels: Vec<f64> = levels.iter().map(|&k| level_magnetization(k, sites)).collect();
        let f = labels.iter().map(|&m| observable(m)).collect();
        let model = solve_coarse_model(labels, restricted, f)?;
        Ok(Self {
            side,
            beta,
            levels,
            model,
        })
    }

    /// Model state for an up-spin count; counts outside the class map to the
    /// nearest covered level.
    pub fn state_of(&self, up: usize) -> usize {
        match self.levels.binary_search(&up) {
            Ok(i) => i,
            Err(i) => {
                if i == 0 {
                    0
                } else if i == self.levels.len() {
                    i - 1
                } else if up - self.levels[i - 1] <= self.levels[i] - up {
                    i - 1
                } else {
                    i
                }
            }
        }
    }

    /// Variance function at a lattice configuration.
    pub fn value(&self, lattice: &IsingLattice) -> f64 {
        self.model.variance[self.state_of(lattice.up_count())]
    }
}

/// Exact Boltzmann average by full enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Enumeration {
    pub log_partition: f64,
    pub mean: f64,
}

/// Enumerates all `2^(L^2)` configurations with weight `exp(beta/2 sum_bonds s_i s_j)`.
pub fn ising_exact_enumeration<F: Fn(&IsingLattice) -> f64>(side: usize, beta: f64, f: F) -> Result<Enumeration> {
    let sites = side * side;
    if side == 0 || sites > MAX_ENUMERATION_SITES {
        return Err(invalid("side", format!("enumeration needs 1 <= L^2 <= {MAX_ENUMERATION_SITES}")));
    }
    let kernel = IsingKernel::new(side, beta, 1)?;
    let shift = beta.abs() * sites as f64;
    let mut z = 0.0;
    let mut acc = 0.0;
    let mut spins = vec![-1i8; sites];
    for bits in 0u64..(1u64 << sites) {
        for (i, s) in spins.iter_mut().enumerate() {
            *s = if bits >> i & 1 == 1 { 1 } else { -1 };
        }
        let lattice = IsingLattice::from_spins(side, spins.clone())?;
        let weight = (-beta * kernel.energy(&lattice) - shift).exp();
        z += weight;
        acc += weight * f(&lattice);
    }
    Ok(Enumeration {
        log_partition: shift + z.ln(),
        mean: acc / z,
    })
}

/// Exact law of the up-spin count.
pub fn exact_level_distribution(side: usize, beta: f64) -> Result<Vec<f64>> {
    let sites = side * side;
    let mut probs = Vec::with_capacity(sites + 1);
    for k in 0..=sites {
        probs.push(ising_exact_enumeration(side, beta, |l| (l.up_count() == k) as u8 as f64)?.mean);
    }
    Ok(probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_at_infinite_temperature() {
        for side in 1..=3 {
            let n = side * side;
            let e = ising_exact_enumeration(side, 0.0, |l| (l.up_count() == n) as u8 as f64).unwrap();
            assert!((e.mean - 2f64.powi(-(n as i32))).abs() < 1e-15);
            assert!((e.log_partition - n as f64 * 2f64.ln()).abs() < 1e-12);
        }
        let e = ising_exact_enumeration(1, 0.7, |l| (l.spin(0) == 1) as u8 as f64).unwrap();
        assert!((e.mean - 0.5).abs() < 1e-15);
        assert!(ising_exact_enumeration(6, 0.1, |_| 0.0).is_err());
    }

    #[test]
    fn enumeration_reference_values() {
        let p = ising_exact_enumeration(4, 0.25, |l| (l.magnetization().abs() > 0.75) as u8 as f64)
            .unwrap()
            .mean;
        assert!((p - 0.008_885_763_469_356_961).abs() < 1e-14, "{p}");
        let m2 = ising_exact_enumeration(4, 0.25, |l| l.magnetization().powi(2)).unwrap().mean;
        assert!((m2 - 0.111_584).abs() < 5e-7, "{m2}");
    }

    #[test]
    fn level_distribution_sums_to_one() {
        let d = exact_level_distribution(3, 0.4).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        // Spin-flip symmetry.
        for k in 0..=9 {
            assert!((d[k] - d[9 - k]).abs() < 1e-15);
        }
    }

    #[test]
    fn detailed_balance_on_three_by_three() {
        let side = 3;
        let beta = 0.55;
        let kernel = IsingKernel::new(side, beta, 1).unwrap();
        let n = side * side;
        let lattice_of = |bits: usize| {
            let spins = (0..n).map(|i| if bits >> i & 1 == 1 { 1 } else { -1 }).collect();
            IsingLattice::from_spins(side, spins).unwrap()
        };
        let weight = |l: &IsingLattice| (-beta * kernel.energy(l)).exp();
        for a in 0..(1usize << n) {
            let la = lattice_of(a);
            for i in 0..n {
                let b = a ^ (1 << i);
                let lb = lattice_of(b);
                let k_ab = kernel.flip_acceptance(&la, i) / n as f64;
                let k_ba = kernel.flip_acceptance(&lb, i) / n as f64;
                let lhs = weight(&la) * k_ab;
                let rhs = weight(&lb) * k_ba;
                assert!((lhs - rhs).abs() <= 1e-15 * lhs.max(rhs), "{a} -> {b}");
            }
        }
    }

    #[test]
    fn microbin_rows_are_local_and_stochastic() {
        let kernel = IsingKernel::new(3, 0.3, 10).unwrap();
        let rows = estimate_microbin_matrix(&kernel, 200, &Streams::new(3)).unwrap();
        assert_eq!(rows.len(), 10);
        for (k, row) in rows.iter().enumerate() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (j, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    assert!(j.abs_diff(k) <= 10);
                }
            }
        }
        // From all-down, a single accepted flip raises the count by exactly one.
        let single = IsingKernel::new(3, 0.3, 1).unwrap();
        let rows = estimate_microbin_matrix(&single, 500, &Streams::new(4)).unwrap();
        assert!(rows[0][0] > 0.0 && rows[0][1] > 0.0);
        assert_eq!(rows[0][0] + rows[0][1], 1.0);
    }

    #[test]
    fn microbin_free_spins() {
        // At beta = 0 with one update, a uniformly chosen spin flips: up count k moves
        // to k - 1 with probability k / n and to k + 1 otherwise.
        let kernel = IsingKernel::new(2, 0.0, 1).unwrap();
        let samples = 40_000;
        let rows = estimate_microbin_matrix(&kernel, samples, &Streams::new(5)).unwrap();
        for k in 0..=4usize {
            let down = k as f64 / 4.0;
            if k > 0 {
                let sd = (down * (1.0 - down) / samples as f64).sqrt();
                assert!((rows[k][k - 1] - down).abs() <= 4.0 * sd + 1e-12);
            }
            if k < 4 {
                assert!((rows[k][k + 1] - (1.0 - down)).abs() <= 4.0 * (0.25 / samples as f64).sqrt() + 1e-12);
            }
        }
    }

    #[test]
    fn closed_class_selection() {
        // 0 -> 1 <-> 2, 3 absorbing: classes {1, 2} and {3} are closed.
        let rows = vec![
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.5, 0.5, 0.0],
            vec![0.0, 0.5, 0.5, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ];
        assert_eq!(largest_closed_class(&rows), vec![1, 2]);
    }

    #[test]
    fn coarse_tail_matches_enumeration() {
        let kernel = IsingKernel::new(4, 0.25, 10).unwrap();
        let f = |m: f64| (m.abs() > 0.75) as u8 as f64;
        let model = MicrobinModel::estimate(&kernel, 2000, &Streams::new(6), f).unwrap();
        assert_eq!(model.levels.len(), 17);
        let exact = ising_exact_enumeration(4, 0.25, |l| f(l.magnetization())).unwrap().mean;
        let coarse = model.model.mean_observable();
        assert!((coarse / exact - 1.0).abs() < 0.25, "{coarse} vs {exact}");
        assert!(model.model.poisson_residual() < 1e-10);
    }

    #[test]
    fn state_lookup_falls_back_to_nearest() {
        let rows = vec![
            vec![1.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.5, 0.0, 0.5, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.5, 0.5],
            vec![0.0, 0.0, 0.5, 0.0, 0.5],
            vec![0.0, 0.0, 0.5, 0.5, 0.0],
        ];
        let m = MicrobinModel::from_matrix(2, 0.1, &rows, |x| x).unwrap();
        assert_eq!(m.levels, vec![2, 3, 4]);
        assert_eq!(m.state_of(0), 0);
        assert_eq!(m.state_of(3), 1);
    }
}
