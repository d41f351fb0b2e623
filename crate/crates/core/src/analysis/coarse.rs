use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::binning::BinnedEnsemble;
use crate::error::{Error, Result};
use crate::sum::{compensated_sum, CompensatedSum};

const ROW_SUM_TOLERANCE: f64 = 1e-12;
const INVARIANT_RESIDUAL: f64 = 1e-12;
const MAX_POLISH_SWEEPS: usize = 200_000;

/// Finite Markov chain with the solution of its Poisson equation.
///
/// `poisson` solves `(I - K) h = f - mu(f)` with `mu(h) = 0`, and
/// `variance[x]^2 = sum_y K(x, y) (h(y) - Kh(x))^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseModel {
    pub labels: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub invariant: Vec<f64>,
    pub observable: Vec<f64>,
    pub poisson: Vec<f64>,
    pub next_poisson: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Ratio `mu(v^2) / mu(v)^2`; reported as 1 with `degenerate` set when `mu(v) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oif {
    pub value: f64,
    pub degenerate: bool,
}

impl CoarseModel {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn average(&self, values: impl Iterator<Item = f64>) -> f64 {
        compensated_sum(self.invariant.iter().zip(values).map(|(m, v)| m * v))
    }

    /// `mu(f)`.
    pub fn mean_observable(&self) -> f64 {
        self.average(self.observable.iter().copied())
    }

    /// `mu(v^2)`, the asymptotic variance constant of a single chain.
    pub fn mean_square_variance(&self) -> f64 {
        self.average(self.variance.iter().map(|v| v * v))
    }

    /// `mu(v)`; its square is the best constant attainable by weighted ensemble.
    pub fn mean_variance(&self) -> f64 {
        self.average(self.variance.iter().copied())
    }

    pub fn oif(&self) -> Oif {
        oif(self)
    }

    /// `mu(v^2) / mu(f)^2`.
    pub fn mcmc_constant(&self) -> f64 {
        self.mean_square_variance() / self.mean_observable().powi(2)
    }

    /// `mu(v)^2 / mu(f)^2`.
    pub fn optimal_constant(&self) -> f64 {
        self.mean_variance().powi(2) / self.mean_observable().powi(2)
    }

    /// `max_x |((I - K) h)(x) - (f(x) - mu(f))|`.
    pub fn poisson_residual(&self) -> f64 {
        let mf = self.mean_observable();
        (0..self.len())
            .map(|x| {
                let kh = compensated_sum(self.transition[x].iter().zip(&self.poisson).map(|(k, h)| k * h));
                (self.poisson[x] - kh - (self.observable[x] - mf)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `max_y |(mu K)(y) - mu(y)|`.
    pub fn invariant_residual(&self) -> f64 {
        let sparse = to_sparse(&self.transition);
        residual(&sparse, &self.invariant)
    }

    /// Index of the state whose label is closest to `label`.
    pub fn nearest(&self, label: f64) -> usize {
        let mut best = 0;
        for (i, l) in self.labels.iter().enumerate() {
            if (l - label).abs() < (self.labels[best] - label).abs() {
                best = i;
            }
        }
        best
    }
}

pub fn oif(model: &CoarseModel) -> Oif {
    let m1 = model.mean_variance();
    if !(m1 > 0.0) {
        return Oif {
            value: 1.0,
            degenerate: true,
        };
    }
    Oif {
        value: model.mean_square_variance() / (m1 * m1),
        degenerate: false,
    }
}

type Sparse = Vec<Vec<(usize, f64)>>;

fn to_sparse(rows: &[Vec<f64>]) -> Sparse {
    rows.iter()
        .map(|r| r.iter().enumerate().filter(|(_, &k)| k != 0.0).map(|(j, &k)| (j, k)).collect())
        .collect()
}

fn left_apply(k: &Sparse, mu: &[f64]) -> Vec<f64> {
    let mut out = vec![CompensatedSum::new(); mu.len()];
    for (x, row) in k.iter().enumerate() {
        for &(y, p) in row {
            out[y].add(mu[x] * p);
        }
    }
    out.iter().map(|s| s.value()).collect()
}

fn residual(k: &Sparse, mu: &[f64]) -> f64 {
    left_apply(k, mu)
        .iter()
        .zip(mu)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn reaches_all(k: &Sparse, reverse: bool) -> bool {
    let n = k.len();
    let mut adjacency = vec![Vec::new(); n];
    for (x, row) in k.iter().enumerate() {
        for &(y, _) in row {
            if reverse {
                adjacency[y].push(x);
            } else {
                adjacency[x].push(y);
            }
        }
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(x) = stack.pop() {
        for &y in &adjacency[x] {
            if !seen[y] {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn validate(rows: &[Vec<f64>], n: usize) -> Result<()> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::DimensionMismatch(format!("row {i} has {} entries, expected {n}", row.len())));
        }
        if row.iter().any(|&k| !(k >= 0.0) || !k.is_finite()) {
            return Err(Error::NotStochastic {
                row: i,
                sum: row.iter().sum(),
            });
        }
        let sum = compensated_sum(row.iter().copied());
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::NotStochastic { row: i, sum });
        }
    }
    Ok(())
}

/// Invariant law: direct solve, then lazy power iteration `mu <- mu (I + K) / 2`
/// to a residual below `1e-12`. The lazy form also converges for periodic chains.
pub fn invariant_measure(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::DimensionMismatch("empty transition matrix".into()));
    }
    validate(rows, n)?;
    let sparse = to_sparse(rows);
    if !reaches_all(&sparse, false) || !reaches_all(&sparse, true) {
        return Err(Error::Reducible);
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    // mu (I - K) = 0 with the last equation replaced by sum(mu) = 1.
    let a = DMatrix::from_fn(n, n, |i, j| {
        if i == n - 1 {
            1.0
        } else {
            let id = if i == j { 1.0 } else { 0.0 };
            id - rows[j][i]
        }
    });
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let solved = a.lu().solve(&b).ok_or(Error::Singular)?;
    let mut mu: Vec<f64> = solved.iter().map(|&m| m.max(0.0)).collect();
    normalize(&mut mu);
    let min_sweeps = 4 * n;
    let mut res = residual(&sparse, &mu);
    let mut sweeps = 0;
    while sweeps < min_sweeps || res > INVARIANT_RESIDUAL * 1e-2 {
        if sweeps >= MAX_POLISH_SWEEPS {
            break;
        }
        let next = left_apply(&sparse, &mu);
        for (m, k) in mu.iter_mut().zip(next) {
            *m = 0.5 * (*m + k);
        }
        normalize(&mut mu);
        res = residual(&sparse, &mu);
        sweeps += 1;
    }
    if res > INVARIANT_RESIDUAL {
        return Err(Error::NoConvergence {
            what: "invariant measure",
            iterations: sweeps,
            residual: res,
        });
    }
    Ok(mu)
}

fn normalize(mu: &mut [f64]) {
    let s = compensated_sum(mu.iter().copied());
    for m in mu.iter_mut() {
        *m /= s;
    }
}

#[inline]
fn two_product(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Solves `(I - K) d = rhs` with `d[pin] = 0`, refining against a residual
/// accumulated in extended precision.
fn pinned_poisson(sparse: &Sparse, rows: &[Vec<f64>], rhs: &[f64], pin: usize) -> Result<Vec<f64>> {
    let n = rows.len();
    let free: Vec<usize> = (0..n).filter(|&i| i != pin).collect();
    let m = free.len();
    let mut d = vec![0.0; n];
    if m == 0 {
        return Ok(d);
    }
    let a = DMatrix::from_fn(m, m, |i, j| {
        let (x, y) = (free[i], free[j]);
        let id = if x == y { 1.0 } else { 0.0 };
        id - rows[x][y]
    });
    let lu = a.lu();
    let mut r: Vec<f64> = free.iter().map(|&x| rhs[x]).collect();
    for _ in 0..4 {
        let delta = lu.solve(&DVector::from_vec(r.clone())).ok_or(Error::Singular)?;
        for (i, &x) in free.iter().enumerate() {
            d[x] += delta[i];
        }
        // r = rhs - (I - K) d, evaluated with error-free products.
        r = free
            .iter()
            .map(|&x| {
                let mut acc = CompensatedSum::new();
                acc.add(rhs[x]);
                acc.add(-d[x]);
                for &(y, k) in &sparse[x] {
                    let (p, e) = two_product(k, d[y]);
                    acc.add(p);
                    acc.add(e);
                }
                acc.value()
            })
            .collect();
    }
    Ok(d)
}

/// Invariant law, Poisson solution and variance function of a finite chain.
///
/// The Poisson equation is first solved with the most likely state pinned at
/// zero, which keeps small differences of `h` accurate; the solution is then
/// shifted to `mu(h) = 0`.
pub fn solve_coarse_model(labels: Vec<f64>, transition: Vec<Vec<f64>>, observable: Vec<f64>) -> Result<CoarseModel> {
    let n = transition.len();
    if labels.len() != n || observable.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} states, {} labels, {} observable values",
            labels.len(),
            observable.len()
        )));
    }
    let invariant = invariant_measure(&transition)?;
    let sparse = to_sparse(&transition);
    let mf = compensated_sum(invariant.iter().zip(&observable).map(|(m, f)| m * f));
    let rhs: Vec<f64> = observable.iter().map(|f| f - mf).collect();
    let pin = (0..n).max_by(|&i, &j| invariant[i].total_cmp(&invariant[j]).then(j.cmp(&i))).unwrap();
    let d = pinned_poisson(&sparse, &transition, &rhs, pin)?;
    let kd: Vec<f64> = sparse
        .iter()
        .map(|row| compensated_sum(row.iter().map(|&(y, k)| k * d[y])))
        .collect();
    let variance: Vec<f64> = sparse
        .iter()
        .zip(&kd)
        .map(|(row, &mean)| compensated_sum(row.iter().map(|&(y, k)| k * (d[y] - mean).powi(2))).max(0.0).sqrt())
        .collect();
    let shift = compensated_sum(invariant.iter().zip(&d).map(|(m, h)| m * h));
    let poisson = d.iter().map(|h| h - shift).collect();
    let next_poisson = kd.iter().map(|h| h - shift).collect();
    Ok(CoarseModel {
        labels,
        transition,
        invariant,
        observable,
        poisson,
        next_poisson,
        variance,
    })
}

/// Per-bin share of the asymptotic variance of a weighted-ensemble step:
/// `w(u)^2 / N(u) * (Var[Kh] + Var[v] + mean(v)^2)` under the in-bin law.
///
/// `states[i]` is the model state of particle `i`.
pub fn variance_decomposition(
    binned: &BinnedEnsemble,
    budgets: &[usize],
    weights: &[f64],
    states: &[usize],
    model: &CoarseModel,
) -> Result<Vec<f64>> {
    if budgets.len() != binned.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} bins but {} budgets",
            binned.len(),
            budgets.len()
        )));
    }
    if states.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} particles but {} state indices",
            weights.len(),
            states.len()
        )));
    }
    if states.iter().any(|&s| s >= model.len()) {
        return Err(Error::Uncovered);
    }
    let kh: Vec<f64> = states.iter().map(|&s| model.next_poisson[s]).collect();
    let v: Vec<f64> = states.iter().map(|&s| model.variance[s]).collect();
    binned
        .bins()
        .iter()
        .enumerate()
        .zip(budgets)
        .map(|((b, bin), &budget)| {
            if budget == 0 {
                return Err(Error::EmptyBin { bin: bin.id });
            }
            let (_, var_kh) = binned.bin_moments(b, weights, &kh);
            let (mean_v, var_v) = binned.bin_moments(b, weights, &v);
            Ok(bin.weight * bin.weight / budget as f64 * (var_kh + var_v + mean_v * mean_v))
        })
        .collect()
}
