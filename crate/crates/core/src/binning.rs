//! Spatial bins and the per-step grouping of particles into them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernels::IsingLattice;
use crate::sum::compensated_sum;

/// Pure map from a state to a bin id.
///
/// `index` is the particle's slot in the ensemble. Only [`PerParticle`] reads it;
/// every spatial partition ignores it.
pub trait Partition<S>: Sync {
    fn bin_of(&self, index: usize, state: &S) -> usize;
}

/// Every particle in bin 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct SingleBin;

impl<S> Partition<S> for SingleBin {
    fn bin_of(&self, _index: usize, _state: &S) -> usize {
        0
    }
}

/// One bin per particle slot.
#[derive(Debug, Clone, Copy, Default)]
pub struct PerParticle;

impl<S> Partition<S> for PerParticle {
    fn bin_of(&self, index: usize, _state: &S) -> usize {
        index
    }
}

/// Singletons `{0}, {1}, ..., {cut - 1}` plus the tail `[cut, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntegerLevels {
    pub cut: u64,
}

impl Partition<u64> for IntegerLevels {
    fn bin_of(&self, _index: usize, state: &u64) -> usize {
        (*state).min(self.cut) as usize
    }
}

/// Intervals `(-inf, p_0], (p_0, p_1], ..., (p_last, inf)` of the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMesh {
    points: Vec<f64>,
}

impl IntervalMesh {
    /// Infinite endpoints are dropped; the remaining points must be strictly increasing.
    pub fn new(points: &[f64]) -> Result<Self> {
        let points: Vec<f64> = points.iter().copied().filter(|p| p.is_finite()).collect();
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("points", "mesh points must be strictly increasing"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn bins(&self) -> usize {
        self.points.len() + 1
    }

    #[inline]
    pub fn locate(&self, x: f64) -> usize {
        self.points.partition_point(|&p| p < x)
    }
}

impl Partition<f64> for IntervalMesh {
    fn bin_of(&self, _index: usize, state: &f64) -> usize {
        self.locate(*state)
    }
}

/// Nearest-center cells in magnetization; a state equidistant from two
/// centers goes to the lower one.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnetizationVoronoi {
    centers: Vec<f64>,
}

const TIE_TOLERANCE: f64 = 1e-12;

impl MagnetizationVoronoi {
    pub fn new(centers: &[f64]) -> Result<Self> {
        if centers.is_empty() {
            return Err(invalid("centers", "at least one center is required"));
        }
        if centers.iter().any(|c| !c.is_finite()) || centers.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("centers", "centers must be finite, sorted and distinct"));
        }
        Ok(Self {
            centers: centers.to_vec(),
        })
    }

    /// `-1, -1 + step, ..., 1` (the last center is snapped to 1).
    pub fn evenly_spaced(step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 2.0) {
            return Err(invalid("step", "center spacing must lie in (0, 2]"));
        }
        let n = (2.0 / step).round() as usize;
        if ((n as f64) * step - 2.0).abs() > 1e-9 {
            return Err(invalid("step", "center spacing must divide 2"));
        }
        let centers: Vec<f64> = (0..=n).map(|k| -1.0 + 2.0 * k as f64 / n as f64).collect();
        Self::new(&centers)
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn locate(&self, m: f64) -> usize {
        let j = self.centers.partition_point(|&c| c < m);
        if j == 0 {
            return 0;
        }
        if j == self.centers.len() {
            return j - 1;
        }
        let below = m - self.centers[j - 1];
        let above = self.centers[j] - m;
        if above < below - TIE_TOLERANCE {
            j
        } else {
            j - 1
        }
    }
}

impl Partition<IsingLattice> for MagnetizationVoronoi {
    fn bin_of(&self, _index: usize, state: &IsingLattice) -> usize {
        self.locate(state.magnetization())
    }
}

/// Grid cells in the plane of two state functions, typically `(Kh, v)`.
///
/// Cell `(i, j)` holds states with `i - 1/2 < first / spacing <= i + 1/2` and
/// likewise for `j`, for `|i|, |j| <= extent`; everything else shares one
/// overflow cell.
pub struct ValueGrid<F> {
    spacing: f64,
    extent: i64,
    coordinates: F,
}

impl<F> ValueGrid<F> {
    pub fn new(spacing: f64, extent: u32, coordinates: F) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(invalid("spacing", "grid spacing must be positive"));
        }
        Ok(Self {
            spacing,
            extent: extent as i64,
            coordinates,
        })
    }

    fn side(&self) -> i64 {
        2 * self.extent + 1
    }

    /// Id of the overflow cell.
    pub fn overflow(&self) -> usize {
        (self.side() * self.side()) as usize
    }

    /// Id of the cell containing the coordinates `(x, y)`.
    pub fn cell(&self, x: f64, y: f64) -> usize {
        let i = (x / self.spacing - 0.5).ceil();
        let j = (y / self.spacing - 0.5).ceil();
        let e = self.extent as f64;
        if !(i.abs() <= e && j.abs() <= e) {
            return self.overflow();
        }
        ((i as i64 + self.extent) * self.side() + (j as i64 + self.extent)) as usize
    }
}

impl<S, F> Partition<S> for ValueGrid<F>
where
    F: Fn(&S) -> (f64, f64) + Sync,
{
    fn bin_of(&self, _index: usize, state: &S) -> usize {
        let (x, y) = (self.coordinates)(state);
        self.cell(x, y)
    }
}

/// Partition as written in an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionSpec {
    IntegerLevels { cut: u64 },
    Mesh { points: Vec<f64> },
    VoronoiMagnetization { centers: Vec<f64> },
    Single,
    PerParticle,
}

/// One occupied bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Bin {
    pub id: usize,
    /// Particle slots in ascending order.
    pub members: Vec<usize>,
    pub weight: f64,
}

/// Occupied bins in ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedEnsemble {
    bins: Vec<Bin>,
}

impl BinnedEnsemble {
    pub fn bins(&self) -> &[Bin] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.weight).collect()
    }

    pub fn total_weight(&self) -> f64 {
        compensated_sum(self.bins.iter().map(|b| b.weight))
    }

    /// `w(u) * eta^u(g) = sum_{i in u} w_i g_i` for each bin, given per-particle values.
    pub fn weighted_sums(&self, weights: &[f64], values: &[f64]) -> Vec<f64> {
        self.bins
            .iter()
            .map(|b| compensated_sum(b.members.iter().map(|&i| weights[i] * values[i])))
            .collect()
    }

    /// Mean and variance of per-particle `values` under the normalised in-bin weights.
    pub fn bin_moments(&self, bin: usize, weights: &[f64], values: &[f64]) -> (f64, f64) {
        let b = &self.bins[bin];
        if !(b.weight > 0.0) {
            return (0.0, 0.0);
        }
        let mean = compensated_sum(b.members.iter().map(|&i| weights[i] * values[i])) / b.weight;
        let var = compensated_sum(b.members.iter().map(|&i| weights[i] * (values[i] - mean).powi(2))) / b.weight;
        (mean, var.max(0.0))
    }
}

/// Groups particles by bin. Empty bins are omitted.
pub fn partition<S, P: Partition<S> + ?Sized>(states: &[S], weights: &[f64], bins: &P) -> BinnedEnsemble {
    debug_assert_eq!(states.len(), weights.len());
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in states.iter().enumerate() {
        groups.entry(bins.bin_of(i, s)).or_default().push(i);
    }
    let bins = groups
        .into_iter()
        .map(|(id, members)| {
            let weight = compensated_sum(members.iter().map(|&i| weights[i]));
            Bin { id, members, weight }
        })
        .collect();
    BinnedEnsemble { bins }
}
