use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Kernel;
use crate::error::{invalid, Result};

/// Spin configuration on a periodic `side x side` lattice, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IsingLattice {
    side: usize,
    spins: Vec<i8>,
}

impl IsingLattice {
    pub fn filled(side: usize, spin: i8) -> Result<Self> {
        check_side(side)?;
        check_spin(spin)?;
        Ok(Self {
            side,
            spins: vec![spin; side * side],
        })
    }

    pub fn from_spins(side: usize, spins: Vec<i8>) -> Result<Self> {
        check_side(side)?;
        if spins.len() != side * side {
            return Err(invalid("spins", format!("expected {} spins, got {}", side * side, spins.len())));
        }
        for &s in &spins {
            check_spin(s)?;
        }
        Ok(Self { side, spins })
    }

    /// Uniformly random configuration with exactly `up` sites set to `+1`.
    pub fn with_up_count<R: Rng + ?Sized>(side: usize, up: usize, rng: &mut R) -> Result<Self> {
        check_side(side)?;
        let n = side * side;
        if up > n {
            return Err(invalid("up", format!("{up} exceeds the {n} lattice sites")));
        }
        let mut spins = vec![-1i8; n];
        for site in sample(rng, n, up) {
            spins[site] = 1;
        }
        Ok(Self { side, spins })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn sites(&self) -> usize {
        self.spins.len()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn spin(&self, site: usize) -> i8 {
        self.spins[site]
    }

    pub fn flip(&mut self, site: usize) {
        self.spins[site] = -self.spins[site];
    }

    pub fn up_count(&self) -> usize {
        self.spins.iter().filter(|&&s| s > 0).count()
    }

    pub fn total_spin(&self) -> i64 {
        self.spins.iter().map(|&s| s as i64).sum()
    }

    /// Mean spin `m = L^-2 sum_i s_i`.
    pub fn magnetization(&self) -> f64 {
        self.total_spin() as f64 / self.sites() as f64
    }
}

fn check_side(side: usize) -> Result<()> {
    if side == 0 {
        return Err(invalid("side", "lattice side must be at least 1"));
    }
    Ok(())
}

fn check_spin(s: i8) -> Result<()> {
    if s != 1 && s != -1 {
        return Err(invalid("spin", format!("spins are +1 or -1, got {s}")));
    }
    Ok(())
}

/// Uniform draw among configurations with magnetization `m`.
///
/// `L^2 (1 + m) / 2` must be an integer in `[0, L^2]`.
pub fn sample_uniform_fixed_magnetization<R: Rng + ?Sized>(
    side: usize,
    magnetization: f64,
    rng: &mut R,
) -> Result<IsingLattice> {
    check_side(side)?;
    let n = (side * side) as f64;
    let k = n * (1.0 + magnetization) / 2.0;
    let rounded = k.round();
    if !((k - rounded).abs() <= 1e-9 * n.max(1.0)) || rounded < 0.0 || rounded > n {
        return Err(invalid(
            "magnetization",
            format!("{magnetization} does not correspond to a whole number of up spins on a {side}x{side} lattice"),
        ));
    }
    IsingLattice::with_up_count(side, rounded as usize, rng)
}

/// Single-site Metropolis dynamics.
///
/// One evolution applies `updates_per_step` proposals. Each proposal picks a site
/// uniformly and flips it with probability `min(1, exp(-beta s_i sum_j s_j))`,
/// which is the Metropolis rule for the energy
/// `H = -1/2 sum_{bonds} s_i s_j` (each nearest-neighbour bond counted once).
#[derive(Debug, Clone)]
pub struct IsingKernel {
    side: usize,
    beta: f64,
    updates_per_step: usize,
    neighbors: Vec<[u32; 4]>,
    // indexed by (s_i * sum_j s_j + 4) / 2
    acceptance: [f64; 5],
}

pub const DEFAULT_UPDATES_PER_STEP: usize = 10;

impl IsingKernel {
    pub fn new(side: usize, beta: f64, updates_per_step: usize) -> Result<Self> {
        check_side(side)?;
        if !beta.is_finite() {
            return Err(invalid("beta", "inverse temperature must be finite"));
        }
        if updates_per_step == 0 {
            return Err(invalid("updates_per_step", "must be at least 1"));
        }
        let idx = |r: usize, c: usize| (r * side + c) as u32;
        let neighbors = (0..side * side)
            .map(|site| {
                let (r, c) = (site / side, site % side);
                [
                    idx(r, (c + 1) % side),
                    idx(r, (c + side - 1) % side),
                    idx((r + 1) % side, c),
                    idx((r + side - 1) % side, c),
                ]
            })
            .collect();
        let mut acceptance = [0.0; 5];
        for (slot, a) in acceptance.iter_mut().enumerate() {
            let local = 2.0 * slot as f64 - 4.0;
            *a = (-beta * local).exp().min(1.0);
        }
        Ok(Self {
            side,
            beta,
            updates_per_step,
            neighbors,
            acceptance,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn updates_per_step(&self) -> usize {
        self.updates_per_step
    }

    pub fn neighbors(&self, site: usize) -> [u32; 4] {
        self.neighbors[site]
    }

    /// `s_i * sum_{j ~ i} s_j`.
    #[inline]
    pub fn local_field(&self, lattice: &IsingLattice, site: usize) -> i32 {
        let s = &lattice.spins;
        let sum: i32 = self.neighbors[site].iter().map(|&j| s[j as usize] as i32).sum();
        s[site] as i32 * sum
    }

    /// Metropolis probability of accepting a flip at `site`.
    pub fn flip_acceptance(&self, lattice: &IsingLattice, site: usize) -> f64 {
        self.acceptance[((self.local_field(lattice, site) + 4) / 2) as usize]
    }

    /// `H(s) = -1/2 sum_{bonds} s_i s_j`; flipping site `i` changes it by `s_i sum_j s_j`.
    pub fn energy(&self, lattice: &IsingLattice) -> f64 {
        -0.5 * self.bond_sum(lattice) as f64
    }

    /// `sum_{bonds} s_i s_j` over right and down bonds of each site.
    pub fn bond_sum(&self, lattice: &IsingLattice) -> i64 {
        let s = &lattice.spins;
        (0..s.len())
            .map(|i| {
                let [right, _, down, _] = self.neighbors[i];
                s[i] as i64 * (s[right as usize] as i64 + s[down as usize] as i64)
            })
            .sum()
    }

    /// One Metropolis proposal.
    #[inline]
    pub fn metropolis_update<R: Rng + ?Sized>(&self, lattice: &mut IsingLattice, rng: &mut R) {
        let site = rng.random_range(0..lattice.spins.len());
        let local = self.local_field(lattice, site);
        if local <= 0 || rng.random::<f64>() < self.acceptance[((local + 4) / 2) as usize] {
            lattice.flip(site);
        }
    }
}

impl Kernel for IsingKernel {
    type State = IsingLattice;

    fn evolve<R: Rng + ?Sized>(&self, lattice: &mut IsingLattice, rng: &mut R) {
        debug_assert_eq!(lattice.side, self.side);
        for _ in 0..self.updates_per_step {
            self.metropolis_update(lattice, rng);
        }
    }
}
