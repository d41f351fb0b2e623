use rand::Rng;
use rand_distr::StandardNormal;

use super::Kernel;
use crate::error::{invalid, Result};

/// Exact time-`dt` discretisation of the Ornstein-Uhlenbeck process
/// `dX = -X dt + sqrt(2) dW`. The standard normal law is invariant for every
/// step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutoregressiveChain {
    dt: f64,
    decay: f64,
    noise: f64,
}

/// `decay * x + noise * eta` for a given standard normal `eta`.
#[inline]
pub fn ar1_step(x: f64, decay: f64, noise: f64, eta: f64) -> f64 {
    decay * x + noise * eta
}

impl AutoregressiveChain {
    /// `dt = +inf` is accepted and yields an independence sampler.
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        let decay = (-dt).exp();
        let noise = (-(-2.0 * dt).exp_m1()).sqrt();
        Ok(Self { dt, decay, noise })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }
}

impl Kernel for AutoregressiveChain {
    type State = f64;

    #[inline]
    fn evolve<R: Rng + ?Sized>(&self, state: &mut f64, rng: &mut R) {
        let eta: f64 = rng.sample(StandardNormal);
        *state = ar1_step(*state, self.decay, self.noise, eta);
    }
}
