use rand::Rng;

use super::Kernel;

/// Chain on the nonnegative integers that steps up by one or resets to zero,
/// each with probability one half. Its invariant law is `2^(-x-1)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GeometricChain;

/// One transition. The coin is the top bit of a single 32-bit draw: set means up.
#[inline]
pub fn geometric_step<R: Rng + ?Sized>(x: u64, rng: &mut R) -> u64 {
    if rng.next_u32() >> 31 == 1 {
        x + 1
    } else {
        0
    }
}

impl GeometricChain {
    /// Probability that the chain sits at `x` under the invariant law.
    pub fn invariant_mass(x: u64) -> f64 {
        0.5f64.powi(x.min(i32::MAX as u64) as i32 + 1)
    }

    /// `mu[a, inf) = 2^(-a)`.
    pub fn tail_probability(a: u64) -> f64 {
        0.5f64.powi(a.min(i32::MAX as u64) as i32)
    }
}

impl Kernel for GeometricChain {
    type State = u64;

    #[inline]
    fn evolve<R: Rng + ?Sized>(&self, state: &mut u64, rng: &mut R) {
        *state = geometric_step(*state, rng);
    }
}
