//! Markov kernels driving particle evolution.

mod ar1;
mod geometric;
mod ising;

pub use ar1::{ar1_step, AutoregressiveChain};
pub use geometric::{geometric_step, GeometricChain};
pub use ising::{sample_uniform_fixed_magnetization, IsingKernel, IsingLattice, DEFAULT_UPDATES_PER_STEP};

use rand::Rng;

/// A Markov transition kernel.
///
/// `evolve` must depend only on the incoming state and the draws taken from
/// `rng`, so that two evolutions from the same state and stream position agree
/// bit for bit. Implementations are shared between worker threads.
pub trait Kernel: Sync {
    type State: Clone + Send + Sync;

    fn evolve<R: Rng + ?Sized>(&self, state: &mut Self::State, rng: &mut R);
}
