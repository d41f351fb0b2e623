//! Weighted ensemble splitting: resampling, bin allocation, coarse-model
//! analysis and variance estimators.

pub mod allocation;
pub mod analysis;
pub mod binning;
pub mod ensemble;
pub mod error;
pub mod estimators;
pub mod kernels;
pub mod quadrature;
pub mod resampling;
pub mod rng;
pub mod sum;

#[cfg(test)]
mod testing;

pub use allocation::AllocationPolicy;
pub use binning::{Partition, PartitionSpec};
pub use ensemble::{Binning, ParticleEnsemble, Problem, RunConfig, RunTrace};
pub use error::{Error, Result};
pub use kernels::Kernel;
pub use resampling::ResamplingScheme;
pub use rng::{Lane, StreamRng, Streams};
