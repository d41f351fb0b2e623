//! Coarse-grained models, exact profiles and reference values.

mod coarse;
mod geometric;
mod ising;
mod ou;

pub use coarse::{invariant_measure, oif, solve_coarse_model, variance_decomposition, CoarseModel, Oif};
pub use geometric::{
    expected_time_average, geometric_exact_model, geometric_model, geometric_value, transient_tail_probabilities,
    truncated_geometric_matrix, TRUNCATION_MARGIN,
};
pub use ising::{
    estimate_microbin_matrix, exact_level_distribution, ising_exact_enumeration, largest_closed_class,
    level_magnetization, Enumeration, MicrobinModel, MAX_ENUMERATION_SITES,
};
pub use ou::{
    build_ou_mesh, mills_ratio, normal_cdf, normal_mass, normal_pdf, normal_sf, ou_hbar, ou_vbar, OuAnalytic,
    DEFAULT_MESH_CAP,
};
