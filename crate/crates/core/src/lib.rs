//! Tavis–Cummings unitary evolution with every large product executed by
//! Cannon's algorithm on a q×q torus of in-process workers.
//!
//! The pipeline is [`model::build_hamiltonian`] → Taylor propagator factors
//! ([`evolution::build_left_factor`], [`evolution::build_right_factor`]) →
//! repeated [`evolution::evolve_step`], with [`cannon::CannonEngine`]
//! executing each product under a [`cannon::GridStrategy`]. The [`bench`]
//! module times factor construction and evolution per strategy.

pub mod bench;
pub mod cannon;
pub mod cli;
pub mod config;
pub mod densela;
pub mod error;
pub mod evolution;
pub mod model;

pub use cannon::{cannon_chain, cannon_multiply, CannonEngine, GridStrategy};
pub use densela::{frobenius_distance, matexp_exact, matmul_serial, ComplexMatrix, C64};
pub use error::{Error, Result};
pub use evolution::{
    build_left_factor, build_right_factor, evolve_step, initial_state_all_excited, photon_distribution,
    run_trajectory, DensityMatrix, EvolutionConfig, TrajectoryRecord,
};
pub use model::{build_hamiltonian, check_rwa, enumerate_basis, BasisState, ModelParams, PhotonFactors};
