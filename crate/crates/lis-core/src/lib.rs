//! Distributed Kalman-like estimation for large-scale interconnected systems.
//!
//! A large-scale interconnected system (LIS) is a global linear system
//! partitioned into subsystems that couple through off-diagonal transition
//! blocks. Each subsystem runs a local estimator whose gain comes from a
//! distributed modified Riccati equation (DMRE): the covariance recursion
//! propagates only per-subsystem blocks, inflated by a scalar decoupling
//! variable derived from the neighbor counts, so no global model knowledge
//! is needed anywhere.
//!
//! The crate provides:
//!
//! - [`model`]: block-structured system models, topology extraction,
//!   decoupling variables, Euler discretization, a multi-area power-system
//!   generator, and a lossless JSON model file format.
//! - [`estimator`]: the distributed estimator, its Kalman-like local gains,
//!   the DMRE in blockwise and compact global forms, and the steady-state
//!   solver with constant-gain deployment.
//! - [`stability`]: reachability/detectability checkers, the gain-lifted
//!   positive operator with Kronecker representation and spectral radius,
//!   feasibility tests for the centralized and distributed stability LMIs,
//!   boundedness verdicts and weak-coupling sweeps.
//! - [`markov`]: the jump-system equivalent of any LIS, its conditional-mean
//!   and second-moment recursions and the trace bound they imply.
//! - [`sim`]: trajectory simulation with seeded noise, Monte Carlo RMSE
//!   ensembles, a centralized Kalman baseline and noise-free decay fits.

pub mod error;
pub mod estimator;
pub mod linalg;
pub mod markov;
pub mod model;
pub mod sim;
pub mod stability;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use model::{
    build_topology, decoupling_variables, BlockPattern, DecouplingPolicy, EpochParams, LisModel,
    Topology,
};
