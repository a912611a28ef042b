//! Exact finite-size numerics for phase-key pseudorandom states whose
//! adversary also holds copies of a shared Haar-random state.
//!
//! The crate is organised bottom-up:
//!
//! * [`qla`]: sparse pure states, ensembles, dense operators, trace distance,
//!   fidelity and the support-block decomposition that keeps ensemble
//!   computations inside the span of the states actually involved.
//! * [`typestates`]: type vectors, type states, prefix collision-freeness and
//!   the key-averaged phase identities.
//! * [`haar`]: Haar sampling and the exact type-state moment oracle.
//! * [`prsg`]: the phase-key generator, its hybrid chain, the multi-key chain
//!   and the rank-projector distinguisher.
//! * [`commitments`]: the SWAP-test commitment scheme, hiding and sum-binding.
//! * [`pgm`]: phase-ensemble discrimination and the pretty good measurement.
//! * [`runner`]: experiment configs, sweeps and serialized reports.
//! * [`acceptance`]: the end-to-end acceptance suite.

pub mod acceptance;
pub mod commitments;
pub mod error;
pub mod haar;
pub mod pgm;
pub mod prsg;
pub mod qla;
pub mod report;
pub mod rng;
pub mod runner;
pub mod tol;
pub mod typestates;

pub use error::{LabError, Result};
pub use qla::{
    BasisString, DenseOperator, DensityOperator, Ensemble, PureState, RegisterShape, C64,
};
pub use report::{Check, ExperimentReport};
pub use tol::Budget;

/// Version string stamped into every report.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
