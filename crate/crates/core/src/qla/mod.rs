//! Complex linear-algebra substrate: states, operators and distances.

pub mod basis;
pub mod blocks;
pub mod linalg;
pub mod metrics;
pub mod operator;
pub mod state;

pub use basis::{BasisString, RegisterShape};
pub use blocks::{gram_trace_distance, joint_components, Component};
pub use linalg::inv_sqrt_on_support;
pub use metrics::{fidelity, trace_distance};
pub use operator::{DenseOperator, DensityOperator, Ensemble, SparseOperator};
pub use state::PureState;

pub type C64 = nalgebra::Complex<f64>;

/// Reduced density operator on the registers listed in `keep`.
pub fn partial_trace(rho: &DensityOperator, keep: &[usize]) -> crate::Result<DenseOperator> {
    rho.partial_trace(keep, crate::tol::Budget::default().max_dense_dim)
}

/// `a ⊗ b` for pure states.
pub fn tensor_states(a: &PureState, b: &PureState) -> crate::Result<PureState> {
    a.tensor(b)
}
