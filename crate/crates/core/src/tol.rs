//! Numerical tolerances and resource budgets, in one place.

use serde::{Deserialize, Serialize};

/// Structural invariants: normalisation, Hermiticity, trace, PSD clamping.
pub const STRUCTURAL: f64 = 1e-9;

/// Equalities between two independent computation paths.
pub const CROSS_PATH: f64 = 1e-8;

/// Exact algebraic identities on small supports.
pub const IDENTITY: f64 = 1e-10;

/// Relative cutoff for Gram eigenvalues and support projectors.
pub const PSEUDO_RANK: f64 = 1e-10;

/// Slack added to inequality checks that compare two exact quantities.
pub const INEQUALITY_SLACK: f64 = 1e-9;

/// Resource limits. Every enumeration or dense allocation is checked against
/// these before it happens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budget {
    /// Largest dense matrix side (per support block).
    pub max_dense_dim: usize,
    /// Largest number of types enumerated for one family.
    pub max_types: u64,
    /// Largest number of subset pairs inspected by the prefix predicate.
    pub max_subset_pairs: u64,
    /// Largest ensemble size materialised at once.
    pub max_members: u64,
    /// Largest dense state vector.
    pub max_state_dim: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_dense_dim: 4096,
            max_types: 100_000,
            max_subset_pairs: 1_000_000,
            max_members: 5_000_000,
            max_state_dim: 1 << 22,
        }
    }
}

/// Largest full-space dimension at which optional dense oracles run alongside
/// the block computation. A dense eigendecomposition at 4096 takes minutes.
pub const DENSE_CROSS_CHECK_DIM: usize = 1024;
