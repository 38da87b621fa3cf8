//! Error types shared across the crate.

use thiserror::Error;

/// Error variants for mixture transport operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix is not symmetric within the relative Frobenius tolerance.
    #[error("matrix is not symmetric: relative asymmetry {0:.3e}")]
    NotSymmetric(f64),

    /// Matrix has an eigenvalue below the positive-semidefinite tolerance.
    #[error("matrix is not positive semidefinite: eigenvalue {0:.3e}")]
    NotPositiveSemidefinite(f64),

    /// Strictly positive definite matrix required but input is (near) singular.
    #[error("matrix is singular or nearly singular: smallest eigenvalue {0:.3e}")]
    SingularMatrix(f64),

    /// Vector or matrix dimensions do not agree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Source covariance of a transport map is degenerate.
    #[error("source scatter matrix is singular; the affine transport map is undefined")]
    SingularSource,

    /// An iterative scheme failed to converge.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// Atoms from different generator families cannot be compared.
    #[error("atoms belong to different generator families")]
    FamilyMismatch,

    /// Operation is undefined for this generator profile.
    #[error("unsupported generator profile: {0}")]
    UnsupportedProfile(&'static str),

    /// Weight vector is not a valid point of the probability simplex.
    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    /// Cost entries must be finite and nonnegative.
    #[error("invalid cost entry {0}")]
    InvalidCost(f64),

    /// Problem size exceeds a hard capacity guard.
    #[error("problem size {size} exceeds capacity {limit}; {hint}")]
    Capacity {
        size: usize,
        limit: usize,
        hint: &'static str,
    },

    /// Mixture with no components.
    #[error("mixture has no components")]
    EmptyMixture,

    /// Symmetry groups of the operands differ.
    #[error("symmetry groups do not match")]
    GroupMismatch,

    /// Operation restricted to a specific ambient dimension.
    #[error("operation requires dimension {expected}, got {got}")]
    UnsupportedDimension { expected: usize, got: usize },

    /// Grid specifications of the operands differ.
    #[error("grid specifications do not match")]
    GridMismatch,

    /// Density sampled to zero everywhere on the grid.
    #[error("density support not captured by the grid (all samples zero)")]
    EmptySupport,

    /// Grid is not mapped to itself by the group.
    #[error("grid is not symmetric under the group: {0}")]
    InvalidGrid(String),

    /// Slater determinant with linearly dependent orbitals.
    #[error("degenerate Slater determinant: duplicate or dependent orbitals")]
    DegenerateDeterminant,

    /// Orbital block structure of the operands differs.
    #[error("orbital block shapes do not match: {0}")]
    BlockShapeMismatch(String),

    /// Catch-all for invalid arguments.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
