//! Dense complex linear algebra for the small matrices (n ≤ 16) that show up
//! in few-level Hamiltonians: products, LU inversion, spectral norm, matrix
//! exponential and a general non-Hermitian eigensolver.

mod eig;
mod expm;
mod lu;
mod matrix;
mod norm;

pub use eig::{eig, eig_with_tolerance, EigenDecomposition};
pub use expm::{mat_exp, mat_exp_with_cap, DEFAULT_EXP_NORM_CAP};
pub use lu::{mat_inverse, solve};
pub use matrix::{inner, vec_norm, vec_scale, vec_sub, ComplexMatrix, C64, I, ONE, ZERO};
pub use norm::{spectral_norm, spectral_norm_or_frobenius, NormEstimate};

/// Largest dimension the dense kernels are tuned and tested for.
pub const MAX_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KernelError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("matrix contains NaN or infinite entries")]
    NonFinite,
    #[error("matrix is singular: pivot {pivot_index} has magnitude {magnitude:.3e}")]
    SingularMatrix { pivot_index: usize, magnitude: f64 },
    #[error("power iteration did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("matrix norm {norm:.3e} exceeds exponential cap {cap:.3e}; reduce the step size")]
    OverflowRisk { norm: f64, cap: f64 },
    #[error("eigendecomposition defective or ill-conditioned: {reason}")]
    DefectiveOrIllConditioned { reason: String },
}
