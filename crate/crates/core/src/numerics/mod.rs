//! Dense linear algebra: log-domain Pfaffians and determinants, SVD,
//! Procrustes alignment, and symmetric orthogonalization.

mod eigen;
mod lu;
mod matrix;
mod pfaffian;
mod procrustes;
mod real;
mod signed_log;
mod skew;
mod svd;

pub use eigen::{symmetric_eigen, SymmetricEigen};
pub use lu::{determinant, inverse, Lu};
pub use matrix::Mat;
pub use pfaffian::{pfaffian, pfaffian_with, PfaffianOptions};
pub use procrustes::{polar_factor, procrustes, symmetric_orthogonalize, Procrustes, DEGENERATE_RTOL};
pub use real::Real;
pub use signed_log::{log_sum_exp, SignedLogValue};
pub use skew::{pfaffian_bruteforce, upper_index, upper_len, SkewMatrix};
pub use svd::{svd, Svd};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NumericsError {
    #[error("skew matrix dimension {0} must be even and positive")]
    OddDimension(usize),
    #[error("matrix is not skew-symmetric at ({i}, {j})")]
    NotSkew { i: usize, j: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("brute-force Pfaffian limited to dim <= {limit}, got {dim}")]
    OracleLimit { dim: usize, limit: usize },
    #[error("Jacobi iteration did not converge in {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("projected Gram matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("matrix is singular")]
    Singular,
}
