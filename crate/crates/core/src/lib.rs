//! Multi-state variational Monte Carlo toolkit.

pub mod ansatz;
pub mod config;
pub mod estimators;
pub mod harness;
pub mod numerics;
pub mod pretraining;
pub mod sampler;
pub mod training;

pub use numerics::{Mat, SignedLogValue, SkewMatrix};

pub type MatF64 = Mat<f64>;
pub type MatF32 = Mat<f32>;
pub type SkewMatrixF64 = SkewMatrix<f64>;
pub type SkewMatrixF32 = SkewMatrix<f32>;
pub type SignedLog = SignedLogValue<f64>;
