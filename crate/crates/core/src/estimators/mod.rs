//! Monte Carlo estimators over walker batches.

mod bridge;
mod energy;
mod ess;
mod hamiltonian;
mod overlap;
pub mod stats;

pub use bridge::{bridge_ratios, BridgeOptions, BridgeResult, RatioVector, CONVERGENCE_TOL};
pub use energy::{
    energy_and_grad, evaluate_samples, local_energy, EnergyEstimate, StateSamples, NODE_LOG_THRESHOLD,
};
pub use ess::{kish_ess, kish_ess_all, EssReport};
pub use hamiltonian::Hamiltonian;
pub use overlap::{
    bhattacharyya, check_msis_bound, msis_integrand, overlap_msis, overlap_report, overlap_single_state, MsisMatrices, OverlapReport,
    SingleStateOverlap, LOG_RATIO_CLAMP, MSIS_BOUND_SLACK,
};

use crate::ansatz::AnsatzError;
use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EstimatorError {
    #[error("no usable samples for state {state}")]
    EmptyBatch { state: usize },
    #[error("state {state} has {have} samples, need at least {need}")]
    TooFewSamples { state: usize, have: usize, need: usize },
    #[error("MSIS integrand bound violated for pair ({s}, {t}) at sample {sample}: |f| = {value} > {bound}")]
    BoundViolation { s: usize, t: usize, sample: usize, value: f64, bound: f64 },
    #[error("invalid normalizer ratios: {0}")]
    InvalidRatios(String),
    #[error("sample {sample}: {source}")]
    Ansatz {
        sample: usize,
        #[source]
        source: AnsatzError,
    },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
