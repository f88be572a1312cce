//! Multi-state optimization: penalty objective, adaptive weights, reordering
//! and the training loop.

mod checkpoint;
mod loss;
mod optimizer;
mod penalty;
mod run;
mod snap;
mod trainer;

pub use checkpoint::{decode_f64s, decode_params, encode_f64s, encode_params, Checkpoint, CheckpointError, EmaSnapshot, RngCursor};
pub use loss::{total_loss_grad, LossGrad, LossOptions, SnapTerm, OVERLAP_CLIP_WIDTH};
pub use optimizer::{Lamb, MomentumSgd};
pub use penalty::{is_identity, reorder_permutation, PenaltySchedule};
pub use run::{
    optimize, run_trainer, EssSummary, RunArtifacts, RunReport, StateEnergy, TraceWriter, ENERGY_TRACE_HEADER,
    OVERLAP_TRACE_HEADER,
};
pub use snap::{snap_ramp, snap_target, SnapTarget, SpinExpectation, SuppliedSpin};
pub use trainer::{
    build_hamiltonian, build_model, initial_walker, Evaluation, StepRecord, Trainer, COLLAPSE_ENERGY_TOL,
    COLLAPSE_OVERLAP,
};

use crate::ansatz::AnsatzError;
use crate::config::ConfigError;
use crate::estimators::EstimatorError;
use crate::sampler::SamplerError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("diverged at step {step}: {reason}")]
    Diverged { step: u64, reason: String },
    #[error(transparent)]
    Ansatz(#[from] AnsatzError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("pretraining failed: {0}")]
    Pretrain(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
