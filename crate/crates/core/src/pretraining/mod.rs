//! Pretraining targets: structure graphs, orbital propagation with block-wise
//! alignment, orbital selectors, and the Procrustes fit of the Pfaffian ansatz.

mod align;
mod fit;
mod graph;
mod pipeline;
mod selectors;
mod structure;

pub use align::{
    blockwise_align, cluster_orbital_energies, propagate_orbitals, BlockAlignment, PropagationEdge, DEFAULT_BANDWIDTH,
    KDE_GRID,
};
pub use fit::{
    antisym_loss, antisym_target, orbital_loss, pretrain_fit, pretrain_loss_grad, pretrained_trainer, run_targets,
    sign_agreement, target_determinant, PretrainLoss, PretrainOptions, PretrainReport, PretrainTargets,
};
pub use pipeline::{align_payloads, AlignOutput, SelectorPair, SelectorReport};
pub use graph::{build_graph, rmsd, rmsd_with, GraphEdge, StructureGraph};
pub use selectors::{
    default_excitations, integer_determinant, selector_overlap_det, selector_set, selector_violations, Selector,
};
pub use structure::{
    gaussian_overlap, json_pointer, load_structures, synth_hf, BasisFunction, Structure, SynthSpec, SYNTH_EXPONENTS,
};

use std::path::Path;

use crate::ansatz::AnsatzError;
use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum PretrainError {
    #[error("no structures or samples")]
    Empty,
    #[error("structures {a} and {b} have different atom lists")]
    Mismatch { a: usize, b: usize },
    #[error("structure id {0} appears twice")]
    DuplicateId(usize),
    #[error("unknown structure id {0}")]
    UnknownId(usize),
    #[error("structure {id}: {message}")]
    Payload { id: usize, message: String },
    #[error("singular projection on edge {parent} -> {child}: {message}")]
    SingularEdge { parent: usize, child: usize, message: String },
    #[error("bandwidth must be positive, got {0}")]
    Bandwidth(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid selector: {0}")]
    Selector(String),
    #[error("selector pairs violate orthogonality: {0:?}")]
    Orthogonality(Vec<(usize, usize)>),
    #[error("schema violation at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("{0}")]
    Io(String),
    #[error("non-finite gradient at pretraining step {0}")]
    Diverged(usize),
    #[error("sampling failed: {0}")]
    Sampling(String),
    #[error(transparent)]
    Ansatz(#[from] AnsatzError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub fn load_selectors(path: &Path) -> Result<Vec<Selector>, PretrainError> {
    structure::load_json(path)
}
