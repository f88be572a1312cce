use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::ansatz::ParamVector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngCursor {
    pub seed: u64,
    /// Per-chain RNG stream ids.
    pub streams: Vec<u64>,
    /// Per-chain Metropolis step counters.
    pub steps: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmaSnapshot {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub updates: usize,
}

/// Resumable training snapshot. Parameters are stored per named slice as
/// base64 of little-endian `f64` bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: u64,
    pub params: BTreeMap<String, String>,
    pub rng_cursor: RngCursor,
    pub emas: EmaSnapshot,
    pub step_sigmas: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("slice `{0}` missing from checkpoint")]
    MissingSlice(String),
    #[error("slice `{label}`: {message}")]
    BadSlice { label: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub fn encode_f64s(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f64s(text: &str) -> Option<Vec<f64>> {
    let bytes = STANDARD.decode(text).ok()?;
    if bytes.len() % 8 != 0 {
        return None;
    }
    Some(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn encode_params(params: &ParamVector) -> BTreeMap<String, String> {
    params.layout().slices().iter().map(|s| (s.label(), encode_f64s(&params[s.range()]))).collect()
}

/// Fills `params` from encoded slices; every slice of its layout must be present.
pub fn decode_params(encoded: &BTreeMap<String, String>, params: &mut ParamVector) -> Result<(), CheckpointError> {
    let slices = params.layout().slices().to_vec();
    for s in slices {
        let label = s.label();
        let text = encoded.get(&label).ok_or_else(|| CheckpointError::MissingSlice(label.clone()))?;
        let values = decode_f64s(text)
            .ok_or_else(|| CheckpointError::BadSlice { label: label.clone(), message: "not base64 f64 data".into() })?;
        if values.len() != s.len {
            return Err(CheckpointError::BadSlice {
                label,
                message: format!("expected {} values, found {}", s.len, values.len()),
            });
        }
        params[s.range()].copy_from_slice(&values);
    }
    Ok(())
}

impl Checkpoint {
    pub fn write(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, CheckpointError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
