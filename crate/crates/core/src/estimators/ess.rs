use serde::{Deserialize, Serialize};

use super::RatioVector;
use crate::numerics::log_sum_exp;
use crate::sampler::PooledBatch;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EssReport {
    pub ess: Vec<f64>,
    /// `ESS * S / N`: 1 for single-state sampling, `S` for full pooling.
    pub normalized: Vec<f64>,
}

/// Kish effective sample size of the weights `w_s = q_s r_s / qbar` over the
/// pooled batch, where `qbar` is the ratio-weighted mixture.
pub fn kish_ess(pooled: &PooledBatch, ratios: &RatioVector, state: usize) -> f64 {
    let n = pooled.n_states();
    let log_r: Vec<f64> = ratios.as_slice().iter().map(|r| r.ln()).collect();
    let mut log_w = Vec::with_capacity(pooled.len());
    let mut buf = vec![0.0; n];
    for row in pooled.log_psi() {
        for u in 0..n {
            buf[u] = log_r[u] + 2.0 * row[u].log_abs();
        }
        log_w.push(buf[state] - log_sum_exp(buf.iter().copied()));
    }
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return 0.0;
    }
    let (mut s1, mut s2) = (0.0, 0.0);
    for lw in log_w {
        let w = (lw - top).exp();
        s1 += w;
        s2 += w * w;
    }
    s1 * s1 / s2
}

pub fn kish_ess_all(pooled: &PooledBatch, ratios: &RatioVector) -> EssReport {
    let s = pooled.n_states() as f64;
    let n = pooled.len() as f64;
    let ess: Vec<f64> = (0..pooled.n_states()).map(|t| kish_ess(pooled, ratios, t)).collect();
    let normalized = ess.iter().map(|e| e * s / n).collect();
    EssReport { ess, normalized }
}
