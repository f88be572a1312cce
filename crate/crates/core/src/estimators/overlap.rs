use serde::{Deserialize, Serialize};

use super::{bridge_ratios, kish_ess_all, BridgeOptions, EstimatorError, RatioVector};
use crate::sampler::PooledBatch;
use crate::SignedLog;

/// Bound on `|log psi_t - log psi_s|` when forming single-state ratios.
pub const LOG_RATIO_CLAMP: f64 = 50.0;

/// Slack allowed on the MSIS integrand bound `|f_st| <= S/2`.
pub const MSIS_BOUND_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SingleStateOverlap {
    /// `sqrt(max(a b, 0))`.
    pub abs: f64,
    /// `mean_{p_s}[psi_t / psi_s]`.
    pub a: f64,
    /// `mean_{p_t}[psi_s / psi_t]`.
    pub b: f64,
    pub clamp_events: usize,
    /// Samples dropped because their denominator vanished.
    pub skipped: usize,
}

fn ratio_mean(pooled: &PooledBatch, num: usize, den: usize, clamps: &mut usize, skipped: &mut usize) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = 0;
    for i in pooled.samples_of(den) {
        let row = &pooled.log_psi()[i];
        if row[den].is_zero() {
            *skipped += 1;
            continue;
        }
        let (v, c) = row[num].ratio_clamped(&row[den], LOG_RATIO_CLAMP);
        *clamps += usize::from(c);
        sum += v;
        n += 1;
    }
    (if n > 0 { sum / n as f64 } else { 0.0 }, n)
}

/// Overlap magnitude from each state's own samples only.
pub fn overlap_single_state(pooled: &PooledBatch, s: usize, t: usize) -> Result<SingleStateOverlap, EstimatorError> {
    for state in [s, t] {
        let have = pooled.counts()[state];
        if have < 2 {
            return Err(EstimatorError::TooFewSamples { state, have, need: 2 });
        }
    }
    let (mut clamp_events, mut skipped) = (0, 0);
    let (a, na) = ratio_mean(pooled, t, s, &mut clamp_events, &mut skipped);
    let (b, nb) = ratio_mean(pooled, s, t, &mut clamp_events, &mut skipped);
    if na == 0 {
        return Err(EstimatorError::EmptyBatch { state: s });
    }
    if nb == 0 {
        return Err(EstimatorError::EmptyBatch { state: t });
    }
    Ok(SingleStateOverlap { abs: (a * b).max(0.0).sqrt(), a, b, clamp_events, skipped })
}

/// `f_st = S Psi_s Psi_t / sum_u Psi_u^2` at one pooled sample, where
/// `Psi_u = sqrt(r_u) psi_u`.
pub fn msis_integrand(row: &[SignedLog], log_r: &[f64], s: usize, t: usize) -> f64 {
    if row[s].is_zero() || row[t].is_zero() {
        return 0.0;
    }
    let l = |u: usize| log_r[u] + 2.0 * row[u].log_abs();
    let m = (0..row.len()).map(l).fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = (0..row.len()).map(|u| (l(u) - m).exp()).sum();
    let sign = f64::from(row[s].sign() * row[t].sign());
    row.len() as f64 * sign * ((0.5 * (l(s) + l(t)) - m).exp() / denom)
}

/// Fails unless `|f| <= n_states / 2` up to [`MSIS_BOUND_SLACK`]; NaN fails.
pub fn check_msis_bound(f: f64, n_states: usize, s: usize, t: usize, sample: usize) -> Result<(), EstimatorError> {
    let bound = n_states as f64 / 2.0 + MSIS_BOUND_SLACK;
    if f.abs() <= bound {
        Ok(())
    } else {
        Err(EstimatorError::BoundViolation { s, t, sample, value: f.abs(), bound })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsisMatrices {
    /// Signed normalized overlaps, unit diagonal.
    pub s_hat: Vec<Vec<f64>>,
    /// Bhattacharyya coefficients, unit diagonal.
    pub f_hat: Vec<Vec<f64>>,
    /// `o_hat[s][t] = s_hat[s][t] sqrt(r_s / r_t)`, the estimate of `E_{p_s}[psi_t / psi_s]`.
    pub o_hat: Vec<Vec<f64>>,
}

/// Pooled-sample overlaps and Bhattacharyya coefficients. Every sample is
/// checked against `|f_st| <= S/2`.
pub fn overlap_msis(pooled: &PooledBatch, ratios: &RatioVector) -> Result<MsisMatrices, EstimatorError> {
    let n = pooled.n_states();
    if ratios.len() != n {
        return Err(EstimatorError::InvalidRatios(format!("expected {n} ratios, got {}", ratios.len())));
    }
    if ratios.as_slice().iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(EstimatorError::InvalidRatios(format!("{:?}", ratios.as_slice())));
    }
    let log_r: Vec<f64> = ratios.as_slice().iter().map(|r| r.ln()).collect();
    let mut s_hat = vec![vec![0.0; n]; n];
    let mut f_hat = vec![vec![0.0; n]; n];
    for (i, row) in pooled.log_psi().iter().enumerate() {
        for s in 0..n {
            for t in s + 1..n {
                let f = msis_integrand(row, &log_r, s, t);
                check_msis_bound(f, n, s, t, i)?;
                s_hat[s][t] += f;
                f_hat[s][t] += f.abs();
            }
        }
    }
    let count = pooled.len().max(1) as f64;
    let r = ratios.as_slice();
    let mut o_hat = vec![vec![1.0; n]; n];
    for s in 0..n {
        s_hat[s][s] = 1.0;
        f_hat[s][s] = 1.0;
        for t in s + 1..n {
            s_hat[s][t] /= count;
            f_hat[s][t] /= count;
            s_hat[t][s] = s_hat[s][t];
            f_hat[t][s] = f_hat[s][t];
        }
    }
    for s in 0..n {
        for t in 0..n {
            if s != t {
                o_hat[s][t] = s_hat[s][t] * (r[s] / r[t]).sqrt();
            }
        }
    }
    Ok(MsisMatrices { s_hat, f_hat, o_hat })
}

pub fn bhattacharyya(pooled: &PooledBatch, ratios: &RatioVector) -> Result<Vec<Vec<f64>>, EstimatorError> {
    Ok(overlap_msis(pooled, ratios)?.f_hat)
}

/// Everything the training loop logs about state overlaps for one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub s_hat: Vec<Vec<f64>>,
    pub f_hat: Vec<Vec<f64>>,
    pub o_hat: Vec<Vec<f64>>,
    pub ratios: RatioVector,
    pub ess: Vec<f64>,
    pub ess_normalized: Vec<f64>,
    pub fixed_point_residual: f64,
    pub ratios_converged: bool,
    pub ratios_regularized: bool,
}

/// Bridge ratios, MSIS overlaps, and ESS from one pooled batch.
pub fn overlap_report(
    pooled: &PooledBatch,
    previous: Option<&RatioVector>,
    opts: BridgeOptions,
) -> Result<OverlapReport, EstimatorError> {
    let bridge = bridge_ratios(pooled, previous, opts)?;
    let m = overlap_msis(pooled, &bridge.ratios)?;
    let ess = kish_ess_all(pooled, &bridge.ratios);
    Ok(OverlapReport {
        s_hat: m.s_hat,
        f_hat: m.f_hat,
        o_hat: m.o_hat,
        ratios: bridge.ratios,
        ess: ess.ess,
        ess_normalized: ess.normalized,
        fixed_point_residual: bridge.residual,
        ratios_converged: bridge.converged,
        ratios_regularized: bridge.regularized,
    })
}
