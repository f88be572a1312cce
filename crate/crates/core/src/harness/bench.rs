use std::io::Write;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ModelSampler1D;
use crate::ansatz::HermiteGaussianModel;
use crate::estimators::{bridge_ratios, overlap_msis, overlap_single_state, stats, BridgeOptions, EstimatorError, RatioVector};
use crate::sampler::{rng_key, PooledBatch};
use crate::SignedLog;

/// Exact normalizer ratios `N_0^2 / N_s^2 = 1 / s!` of canonical Hermite states.
pub fn hermite_ratios(n_states: usize) -> RatioVector {
    let mut r = vec![1.0; n_states];
    for s in 1..n_states {
        r[s] = r[s - 1] / s as f64;
    }
    RatioVector::new(r).expect("factorial ratios are positive")
}

/// Pooled batch of isotropic Gaussians `psi_s^2 = exp(-|x - mu_s|^2 / (2 sigma_s^2)) e^{2 log_scale}`
/// with exact draws, `n_per_state` from each `(mu_s, sigma_s)`.
pub fn gaussian_pooled<R: Rng + ?Sized>(
    dim: usize,
    params: &[(f64, f64)],
    n_per_state: usize,
    log_scale: f64,
    rng: &mut R,
) -> PooledBatch {
    let mut origin = Vec::with_capacity(params.len() * n_per_state);
    let mut rows = Vec::with_capacity(params.len() * n_per_state);
    for (s, &(mu, sigma)) in params.iter().enumerate() {
        for _ in 0..n_per_state {
            let x: Vec<f64> = (0..dim).map(|_| mu + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
            rows.push(
                params
                    .iter()
                    .map(|&(m, sg)| {
                        let d2: f64 = x.iter().map(|xi| (xi - m) * (xi - m)).sum();
                        SignedLog::new(1, -d2 / (4.0 * sg * sg) + log_scale)
                    })
                    .collect(),
            );
            origin.push(s);
        }
    }
    PooledBatch::from_log_values(params.len(), origin, rows).expect("rows match states")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverlapBenchOptions {
    pub states: Vec<usize>,
    pub n_batch: usize,
    /// Batches per variance estimate.
    pub batches: usize,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for OverlapBenchOptions {
    fn default() -> Self {
        Self { states: vec![2, 3, 4, 6], n_batch: 1200, batches: 200, repetitions: 20, seed: 0 }
    }
}

/// One repetition: variances over `batches` independent batches of the
/// summed pairwise overlap variance for each estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapBenchRow {
    pub n_states: usize,
    pub repetition: usize,
    pub n_batch: usize,
    pub batches: usize,
    pub var_single: f64,
    pub var_msis: f64,
    /// `S^2 (S - 1) / (4 N)`, the delta-method value for orthogonal states.
    pub bound_single: f64,
    /// `S (S - 1) / (2 N)`.
    pub bound_msis: f64,
    pub max_abs_integrand: f64,
}

impl OverlapBenchRow {
    pub fn msis_wins(&self) -> bool {
        self.var_msis < self.var_single
    }
}

/// Symmetrized single-state overlap with known ratios,
/// `(mean_{p_s}[psi_t/psi_s] sqrt(r_t/r_s) + mean_{p_t}[psi_s/psi_t] sqrt(r_s/r_t)) / 2`.
pub fn single_state_signed(pooled: &PooledBatch, ratios: &RatioVector, s: usize, t: usize) -> Result<f64, EstimatorError> {
    let o = overlap_single_state(pooled, s, t)?;
    let r = ratios.as_slice();
    let k = (r[t] / r[s]).sqrt();
    Ok(0.5 * (o.a * k + o.b / k))
}

fn bench_repetition(
    model: &HermiteGaussianModel,
    params: &[f64],
    opts: &OverlapBenchOptions,
    n_states: usize,
    repetition: usize,
) -> Result<OverlapBenchRow, EstimatorError> {
    let n = opts.n_batch as f64;
    let s = n_states as f64;
    let mut row = OverlapBenchRow {
        n_states,
        repetition,
        n_batch: opts.n_batch,
        batches: opts.batches,
        var_single: 0.0,
        var_msis: 0.0,
        bound_single: s * s * (s - 1.0) / (4.0 * n),
        bound_msis: s * (s - 1.0) / (2.0 * n),
        max_abs_integrand: 0.0,
    };
    if n_states == 1 {
        return Ok(row);
    }
    let sampler = ModelSampler1D::new(model, params, 1.5);
    let ratios = hermite_ratios(n_states);
    let log_r: Vec<f64> = ratios.as_slice().iter().map(|r| r.ln()).collect();
    let mut rng = SmallRng::seed_from_u64(rng_key(opts.seed, n_states as u64, repetition as u64, 0));
    let pairs: Vec<(usize, usize)> = (0..n_states).flat_map(|a| (a + 1..n_states).map(move |b| (a, b))).collect();
    let mut single = vec![Vec::with_capacity(opts.batches); pairs.len()];
    let mut msis = vec![Vec::with_capacity(opts.batches); pairs.len()];
    for _ in 0..opts.batches {
        let batch = sampler
            .pooled(opts.n_batch / n_states, &mut rng)
            .map_err(|e| EstimatorError::InvalidRatios(e.to_string()))?;
        let m = overlap_msis(&batch, &ratios)?;
        for (k, &(a, b)) in pairs.iter().enumerate() {
            single[k].push(single_state_signed(&batch, &ratios, a, b)?);
            msis[k].push(m.s_hat[a][b]);
        }
        for r in batch.log_psi() {
            for &(a, b) in &pairs {
                let f = crate::estimators::msis_integrand(r, &log_r, a, b);
                row.max_abs_integrand = row.max_abs_integrand.max(f.abs());
            }
        }
    }
    row.var_single = single.iter().map(|v| stats::variance(v)).sum();
    row.var_msis = msis.iter().map(|v| stats::variance(v)).sum();
    Ok(row)
}

/// Single-state vs MSIS overlap variance on exact orthogonal Hermite states
/// sampled without Markov chains. Rows are ordered by `(n_states, repetition)`
/// and do not depend on the thread count.
pub fn bench_overlap(opts: &OverlapBenchOptions) -> Result<Vec<OverlapBenchRow>, EstimatorError> {
    let mut rows = Vec::new();
    for &n_states in &opts.states {
        if n_states == 0 || opts.n_batch < 2 * n_states {
            return Err(EstimatorError::TooFewSamples { state: 0, have: opts.n_batch, need: 2 * n_states.max(1) });
        }
        let model = HermiteGaussianModel::new(n_states, n_states - 1);
        let params = model.canonical_params(0.5);
        let mut block: Vec<OverlapBenchRow> = (0..opts.repetitions)
            .into_par_iter()
            .map(|rep| bench_repetition(&model, params.values(), opts, n_states, rep))
            .collect::<Result<_, _>>()?;
        rows.append(&mut block);
    }
    Ok(rows)
}

pub fn write_overlap_csv<W: Write>(mut out: W, rows: &[OverlapBenchRow]) -> std::io::Result<()> {
    writeln!(out, "n_states,repetition,n_batch,batches,var_single,var_msis,bound_single,bound_msis,max_abs_integrand")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:e},{:e},{:e},{:e},{}",
            r.n_states,
            r.repetition,
            r.n_batch,
            r.batches,
            r.var_single,
            r.var_msis,
            r.bound_single,
            r.bound_msis,
            r.max_abs_integrand
        )?;
    }
    Ok(())
}

/// A Gaussian family with known ratios `r_s = Z_0 / Z_s = (sigma_0 / sigma_s)^dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeFixture {
    pub name: String,
    pub dim: usize,
    /// `(mu, sigma)` per state; `mu` is applied on every axis.
    pub states: Vec<(f64, f64)>,
}

impl BridgeFixture {
    pub fn exact_ratios(&self) -> Vec<f64> {
        let s0 = self.states[0].1;
        self.states.iter().map(|&(_, s)| (s0 / s).powi(self.dim as i32)).collect()
    }

    pub fn standard() -> Vec<Self> {
        let f = |name: &str, dim, states: &[(f64, f64)]| Self { name: name.into(), dim, states: states.to_vec() };
        vec![
            f("identical", 1, &[(0.0, 1.0), (0.0, 1.0)]),
            f("gaussian-2d", 2, &[(0.0, 1.0), (0.0, 2.0)]),
            f("disjoint", 1, &[(0.0, 1.0), (16.0, 1.0)]),
            f("bridged", 1, &[(0.0, 1.0), (8.0, 4.0), (16.0, 1.0)]),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeBenchOptions {
    pub fixtures: Vec<BridgeFixture>,
    /// Total pooled samples, split evenly across states.
    pub sample_sizes: Vec<usize>,
    pub iterations: usize,
    pub clip: f64,
    pub seed: u64,
}

impl Default for BridgeBenchOptions {
    fn default() -> Self {
        Self {
            fixtures: BridgeFixture::standard(),
            sample_sizes: vec![1_000, 10_000, 20_000],
            iterations: 30,
            clip: BridgeOptions::default().clip,
            seed: 0,
        }
    }
}

/// State of the fixed-point iteration after `iteration` updates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeBenchRow {
    pub fixture: String,
    pub n_samples: usize,
    pub iteration: usize,
    pub ratios: Vec<f64>,
    /// Largest `|r_hat - r| / r` over states.
    pub max_rel_error: f64,
    pub residual: f64,
}

pub fn bridge_bench(opts: &BridgeBenchOptions) -> Result<Vec<BridgeBenchRow>, EstimatorError> {
    let mut rows = Vec::new();
    for (fi, fixture) in opts.fixtures.iter().enumerate() {
        let exact = fixture.exact_ratios();
        for (ni, &n) in opts.sample_sizes.iter().enumerate() {
            let mut rng = SmallRng::seed_from_u64(rng_key(opts.seed, fi as u64, ni as u64, 0));
            let per_state = (n / fixture.states.len()).max(1);
            let batch = gaussian_pooled(fixture.dim, &fixture.states, per_state, 0.0, &mut rng);
            let mut ratios = RatioVector::ones(fixture.states.len());
            for it in 1..=opts.iterations {
                let res = bridge_ratios(&batch, Some(&ratios), BridgeOptions { iterations: 1, clip: opts.clip })?;
                ratios = res.ratios;
                let max_rel_error = ratios
                    .as_slice()
                    .iter()
                    .zip(&exact)
                    .map(|(r, e)| (r - e).abs() / e)
                    .fold(0.0, f64::max);
                rows.push(BridgeBenchRow {
                    fixture: fixture.name.clone(),
                    n_samples: per_state * fixture.states.len(),
                    iteration: it,
                    ratios: ratios.as_slice().to_vec(),
                    max_rel_error,
                    residual: res.residual,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_bridge_csv<W: Write>(mut out: W, rows: &[BridgeBenchRow]) -> std::io::Result<()> {
    writeln!(out, "fixture,n_samples,iteration,ratios,max_rel_error,residual")?;
    for r in rows {
        let ratios: Vec<String> = r.ratios.iter().map(|v| format!("{v:e}")).collect();
        writeln!(
            out,
            "{},{},{},{},{:e},{:e}",
            r.fixture,
            r.n_samples,
            r.iteration,
            ratios.join(";"),
            r.max_rel_error,
            r.residual
        )?;
    }
    Ok(())
}
