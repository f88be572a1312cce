use rayon::prelude::*;

use super::stats::{clip_around_median, mean, median, variance};
use super::{EstimatorError, Hamiltonian};
use crate::ansatz::{AnsatzError, Configuration, WaveFunction};
use crate::SignedLog;

/// Samples whose `log|psi|` falls this far below the batch median are treated
/// as sitting on a node and skipped.
pub const NODE_LOG_THRESHOLD: f64 = 30.0;

/// Local-energy clipping half-width in units of the 95th-percentile deviation.
pub const ENERGY_CLIP_WIDTH: f64 = 5.0;

/// `-1/2 (lap log|psi| + |grad log|psi||^2) + V`.
pub fn local_energy<W: WaveFunction + ?Sized>(
    hamiltonian: &Hamiltonian,
    model: &W,
    params: &[f64],
    state: usize,
    config: &Configuration,
) -> Result<f64, AnsatzError> {
    let d = model.laplacian_log(params, state, config)?;
    Ok(-0.5 * (d.laplacian + d.grad_sq) + hamiltonian.potential(config))
}

/// Per-sample local energies and log-derivatives for one state, restricted to
/// samples that passed the node guard.
#[derive(Clone, Debug, Default)]
pub struct StateSamples {
    /// Positions in the input batch of the samples kept.
    pub used: Vec<usize>,
    pub e_loc: Vec<f64>,
    pub grad_log: Vec<Vec<f64>>,
    pub n_skipped: usize,
}

/// Evaluates `E_loc` and `grad log|psi|` on every sample not flagged as node
/// proximate.
pub fn evaluate_samples<W: WaveFunction + ?Sized>(
    hamiltonian: &Hamiltonian,
    model: &W,
    params: &[f64],
    state: usize,
    configs: &[Configuration],
    log_psi: &[SignedLog],
) -> Result<StateSamples, EstimatorError> {
    let finite: Vec<f64> = log_psi.iter().filter(|v| !v.is_zero()).map(|v| v.log_abs()).collect();
    let floor = if finite.is_empty() { f64::INFINITY } else { median(&finite) - NODE_LOG_THRESHOLD };
    let rows: Vec<Option<(usize, f64, Vec<f64>)>> = configs
        .par_iter()
        .zip(log_psi.par_iter())
        .enumerate()
        .map(|(i, (c, v))| {
            if v.is_zero() || v.log_abs() < floor {
                return Ok(None);
            }
            let e = match local_energy(hamiltonian, model, params, state, c) {
                Ok(e) if e.is_finite() => e,
                Ok(_) | Err(AnsatzError::Node) => return Ok(None),
                Err(source) => return Err(EstimatorError::Ansatz { sample: i, source }),
            };
            match model.grad_log(params, state, c) {
                Ok(g) => Ok(Some((i, e, g))),
                Err(AnsatzError::Node) => Ok(None),
                Err(source) => Err(EstimatorError::Ansatz { sample: i, source }),
            }
        })
        .collect::<Result<_, _>>()?;
    let mut out = StateSamples::default();
    for row in rows {
        match row {
            Some((i, e, g)) => {
                out.used.push(i);
                out.e_loc.push(e);
                out.grad_log.push(g);
            }
            None => out.n_skipped += 1,
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct EnergyEstimate {
    /// Mean of the clipped local energies.
    pub energy: f64,
    pub stderr: f64,
    pub variance: f64,
    pub grad: Vec<f64>,
    pub n_used: usize,
    pub n_skipped: usize,
    pub n_clipped: usize,
}

impl EnergyEstimate {
    /// `2 mean[(E_loc - E) grad log|psi|]` with clipped local energies.
    pub fn from_samples(state: usize, samples: &StateSamples, n_params: usize) -> Result<Self, EstimatorError> {
        let n = samples.e_loc.len();
        if n == 0 {
            return Err(EstimatorError::EmptyBatch { state });
        }
        let (clipped, n_clipped) = clip_around_median(&samples.e_loc, ENERGY_CLIP_WIDTH);
        let energy = mean(&clipped);
        let mut grad = vec![0.0; n_params];
        for (e, g) in clipped.iter().zip(&samples.grad_log) {
            let w = e - energy;
            for (acc, gi) in grad.iter_mut().zip(g) {
                *acc += w * gi;
            }
        }
        let scale = 2.0 / n as f64;
        grad.iter_mut().for_each(|v| *v *= scale);
        let var = variance(&clipped);
        Ok(Self {
            energy,
            stderr: (var / n as f64).sqrt(),
            variance: var,
            grad,
            n_used: n,
            n_skipped: samples.n_skipped,
            n_clipped,
        })
    }
}

pub fn energy_and_grad<W: WaveFunction + ?Sized>(
    hamiltonian: &Hamiltonian,
    model: &W,
    params: &[f64],
    state: usize,
    configs: &[Configuration],
    log_psi: &[SignedLog],
) -> Result<EnergyEstimate, EstimatorError> {
    let samples = evaluate_samples(hamiltonian, model, params, state, configs, log_psi)?;
    EnergyEstimate::from_samples(state, &samples, model.layout().len())
}
