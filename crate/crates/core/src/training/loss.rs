use super::snap::{snap_target, SpinExpectation};
use crate::ansatz::{Configuration, WaveFunction};
use crate::estimators::stats::clip_around_median;
use crate::estimators::{
    evaluate_samples, overlap_single_state, EnergyEstimate, EstimatorError, Hamiltonian, OverlapReport,
    StateSamples, LOG_RATIO_CLAMP,
};
use crate::sampler::PooledBatch;
use crate::SignedLog;

/// Clip half-width for the overlap-gradient ratios, in units of the
/// 95th-percentile deviation.
pub const OVERLAP_CLIP_WIDTH: f64 = 5.0;

/// Snap term inputs for one step.
pub struct SnapTerm<'a> {
    pub lambda: f64,
    pub spin: &'a dyn SpinExpectation,
    pub counts: Option<(usize, usize)>,
}

#[derive(Default)]
pub struct LossOptions<'a> {
    /// Use MSIS overlaps; otherwise each pair uses single-state estimates.
    pub msis: bool,
    pub snap: Option<SnapTerm<'a>>,
}

#[derive(Clone, Debug)]
pub struct LossGrad {
    pub grad: Vec<f64>,
    pub energies: Vec<EnergyEstimate>,
    /// Overlap magnitudes that entered the penalty.
    pub overlap: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    /// `sum beta_st S_st^2`.
    pub penalty: f64,
    pub snap: f64,
}

impl LossGrad {
    pub fn loss(&self) -> f64 {
        self.energies.iter().map(|e| e.energy).sum::<f64>() + self.penalty + self.snap
    }
}

/// Samples of one state's chain with the row of every state's value at each.
struct StateBatch<'a> {
    rows: Vec<&'a [SignedLog]>,
    samples: StateSamples,
}

fn state_batch<'a, W: WaveFunction + ?Sized>(
    hamiltonian: &Hamiltonian,
    model: &W,
    params: &[f64],
    pooled: &'a PooledBatch,
    state: usize,
) -> Result<StateBatch<'a>, EstimatorError> {
    let idx: Vec<usize> = pooled.samples_of(state).collect();
    if idx.is_empty() {
        return Err(EstimatorError::EmptyBatch { state });
    }
    let configs: Vec<Configuration> = idx.iter().map(|&i| pooled.configs()[i].clone()).collect();
    let own: Vec<SignedLog> = idx.iter().map(|&i| pooled.log_psi()[i][state]).collect();
    let samples = evaluate_samples(hamiltonian, model, params, state, &configs, &own)?;
    let rows = samples.used.iter().map(|&k| pooled.log_psi()[idx[k]].as_slice()).collect();
    Ok(StateBatch { rows, samples })
}

/// Gradient of the penalty objective
/// `sum_s E_s + sum_{s<t} beta_st |S_st|^2 (+ snap)` with respect to all
/// parameters. Only the higher state of each pair receives the overlap
/// gradient, `2 O_st E_{p_t}[(psi_s/psi_t - O_ts) grad log|psi_t|]`.
pub fn total_loss_grad<W: WaveFunction + ?Sized>(
    hamiltonian: &Hamiltonian,
    model: &W,
    params: &[f64],
    pooled: &PooledBatch,
    report: &OverlapReport,
    beta: &[Vec<f64>],
    opts: &LossOptions<'_>,
) -> Result<LossGrad, EstimatorError> {
    loss_grad_with(hamiltonian, model, params, pooled, report, |_| beta.to_vec(), opts)
}

/// Like [`total_loss_grad`], with the weights computed from this batch's
/// energy estimates.
pub(crate) fn loss_grad_with<W, F>(
    hamiltonian: &Hamiltonian,
    model: &W,
    params: &[f64],
    pooled: &PooledBatch,
    report: &OverlapReport,
    weights: F,
    opts: &LossOptions<'_>,
) -> Result<LossGrad, EstimatorError>
where
    W: WaveFunction + ?Sized,
    F: FnOnce(&[EnergyEstimate]) -> Vec<Vec<f64>>,
{
    let n_states = model.n_states();
    let n_params = model.layout().len();
    if pooled.configs().len() != pooled.len() {
        return Err(EstimatorError::InvalidRatios("pooled batch carries no configurations".into()));
    }
    let batches: Vec<StateBatch<'_>> =
        (0..n_states).map(|s| state_batch(hamiltonian, model, params, pooled, s)).collect::<Result<_, _>>()?;
    let energies: Vec<EnergyEstimate> = batches
        .iter()
        .enumerate()
        .map(|(s, b)| EnergyEstimate::from_samples(s, &b.samples, n_params))
        .collect::<Result<_, _>>()?;
    let beta = weights(&energies);
    let mut grad = vec![0.0; n_params];
    for e in &energies {
        grad.iter_mut().zip(&e.grad).for_each(|(g, v)| *g += v);
    }

    let mut overlap = vec![vec![0.0; n_states]; n_states];
    let mut o_hat = vec![vec![1.0; n_states]; n_states];
    for s in 0..n_states {
        for t in 0..n_states {
            if s == t {
                overlap[s][t] = 1.0;
            } else if opts.msis {
                overlap[s][t] = report.s_hat[s][t];
                o_hat[s][t] = report.o_hat[s][t];
            } else if s < t {
                let single = overlap_single_state(pooled, s, t)?;
                overlap[s][t] = single.abs;
                overlap[t][s] = single.abs;
                o_hat[s][t] = single.a;
                o_hat[t][s] = single.b;
            }
        }
    }

    let mut penalty = 0.0;
    for s in 0..n_states {
        for t in 0..n_states {
            let b = beta[s][t];
            if s == t || b <= 0.0 {
                continue;
            }
            penalty += b * overlap[s][t] * overlap[s][t];
            let batch = &batches[t];
            if batch.rows.is_empty() {
                continue;
            }
            let ratios: Vec<f64> = batch
                .rows
                .iter()
                .map(|row| if row[s].is_zero() { 0.0 } else { row[s].ratio_clamped(&row[t], LOG_RATIO_CLAMP).0 })
                .collect();
            let (ratios, _) = clip_around_median(&ratios, OVERLAP_CLIP_WIDTH);
            let centre = o_hat[t][s];
            let scale = b * 2.0 * o_hat[s][t] / ratios.len() as f64;
            for (r, g) in ratios.iter().zip(&batch.samples.grad_log) {
                let w = scale * (r - centre);
                grad.iter_mut().zip(g).for_each(|(acc, gi)| *acc += w * gi);
            }
        }
    }

    let mut snap = 0.0;
    if let Some(term) = &opts.snap {
        for s in 0..n_states {
            let v = term.spin.s2(s);
            let target = snap_target(v, term.counts);
            snap += target.loss(term.lambda);
            if let Some(g) = term.spin.grad(s) {
                let w = term.lambda * 2.0 * (v.max(0.0) - target.target);
                grad.iter_mut().zip(&g).for_each(|(acc, gi)| *acc += w * gi);
            }
        }
    }
    Ok(LossGrad { grad, energies, overlap, beta, penalty, snap })
}
