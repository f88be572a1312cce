use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::checkpoint::{encode_params, Checkpoint, EmaSnapshot, RngCursor};
use super::loss::{loss_grad_with, LossOptions, SnapTerm};
use super::optimizer::MomentumSgd;
use super::penalty::{is_identity, reorder_permutation, PenaltySchedule};
use super::snap::{snap_ramp, SuppliedSpin};
use super::TrainError;
use crate::ansatz::{Configuration, ExcitedPfaffianModel, HermiteGaussianModel, ParamVector, WaveFunction};
use crate::config::{HermiteInit, RunConfig, SystemSpec};
use crate::estimators::{overlap_report, BridgeOptions, Hamiltonian, OverlapReport, RatioVector};
use crate::sampler::{PooledBatch, SamplerConfig, WalkerEnsemble};

/// Energy gap below which two states count as degenerate for collapse detection.
pub const COLLAPSE_ENERGY_TOL: f64 = 1e-4;
/// Overlap magnitude above which degenerate states are flagged as collapsed.
pub const COLLAPSE_OVERLAP: f64 = 0.9;

const INIT_SALT: u64 = 0x1A17_C0EF;

/// Everything logged about one optimizer step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub energy: Vec<f64>,
    pub energy_stderr: Vec<f64>,
    /// Overlaps entering the penalty: signed MSIS values, or single-state
    /// magnitudes in the ablation.
    pub overlap: Vec<Vec<f64>>,
    pub bhattacharyya: Vec<Vec<f64>>,
    pub ess: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    /// `sum_{s<t} S_st^2`.
    pub overlap_loss: f64,
    pub penalty: f64,
    pub snap: f64,
    pub grad_norm: f64,
    pub learning_rate: f64,
    pub ratio_residual: f64,
    /// Reordering applied at the end of the step.
    pub permutation: Vec<usize>,
    pub collapsed: Vec<(usize, usize)>,
}

/// Sampling-only estimates at fixed parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub energy: Vec<f64>,
    pub energy_stderr: Vec<f64>,
    pub overlap: Vec<Vec<f64>>,
    pub bhattacharyya: Vec<Vec<f64>>,
    pub ess: Vec<f64>,
    pub ess_normalized: Vec<f64>,
    pub ratios: Vec<f64>,
    pub batches: usize,
}

pub fn build_hamiltonian(system: &SystemSpec) -> Hamiltonian {
    match system {
        SystemSpec::Harmonic1d { omega, .. } => Hamiltonian::Harmonic { omega: *omega },
        SystemSpec::Polynomial1d { coefficients, .. } => Hamiltonian::Polynomial { coefficients: coefficients.clone() },
        SystemSpec::ToyMolecular { nuclei, charges, .. } => {
            Hamiltonian::Molecular { nuclei: nuclei.clone(), charges: charges.clone() }
        }
    }
}

fn hermite_params(model: &HermiteGaussianModel, init: &HermiteInit, seed: u64) -> ParamVector {
    let mut p = model.canonical_params(init.alpha);
    if init.noise > 0.0 {
        let mut rng = SmallRng::seed_from_u64(seed ^ INIT_SALT);
        let alpha_range = p.layout().find("alpha", None).unwrap().range();
        for (i, v) in p.iter_mut().enumerate() {
            if !alpha_range.contains(&i) {
                *v += init.noise * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    p
}

/// Model and starting parameters for a system.
pub fn build_model(system: &SystemSpec, seed: u64) -> Result<(Box<dyn WaveFunction>, ParamVector), TrainError> {
    match system {
        SystemSpec::Harmonic1d { n_states, max_degree, init, .. }
        | SystemSpec::Polynomial1d { n_states, max_degree, init, .. } => {
            let model = HermiteGaussianModel::new(*n_states, max_degree.unwrap_or(*n_states));
            let params = hermite_params(&model, init, seed);
            Ok((Box::new(model), params))
        }
        SystemSpec::ToyMolecular { nuclei, n_up, n_down, n_states, n_det, orbitals_per_nucleus, init_noise, .. } => {
            let nuclei = nuclei.iter().map(|n| n.to_vec()).collect();
            let model = ExcitedPfaffianModel::new(*n_states, *n_det, n_up + n_down, *n_up, nuclei, *orbitals_per_nucleus)?;
            let params = model.init_params(seed ^ INIT_SALT, *init_noise);
            Ok((Box::new(model), params))
        }
    }
}

/// Starting walker positions: standard normal on a line, or particles
/// scattered around the nuclei in turn.
pub fn initial_walker(system: &SystemSpec, rng: &mut SmallRng) -> Configuration {
    match system {
        SystemSpec::Harmonic1d { .. } | SystemSpec::Polynomial1d { .. } => {
            Configuration::point(rng.sample(StandardNormal))
        }
        SystemSpec::ToyMolecular { nuclei, n_up, n_down, .. } => {
            let n = n_up + n_down;
            let mut coords = Vec::with_capacity(3 * n);
            for i in 0..n {
                let centre = nuclei[i % nuclei.len()];
                for c in centre {
                    coords.push(c + 0.7 * rng.sample::<f64, _>(StandardNormal));
                }
            }
            Configuration::new(3, *n_up, coords).expect("walker layout matches system")
        }
    }
}

/// Mutable state of a multi-state optimization run.
pub struct Trainer {
    pub config: RunConfig,
    pub hamiltonian: Hamiltonian,
    pub model: Box<dyn WaveFunction>,
    pub params: ParamVector,
    pub optimizer: MomentumSgd,
    pub schedule: PenaltySchedule,
    pub ensemble: WalkerEnsemble,
    pub sampler: SamplerConfig,
    pub ratios: Option<RatioVector>,
    pub spin: Option<SuppliedSpin>,
    pub step: u64,
}

impl Trainer {
    pub fn new(config: RunConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let (model, params) = build_model(&config.system, config.seed)?;
        Self::with_model(config, model, params)
    }

    /// Starts from explicit parameters, e.g. after pretraining.
    pub fn with_model(config: RunConfig, model: Box<dyn WaveFunction>, params: ParamVector) -> Result<Self, TrainError> {
        let n_states = model.n_states();
        let hamiltonian = build_hamiltonian(&config.system);
        let sampler = config.sampler.sampler_config();
        let system = config.system.clone();
        let mut ensemble = WalkerEnsemble::new(
            &*model,
            &params,
            config.sampler.n_walkers_total,
            config.seed,
            &sampler,
            |_, _, rng| initial_walker(&system, rng),
        )?;
        ensemble.advance(&*model, &params, config.sampler.burn_in, &sampler, true);
        let t = &config.training;
        let optimizer = MomentumSgd::new(params.len(), t.lr0, t.t_decay, t.momentum, t.grad_clip);
        let schedule = PenaltySchedule::new(n_states, t.beta_tilde, t.eps_floor, t.ema_decay);
        let spin = t.snap.enabled.then(|| SuppliedSpin(t.snap.s2_values.clone()));
        Ok(Self {
            config,
            hamiltonian,
            model,
            params,
            optimizer,
            schedule,
            ensemble,
            sampler,
            ratios: None,
            spin,
            step: 0,
        })
    }

    pub fn n_states(&self) -> usize {
        self.model.n_states()
    }

    fn bridge_options(&self) -> BridgeOptions {
        BridgeOptions { iterations: self.config.estimators.bridge_iters, clip: self.config.estimators.bridge_clip }
    }

    fn sample(&mut self) -> Result<(PooledBatch, OverlapReport), TrainError> {
        self.ensemble.advance(&*self.model, &self.params, self.sampler.steps_per_iteration, &self.sampler, true);
        let pooled = self.ensemble.pool(&*self.model, &self.params)?;
        let report = overlap_report(&pooled, self.ratios.as_ref(), self.bridge_options())?;
        self.ratios = Some(report.ratios.clone());
        Ok((pooled, report))
    }

    pub fn snap_weight(&self) -> f64 {
        let s = &self.config.training.snap;
        if s.enabled {
            snap_ramp(self.step as f64, s.t_ramp, s.width)
        } else {
            0.0
        }
    }

    /// One iteration: decorrelate, pool, estimate, update, reorder.
    pub fn step(&mut self) -> Result<StepRecord, TrainError> {
        let (pooled, report) = self.sample()?;
        let lambda = self.snap_weight();
        let counts = self.config.system.spin_counts();
        let opts = LossOptions {
            msis: self.config.estimators.msis_enabled,
            snap: self.spin.as_ref().map(|spin| SnapTerm { lambda, spin, counts }),
        };
        let schedule = &mut self.schedule;
        let loss = loss_grad_with(
            &self.hamiltonian,
            &*self.model,
            &self.params,
            &pooled,
            &report,
            |energies| {
                let means: Vec<f64> = energies.iter().map(|e| e.energy).collect();
                let stds: Vec<f64> = energies.iter().map(|e| e.variance.sqrt()).collect();
                schedule.update(&means, &stds);
                schedule.weights()
            },
            &opts,
        )?;
        let step = self.step;
        if let Some(bad) = loss.energies.iter().position(|e| !e.energy.is_finite()) {
            return Err(TrainError::Diverged { step, reason: format!("energy of state {bad} is not finite") });
        }
        if loss.grad.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::Diverged { step, reason: "gradient is not finite".into() });
        }
        let last_good = self.params.clone();
        let last_velocity = self.optimizer.velocity.clone();
        let mut grad = loss.grad.clone();
        let learning_rate = self.optimizer.learning_rate(step);
        let grad_norm = self.optimizer.step(&mut self.params, &mut grad, step);
        let restore = |this: &mut Self| {
            this.params = last_good.clone();
            this.optimizer.velocity = last_velocity.clone();
        };
        if let Some(i) = self.params.iter().position(|p| !p.is_finite()) {
            restore(self);
            return Err(TrainError::Diverged { step, reason: format!("parameter {i} is not finite") });
        }

        let permutation = reorder_permutation(&self.schedule.ema_mean);
        if !is_identity(&permutation) {
            self.apply_permutation(&permutation);
        }
        if let Err(e) = self.ensemble.sync(&*self.model, &self.params) {
            restore(self);
            if !is_identity(&permutation) {
                let mut inverse = vec![0; permutation.len()];
                for (i, &p) in permutation.iter().enumerate() {
                    inverse[p] = i;
                }
                self.apply_permutation(&inverse);
            }
            let _ = self.ensemble.sync(&*self.model, &self.params);
            return Err(TrainError::Diverged { step, reason: format!("updated parameters do not evaluate: {e}") });
        }
        self.step += 1;

        let n = self.n_states();
        let mut overlap_loss = 0.0;
        let mut collapsed = Vec::new();
        for s in 0..n {
            for t in s + 1..n {
                let o = loss.overlap[s][t];
                overlap_loss += o * o;
                let gap = (self.schedule.ema_mean[s] - self.schedule.ema_mean[t]).abs();
                if gap < COLLAPSE_ENERGY_TOL && o.abs() > COLLAPSE_OVERLAP {
                    collapsed.push((s, t));
                }
            }
        }
        Ok(StepRecord {
            step,
            energy: loss.energies.iter().map(|e| e.energy).collect(),
            energy_stderr: loss.energies.iter().map(|e| e.stderr).collect(),
            overlap: loss.overlap.clone(),
            bhattacharyya: report.f_hat.clone(),
            ess: report.ess.clone(),
            beta: loss.beta.clone(),
            overlap_loss,
            penalty: loss.penalty,
            snap: loss.snap,
            grad_norm,
            learning_rate,
            ratio_residual: report.fixed_point_residual,
            permutation,
            collapsed,
        })
    }

    /// New state `i` becomes old state `perm[i]` everywhere state-indexed
    /// data lives.
    pub fn apply_permutation(&mut self, perm: &[usize]) {
        self.params.permute_states(perm);
        self.params.layout().clone().permute_states(&mut self.optimizer.velocity, perm);
        self.ensemble.permute(perm);
        self.schedule.permute(perm);
        if let Some(r) = &mut self.ratios {
            r.permute(perm);
        }
        if let Some(spin) = &mut self.spin {
            let old = spin.0.clone();
            spin.0 = perm.iter().map(|&p| old[p]).collect();
        }
    }

    /// Averages `batches` sampling-only batches at the current parameters.
    pub fn evaluate(&mut self, batches: usize) -> Result<Evaluation, TrainError> {
        let n = self.n_states();
        let batches = batches.max(1);
        let mut energies = vec![Vec::with_capacity(batches); n];
        let mut stderr_sq = vec![0.0; n];
        let mut overlap = vec![vec![0.0; n]; n];
        let mut bhat = vec![vec![0.0; n]; n];
        let mut ess = vec![0.0; n];
        let mut ess_norm = vec![0.0; n];
        for _ in 0..batches {
            let (pooled, report) = self.sample()?;
            let opts = LossOptions { msis: self.config.estimators.msis_enabled, snap: None };
            let zero = vec![vec![0.0; n]; n];
            let loss = loss_grad_with(&self.hamiltonian, &*self.model, &self.params, &pooled, &report, |_| zero, &opts)?;
            for s in 0..n {
                energies[s].push(loss.energies[s].energy);
                stderr_sq[s] += loss.energies[s].stderr.powi(2);
                ess[s] += report.ess[s] / batches as f64;
                ess_norm[s] += report.ess_normalized[s] / batches as f64;
                for t in 0..n {
                    overlap[s][t] += loss.overlap[s][t] / batches as f64;
                    bhat[s][t] += report.f_hat[s][t] / batches as f64;
                }
            }
        }
        let b = batches as f64;
        Ok(Evaluation {
            energy: energies.iter().map(|e| e.iter().sum::<f64>() / b).collect(),
            energy_stderr: stderr_sq.iter().map(|v| v.sqrt() / b).collect(),
            overlap,
            bhattacharyya: bhat,
            ess,
            ess_normalized: ess_norm,
            ratios: self.ratios.as_ref().map(|r| r.as_slice().to_vec()).unwrap_or_else(|| vec![1.0; n]),
            batches,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let chains = &self.ensemble.chains;
        Checkpoint {
            step: self.step,
            params: encode_params(&self.params),
            rng_cursor: RngCursor {
                seed: self.ensemble.seed,
                streams: chains.iter().map(|c| c.rng_stream).collect(),
                steps: chains.iter().map(|c| c.step).collect(),
            },
            emas: EmaSnapshot {
                mean: self.schedule.ema_mean.clone(),
                std: self.schedule.ema_std.clone(),
                updates: self.schedule.updates,
            },
            step_sigmas: chains.iter().map(|c| c.step_sigma).collect(),
        }
    }
}
