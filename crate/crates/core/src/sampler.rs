//! Metropolis–Hastings walker ensembles, one chain per state.

use std::collections::VecDeque;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{AnsatzError, Configuration, WaveFunction};
use crate::SignedLog;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SamplerError {
    #[error("evaluation failed for state {state}, walker {walker}: {source}")]
    Evaluation {
        state: usize,
        walker: usize,
        #[source]
        source: AnsatzError,
    },
    #[error("chain for state {state} has no walkers")]
    Empty { state: usize },
    #[error("invalid sampler setting: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Metropolis steps between optimizer steps.
    pub steps_per_iteration: usize,
    pub initial_sigma: f64,
    pub target_acceptance: f64,
    pub adapt_rate: f64,
    /// Number of recent steps that must be recorded before adapting.
    pub adapt_window: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Move one random particle per proposal instead of all of them.
    pub single_particle_moves: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps_per_iteration: 20,
            initial_sigma: 0.5,
            target_acceptance: 0.525,
            adapt_rate: 0.1,
            adapt_window: 20,
            sigma_min: 1e-3,
            sigma_max: 1e2,
            single_particle_moves: false,
        }
    }
}

/// SplitMix64 finalizer.
#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the generator used by one walker at one step. Distinct
/// `(stream, walker, step)` keys give independent streams.
pub fn rng_key(seed: u64, stream: u64, walker: u64, step: u64) -> u64 {
    splitmix(seed ^ splitmix(stream ^ splitmix(walker ^ splitmix(step))))
}

pub fn walker_rng(seed: u64, stream: u64, walker: u64, step: u64) -> SmallRng {
    SmallRng::seed_from_u64(rng_key(seed, stream, walker, step))
}

/// Walkers per state for a total batch: equal shares, remainder to the lowest
/// state indices.
pub fn walkers_per_state(n_batch: usize, n_states: usize) -> Vec<usize> {
    (0..n_states).map(|s| n_batch / n_states + usize::from(s < n_batch % n_states)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub walkers: Vec<Configuration>,
    pub log_psi: Vec<SignedLog>,
    pub step_sigma: f64,
    /// Acceptance fraction of each recent step.
    pub acc_window: VecDeque<f64>,
    pub rng_stream: u64,
    /// Number of Metropolis steps taken, the counter part of every RNG key.
    pub step: u64,
    pub proposals: u64,
    pub accepted: u64,
    #[serde(skip)]
    scratch: Scratch,
}

/// Reusable proposal buffers; never part of the chain's observable state.
#[derive(Clone, Debug, Default)]
struct Scratch(Vec<Configuration>);

impl PartialEq for Scratch {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl ChainState {
    pub fn new(walkers: Vec<Configuration>, step_sigma: f64, rng_stream: u64) -> Self {
        let n = walkers.len();
        Self {
            walkers,
            log_psi: vec![SignedLog::zero(); n],
            step_sigma,
            acc_window: VecDeque::new(),
            rng_stream,
            step: 0,
            proposals: 0,
            accepted: 0,
            scratch: Scratch::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.walkers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walkers.is_empty()
    }

    /// Recomputes cached values for `state` under `params`.
    pub fn sync<W: WaveFunction + ?Sized>(&mut self, model: &W, params: &[f64], state: usize) -> Result<(), SamplerError> {
        self.log_psi = self
            .walkers
            .par_iter()
            .enumerate()
            .map(|(walker, c)| model.eval(params, state, c).map_err(|source| SamplerError::Evaluation { state, walker, source }))
            .collect::<Result<_, _>>()?;
        Ok(())
    }

    /// One Metropolis–Hastings sweep over every walker.
    pub fn mh_step<W: WaveFunction + ?Sized>(
        &mut self,
        model: &W,
        params: &[f64],
        state: usize,
        seed: u64,
        cfg: &SamplerConfig,
    ) {
        let sigma = self.step_sigma;
        let stream = self.rng_stream;
        let step = self.step;
        if self.scratch.0.len() != self.walkers.len() {
            self.scratch.0 = self.walkers.clone();
        }
        let n_acc = self
            .walkers
            .par_iter_mut()
            .zip(self.log_psi.par_iter_mut())
            .zip(self.scratch.0.par_iter_mut())
            .enumerate()
            .map(|(w, ((config, current), proposal))| {
                let mut rng = walker_rng(seed, stream, w as u64, step);
                if proposal.coords().len() == config.coords().len() && proposal.n_up() == config.n_up() {
                    proposal.coords_mut().copy_from_slice(config.coords());
                } else {
                    *proposal = config.clone();
                }
                if cfg.single_particle_moves {
                    let i = rng.random_range(0..config.n_particles());
                    let d = config.dim();
                    for x in &mut proposal.coords_mut()[i * d..(i + 1) * d] {
                        *x += sigma * rng.sample::<f64, _>(StandardNormal);
                    }
                } else {
                    for x in proposal.coords_mut() {
                        *x += sigma * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                let u: f64 = rng.random();
                let Ok(new) = model.eval(params, state, proposal) else { return false };
                if new.is_zero() || !new.log_abs().is_finite() {
                    return false;
                }
                let accept = current.is_zero() || u < (2.0 * (new.log_abs() - current.log_abs())).exp();
                if accept {
                    std::mem::swap(config, proposal);
                    *current = new;
                }
                accept
            })
            .filter(|&a| a)
            .count();

        let n = self.walkers.len().max(1);
        self.proposals += n as u64;
        self.accepted += n_acc as u64;
        self.acc_window.push_back(n_acc as f64 / n as f64);
        while self.acc_window.len() > cfg.adapt_window.max(1) {
            self.acc_window.pop_front();
        }
        self.step += 1;
    }

    /// Mean acceptance over the recorded window.
    pub fn acceptance(&self) -> f64 {
        if self.acc_window.is_empty() {
            return 0.0;
        }
        self.acc_window.iter().sum::<f64>() / self.acc_window.len() as f64
    }

    /// Multiplicative step-size update toward the target acceptance. Does
    /// nothing until the window is full.
    pub fn adapt_step(&mut self, cfg: &SamplerConfig) {
        if self.acc_window.len() < cfg.adapt_window {
            return;
        }
        let acc = self.acceptance();
        self.step_sigma =
            (self.step_sigma * (cfg.adapt_rate * (acc - cfg.target_acceptance)).exp()).clamp(cfg.sigma_min, cfg.sigma_max);
    }
}

/// Samples of all states pooled together, each evaluated under every state.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledBatch {
    n_states: usize,
    /// State whose chain produced each sample.
    origin: Vec<usize>,
    /// `log_psi[i][t]` is `psi_t` at sample `i`.
    log_psi: Vec<Vec<SignedLog>>,
    counts: Vec<usize>,
    configs: Vec<Configuration>,
}

impl PooledBatch {
    /// Builds a batch directly from evaluated values; `configs` stays empty.
    pub fn from_log_values(n_states: usize, origin: Vec<usize>, log_psi: Vec<Vec<SignedLog>>) -> Result<Self, SamplerError> {
        if origin.len() != log_psi.len() {
            return Err(SamplerError::Invalid("origin and value counts differ".into()));
        }
        if let Some(bad) = origin.iter().position(|&s| s >= n_states) {
            return Err(SamplerError::Invalid(format!("sample {bad} has origin outside 0..{n_states}")));
        }
        if let Some(bad) = log_psi.iter().position(|row| row.len() != n_states) {
            return Err(SamplerError::Invalid(format!("sample {bad} lacks values for all {n_states} states")));
        }
        let mut counts = vec![0; n_states];
        for &s in &origin {
            counts[s] += 1;
        }
        Ok(Self { n_states, origin, log_psi, counts, configs: Vec::new() })
    }

    /// Like [`Self::from_log_values`] but keeps the sample positions.
    pub fn from_parts(
        n_states: usize,
        origin: Vec<usize>,
        log_psi: Vec<Vec<SignedLog>>,
        configs: Vec<Configuration>,
    ) -> Result<Self, SamplerError> {
        if configs.len() != origin.len() {
            return Err(SamplerError::Invalid("config and origin counts differ".into()));
        }
        let mut batch = Self::from_log_values(n_states, origin, log_psi)?;
        batch.configs = configs;
        Ok(batch)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn len(&self) -> usize {
        self.origin.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origin.is_empty()
    }

    pub fn origin(&self) -> &[usize] {
        &self.origin
    }

    pub fn log_psi(&self) -> &[Vec<SignedLog>] {
        &self.log_psi
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn configs(&self) -> &[Configuration] {
        &self.configs
    }

    /// Wave-function evaluations that went into the batch.
    pub fn n_evaluations(&self) -> usize {
        self.len() * self.n_states
    }

    /// Indices of samples drawn from the chain of `state`.
    pub fn samples_of(&self, state: usize) -> impl Iterator<Item = usize> + '_ {
        self.origin.iter().enumerate().filter(move |&(_, &s)| s == state).map(|(i, _)| i)
    }
}

/// Chains for all states plus the shared base seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkerEnsemble {
    pub chains: Vec<ChainState>,
    pub seed: u64,
}

impl WalkerEnsemble {
    /// `init(state, walker, rng)` produces starting positions; chain `s` uses
    /// RNG stream `s`.
    pub fn new<W, F>(
        model: &W,
        params: &[f64],
        n_batch: usize,
        seed: u64,
        cfg: &SamplerConfig,
        mut init: F,
    ) -> Result<Self, SamplerError>
    where
        W: WaveFunction + ?Sized,
        F: FnMut(usize, usize, &mut SmallRng) -> Configuration,
    {
        let n_states = model.n_states();
        let mut chains = Vec::with_capacity(n_states);
        for (s, n) in walkers_per_state(n_batch, n_states).into_iter().enumerate() {
            if n == 0 {
                return Err(SamplerError::Empty { state: s });
            }
            let walkers = (0..n)
                .map(|w| {
                    let mut rng = walker_rng(seed ^ 0x5EED_1A17, s as u64, w as u64, 0);
                    init(s, w, &mut rng)
                })
                .collect();
            let mut chain = ChainState::new(walkers, cfg.initial_sigma, s as u64);
            chain.sync(model, params, s)?;
            chains.push(chain);
        }
        Ok(Self { chains, seed })
    }

    pub fn n_states(&self) -> usize {
        self.chains.len()
    }

    pub fn sync<W: WaveFunction + ?Sized>(&mut self, model: &W, params: &[f64]) -> Result<(), SamplerError> {
        for (s, c) in self.chains.iter_mut().enumerate() {
            c.sync(model, params, s)?;
        }
        Ok(())
    }

    /// `n_steps` Metropolis steps for every chain, optionally adapting step sizes.
    pub fn advance<W: WaveFunction + ?Sized>(
        &mut self,
        model: &W,
        params: &[f64],
        n_steps: usize,
        cfg: &SamplerConfig,
        adapt: bool,
    ) {
        let seed = self.seed;
        for (s, chain) in self.chains.iter_mut().enumerate() {
            for _ in 0..n_steps {
                chain.mh_step(model, params, s, seed, cfg);
                if adapt {
                    chain.adapt_step(cfg);
                }
            }
        }
    }

    /// Evaluates every state at every walker of every chain.
    pub fn pool<W: WaveFunction + ?Sized>(&self, model: &W, params: &[f64]) -> Result<PooledBatch, SamplerError> {
        let n_states = model.n_states();
        let mut origin = Vec::new();
        let mut configs = Vec::new();
        let mut log_psi = Vec::new();
        for (s, chain) in self.chains.iter().enumerate() {
            let rows: Vec<Vec<SignedLog>> = chain
                .walkers
                .par_iter()
                .enumerate()
                .map(|(walker, c)| {
                    model.eval_all(params, c).map_err(|source| SamplerError::Evaluation { state: s, walker, source })
                })
                .collect::<Result<_, _>>()?;
            origin.extend(std::iter::repeat_n(s, rows.len()));
            configs.extend(chain.walkers.iter().cloned());
            log_psi.extend(rows);
        }
        PooledBatch::from_parts(n_states, origin, log_psi, configs)
    }

    /// New chain `i` is old chain `perm[i]`; RNG streams travel with chains.
    pub fn permute(&mut self, perm: &[usize]) {
        let old = std::mem::take(&mut self.chains);
        self.chains = perm.iter().map(|&p| old[p].clone()).collect();
    }
}
