use crate::ansatz::{Configuration, WaveFunction};
use crate::sampler::{PooledBatch, SamplerError};
use rand::Rng;
use rand_distr::StandardNormal;

/// Rejection sampler for an unnormalized 1-D density given by its log.
///
/// The proposal is a centered normal; the envelope constant is the maximum
/// density ratio on a fine grid times a safety margin, so samples are exact as
/// long as the ratio has no sharp peak between grid points.
#[derive(Clone, Debug)]
pub struct RejectionSampler1D<F> {
    log_density: F,
    sigma: f64,
    log_bound: f64,
}

impl<F: Fn(f64) -> f64> RejectionSampler1D<F> {
    pub fn new(log_density: F, sigma: f64, half_width: f64) -> Self {
        let n = 60_001;
        let mut log_bound = f64::NEG_INFINITY;
        for i in 0..n {
            let x = -half_width + 2.0 * half_width * i as f64 / (n - 1) as f64;
            let v = log_density(x) + 0.5 * (x / sigma).powi(2);
            if v.is_finite() {
                log_bound = log_bound.max(v);
            }
        }
        Self { log_density, sigma, log_bound: log_bound + 0.1f64.ln_1p() }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = self.sigma * rng.sample::<f64, _>(StandardNormal);
            let log_accept = (self.log_density)(x) + 0.5 * (x / self.sigma).powi(2) - self.log_bound;
            let u: f64 = rng.random();
            if u.ln() < log_accept {
                return x;
            }
        }
    }
}

/// Composite Simpson rule on `[a, b]` with `n` points (`n` odd).
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 0 { n + 1 } else { n.max(3) };
    let h = (b - a) / (n - 1) as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n - 1 {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// One rejection sampler per state of a single-particle 1-D model, targeting
/// `psi_s^2`.
pub struct ModelSampler1D<'a, W: ?Sized> {
    samplers: Vec<RejectionSampler1D<Box<dyn Fn(f64) -> f64 + Send + Sync + 'a>>>,
    model: &'a W,
    params: &'a [f64],
}

impl<'a, W: WaveFunction + ?Sized> ModelSampler1D<'a, W> {
    pub fn new(model: &'a W, params: &'a [f64], proposal_sigma: f64) -> Self {
        let samplers = (0..model.n_states())
            .map(|s| {
                let f: Box<dyn Fn(f64) -> f64 + Send + Sync + 'a> = Box::new(move |x| {
                    match model.eval(params, s, &Configuration::point(x)) {
                        Ok(v) if !v.is_zero() => 2.0 * v.log_abs(),
                        _ => f64::NEG_INFINITY,
                    }
                });
                RejectionSampler1D::new(f, proposal_sigma, 12.0 * proposal_sigma)
            })
            .collect();
        Self { samplers, model, params }
    }

    pub fn sample_state<R: Rng + ?Sized>(&self, state: usize, n: usize, rng: &mut R) -> Vec<Configuration> {
        (0..n).map(|_| Configuration::point(self.samplers[state].sample(rng))).collect()
    }

    /// Exact draws, `n_per_state` from each state, evaluated under every state.
    pub fn pooled<R: Rng + ?Sized>(&self, n_per_state: usize, rng: &mut R) -> Result<PooledBatch, SamplerError> {
        let mut origin = Vec::new();
        let mut values = Vec::new();
        let mut configs = Vec::new();
        for s in 0..self.samplers.len() {
            for c in self.sample_state(s, n_per_state, rng) {
                let row = self
                    .model
                    .eval_all(self.params, &c)
                    .map_err(|source| SamplerError::Evaluation { state: s, walker: origin.len(), source })?;
                origin.push(s);
                values.push(row);
                configs.push(c);
            }
        }
        PooledBatch::from_parts(self.samplers.len(), origin, values, configs)
    }
}
