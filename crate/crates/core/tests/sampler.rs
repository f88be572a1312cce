use std::collections::HashSet;

use exvmc::ansatz::{AnsatzError, Configuration, HermiteGaussianModel, LogDerivatives, ParamLayout, WaveFunction};
use exvmc::harness::simpson;
use exvmc::sampler::{rng_key, ChainState, PooledBatch, SamplerConfig, SamplerError, WalkerEnsemble};
use exvmc::SignedLog;

/// `psi = 1` inside `[-half, half]` and zero outside, for every state.
struct BoxModel {
    half: f64,
    n_states: usize,
    layout: ParamLayout,
}

impl BoxModel {
    fn new(half: f64, n_states: usize) -> Self {
        Self { half, n_states, layout: ParamLayout::new() }
    }
}

impl WaveFunction for BoxModel {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn eval(&self, _: &[f64], state: usize, config: &Configuration) -> Result<SignedLog, AnsatzError> {
        self.check_state(state)?;
        if config.coords().iter().all(|x| x.abs() <= self.half) {
            Ok(SignedLog::one())
        } else {
            Ok(SignedLog::zero())
        }
    }

    fn grad_log(&self, _: &[f64], _: usize, _: &Configuration) -> Result<Vec<f64>, AnsatzError> {
        Ok(Vec::new())
    }

    fn laplacian_log(&self, _: &[f64], _: usize, _: &Configuration) -> Result<LogDerivatives, AnsatzError> {
        Ok(LogDerivatives { laplacian: 0.0, grad_sq: 0.0 })
    }
}

fn fixed_cfg(sigma: f64) -> SamplerConfig {
    SamplerConfig { initial_sigma: sigma, ..SamplerConfig::default() }
}

fn uniform_chain(n: usize, half: f64, sigma: f64) -> ChainState {
    let walkers = (0..n).map(|i| Configuration::point(-half + 2.0 * half * (i as f64 + 0.5) / n as f64)).collect();
    ChainState::new(walkers, sigma, 0)
}

#[test]
fn flat_density_accepts_everything() {
    let model = BoxModel::new(f64::INFINITY, 1);
    let cfg = fixed_cfg(0.8);
    let mut chain = uniform_chain(100, 1.0, 0.8);
    chain.sync(&model, &[], 0).unwrap();
    for _ in 0..10 {
        chain.mh_step(&model, &[], 0, 3, &cfg);
    }
    assert_eq!(chain.accepted, chain.proposals);
    assert_eq!(chain.acceptance(), 1.0);
}

#[test]
fn proposals_onto_nodes_are_rejected() {
    let model = BoxModel::new(1.0, 1);
    let cfg = fixed_cfg(1.5);
    let mut chain = uniform_chain(500, 1.0, 1.5);
    chain.sync(&model, &[], 0).unwrap();
    for _ in 0..50 {
        chain.mh_step(&model, &[], 0, 5, &cfg);
        assert!(chain.walkers.iter().all(|c| c.coords()[0].abs() <= 1.0));
        assert!(chain.log_psi.iter().all(|v| !v.is_zero()));
    }
    assert!(chain.accepted < chain.proposals);
}

#[test]
fn box_acceptance_matches_analytic_rate() {
    let (half, sigma) = (1.0, 0.7);
    let model = BoxModel::new(half, 1);
    let cfg = fixed_cfg(sigma);
    let mut chain = uniform_chain(4000, half, sigma);
    chain.sync(&model, &[], 0).unwrap();
    for _ in 0..50 {
        chain.mh_step(&model, &[], 0, 9, &cfg);
    }
    let rate = chain.accepted as f64 / chain.proposals as f64;
    let l = 2.0 * half;
    let expected = simpson(
        |e| {
            let dens = (-(e * e) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            dens * (l - e.abs()).max(0.0) / l
        },
        -l,
        l,
        4001,
    );
    let se = (expected * (1.0 - expected) / chain.proposals as f64).sqrt();
    assert!((rate - expected).abs() < 5.0 * se + 2e-3, "rate {rate}, expected {expected}");
}

#[test]
fn adaptation_reaches_target_acceptance() {
    let model = HermiteGaussianModel::new(1, 0);
    let params = model.canonical_params(0.5);
    let cfg = SamplerConfig { initial_sigma: 5.0, ..SamplerConfig::default() };
    let mut ens =
        WalkerEnsemble::new(&model, &params, 1000, 4, &cfg, |_, w, _| Configuration::point(w as f64 / 500.0 - 1.0))
            .unwrap();
    ens.advance(&model, &params, 400, &cfg, true);
    let acc = ens.chains[0].acceptance();
    assert!((acc - 0.525).abs() < 0.05, "acceptance {acc}");
}

fn moment_check(samples: &[f64], power: i32, expected: f64) {
    let v: Vec<f64> = samples.iter().map(|x| x.powi(power)).collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!((mean - expected).abs() < 5.0 * se, "<x^{power}> = {mean} +- {se}, expected {expected}");
}

#[test]
fn hermite_moments_match_exact_values() {
    let model = HermiteGaussianModel::new(2, 1);
    let params = model.canonical_params(0.5);
    let cfg = SamplerConfig::default();
    let mut ens = WalkerEnsemble::new(&model, &params, 8000, 21, &cfg, |_, w, _| {
        Configuration::point(0.3 + w as f64 / 4000.0)
    })
    .unwrap();
    ens.advance(&model, &params, 300, &cfg, true);
    ens.advance(&model, &params, 100, &cfg, false);
    let x0: Vec<f64> = ens.chains[0].walkers.iter().map(|c| c.coords()[0]).collect();
    let x1: Vec<f64> = ens.chains[1].walkers.iter().map(|c| c.coords()[0]).collect();
    // psi_0^2 ~ exp(-x^2), psi_1^2 ~ x^2 exp(-x^2).
    moment_check(&x0, 1, 0.0);
    moment_check(&x0, 2, 0.5);
    moment_check(&x0, 4, 0.75);
    moment_check(&x1, 2, 1.5);
    moment_check(&x1, 4, 3.75);
}

fn run_ensemble(threads: usize) -> WalkerEnsemble {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let model = HermiteGaussianModel::new(3, 3);
        let params = model.canonical_params(0.5);
        let cfg = SamplerConfig::default();
        let mut ens =
            WalkerEnsemble::new(&model, &params, 300, 77, &cfg, |_, _, rng| {
                use rand::Rng;
                Configuration::point(rng.random_range(-1.0..1.0))
            })
            .unwrap();
        ens.advance(&model, &params, 60, &cfg, true);
        ens
    })
}

#[test]
fn sampling_is_independent_of_thread_count() {
    let a = run_ensemble(1);
    let b = run_ensemble(4);
    assert_eq!(a, b);
}

#[test]
fn rng_keys_are_distinct_across_streams_walkers_and_steps() {
    let mut seen = HashSet::new();
    for stream in 0..8 {
        for walker in 0..64 {
            for step in 0..64 {
                assert!(seen.insert(rng_key(5, stream, walker, step)));
            }
        }
    }
    assert_ne!(rng_key(5, 0, 0, 0), rng_key(6, 0, 0, 0));
}

#[test]
fn pooling_counts_evaluations_and_origins() {
    let model = HermiteGaussianModel::new(3, 3);
    let params = model.canonical_params(0.5);
    let cfg = SamplerConfig::default();
    let ens = WalkerEnsemble::new(&model, &params, 10, 1, &cfg, |s, w, _| Configuration::point(0.1 * (s + w) as f64))
        .unwrap();
    let pooled = ens.pool(&model, &params).unwrap();
    assert_eq!(pooled.len(), 10);
    assert_eq!(pooled.counts(), &[4, 3, 3]);
    assert_eq!(pooled.n_evaluations(), 30);
    assert_eq!(pooled.samples_of(1).collect::<Vec<_>>(), vec![4, 5, 6]);
    for (i, row) in pooled.log_psi().iter().enumerate() {
        for (t, v) in row.iter().enumerate() {
            assert_eq!(*v, model.eval(&params, t, &pooled.configs()[i]).unwrap());
        }
    }
}

#[test]
fn pooling_rejects_malformed_input() {
    let one = vec![SignedLog::one(); 2];
    assert!(PooledBatch::from_log_values(2, vec![0, 1], vec![one.clone()]).is_err());
    assert!(PooledBatch::from_log_values(2, vec![2], vec![one.clone()]).is_err());
    assert!(PooledBatch::from_log_values(2, vec![0], vec![vec![SignedLog::one()]]).is_err());
    assert!(PooledBatch::from_parts(2, vec![0], vec![one.clone()], vec![]).is_err());
    let empty = PooledBatch::from_log_values(2, vec![], vec![]).unwrap();
    assert!(empty.is_empty());
    assert_eq!(empty.counts(), &[0, 0]);
}

#[test]
fn too_few_walkers_is_an_error() {
    let model = HermiteGaussianModel::new(3, 3);
    let params = model.canonical_params(0.5);
    let err = WalkerEnsemble::new(&model, &params, 2, 1, &SamplerConfig::default(), |_, _, _| Configuration::point(0.0))
        .unwrap_err();
    assert_eq!(err, SamplerError::Empty { state: 2 });
}
