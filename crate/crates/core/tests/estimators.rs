use exvmc::ansatz::{Configuration, HermiteGaussianModel, WaveFunction};
use exvmc::estimators::{
    bhattacharyya, bridge_ratios, energy_and_grad, kish_ess, kish_ess_all, local_energy, msis_integrand,
    overlap_msis, overlap_single_state, stats, BridgeOptions, EstimatorError, Hamiltonian, RatioVector,
};
use exvmc::harness::{simpson, ModelSampler1D};
use exvmc::sampler::PooledBatch;
use exvmc::SignedLog;
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

const HO: Hamiltonian = Hamiltonian::Harmonic { omega: 1.0 };

/// Exact normalizer ratios `N_0^2 / N_s^2 = 1 / s!` of canonical Hermite states.
fn hermite_ratios(n: usize) -> RatioVector {
    let mut r = vec![1.0; n];
    for s in 1..n {
        r[s] = r[s - 1] / s as f64;
    }
    RatioVector::new(r).unwrap()
}

fn psi(model: &HermiteGaussianModel, p: &[f64], s: usize, x: f64) -> f64 {
    model.eval(p, s, &Configuration::point(x)).unwrap().value()
}

fn states_of(batch: &PooledBatch, s: usize) -> (Vec<Configuration>, Vec<SignedLog>) {
    batch.samples_of(s).map(|i| (batch.configs()[i].clone(), batch.log_psi()[i][s])).unzip()
}

#[test]
fn eigenstate_local_energies() {
    let model = HermiteGaussianModel::new(3, 2);
    let p = model.canonical_params(0.5);
    for x in [-2.0, -0.3, 0.7, 1.9] {
        let c = Configuration::point(x);
        assert!((local_energy(&HO, &model, &p, 0, &c).unwrap() - 0.5).abs() < 1e-12);
        assert!((local_energy(&HO, &model, &p, 2, &c).unwrap() - 2.5).abs() < 1e-12);
    }
}

#[test]
fn perturbed_state_obeys_variational_bound() {
    let model = HermiteGaussianModel::new(1, 3);
    let p = model.params_from(&[vec![1.0, 0.3, -0.2, 0.1]], 0.4).unwrap();
    let e = |x: f64| local_energy(&HO, &model, &p, 0, &Configuration::point(x)).unwrap();
    let values: Vec<f64> = (0..50).map(|i| e(-2.0 + 0.08 * i as f64 + 0.013)).collect();
    assert!(stats::variance(&values) > 1e-4);
    let num = simpson(|x| psi(&model, &p, 0, x).powi(2) * e(x), -8.0, 8.0, 2001);
    let den = simpson(|x| psi(&model, &p, 0, x).powi(2), -8.0, 8.0, 2001);
    assert!(num / den >= 0.5);
}

#[test]
fn single_sample_gradient_is_exactly_zero() {
    let model = HermiteGaussianModel::new(1, 2);
    let p = model.params_from(&[vec![1.0, 0.2, 0.1]], 0.6).unwrap();
    let c = vec![Configuration::point(0.4)];
    let v = vec![model.eval(&p, 0, &c[0]).unwrap()];
    let est = energy_and_grad(&HO, &model, &p, 0, &c, &v).unwrap();
    assert!(est.grad.iter().all(|&g| g == 0.0));
}

#[test]
fn eigenstate_gradient_vanishes() {
    let model = HermiteGaussianModel::new(2, 2);
    let p = model.canonical_params(0.5);
    let batch = ModelSampler1D::new(&model, &p, 1.5).pooled(500, &mut SmallRng::seed_from_u64(1)).unwrap();
    for s in 0..2 {
        let (c, v) = states_of(&batch, s);
        let est = energy_and_grad(&HO, &model, &p, s, &c, &v).unwrap();
        assert!(est.grad.iter().all(|g| g.abs() < 1e-10), "{:?}", est.grad);
        assert!((est.energy - (s as f64 + 0.5)).abs() < 1e-12);
    }
}

#[test]
fn all_node_samples_is_empty_batch_error() {
    let model = HermiteGaussianModel::new(2, 1);
    let p = model.canonical_params(0.5);
    let c = vec![Configuration::point(0.0)];
    let v = vec![model.eval(&p, 1, &c[0]).unwrap()];
    assert!(matches!(energy_and_grad(&HO, &model, &p, 1, &c, &v), Err(EstimatorError::EmptyBatch { state: 1 })));
}

#[test]
fn energy_gradient_matches_quadrature_rayleigh_quotient() {
    let model = HermiteGaussianModel::new(1, 1);
    let p = model.params_from(&[vec![1.0, 0.1]], 0.5).unwrap();
    let rayleigh = |q: &[f64]| {
        let e = |x: f64| local_energy(&HO, &model, q, 0, &Configuration::point(x)).unwrap();
        let num = simpson(|x| psi(&model, q, 0, x).powi(2) * e(x), -8.0, 8.0, 2001);
        let den = simpson(|x| psi(&model, q, 0, x).powi(2), -8.0, 8.0, 2001);
        num / den
    };
    let sampler = ModelSampler1D::new(&model, &p, 1.5);
    let mut rng = SmallRng::seed_from_u64(17);
    let c = sampler.sample_state(0, 40_000, &mut rng);
    let v: Vec<SignedLog> = c.iter().map(|c| model.eval(&p, 0, c).unwrap()).collect();
    let est = energy_and_grad(&HO, &model, &p, 0, &c, &v).unwrap();

    // per-component standard error of 2 (E - Ebar) g
    let mut se = vec![0.0; p.len()];
    for (k, se_k) in se.iter_mut().enumerate() {
        let terms: Vec<f64> = c
            .iter()
            .map(|c| {
                let e = local_energy(&HO, &model, &p, 0, c).unwrap();
                let g = model.grad_log(&p, 0, c).unwrap();
                2.0 * (e - est.energy) * g[k]
            })
            .collect();
        *se_k = stats::std_error(&terms);
    }
    for k in 0..p.len() {
        let h = 1e-5;
        let mut plus = p.to_vec();
        plus[k] += h;
        let mut minus = p.to_vec();
        minus[k] -= h;
        let fd = (rayleigh(&plus) - rayleigh(&minus)) / (2.0 * h);
        assert!((fd - est.grad[k]).abs() <= 3.0 * se[k] + 1e-9, "param {k}: fd {fd} vs {} (se {})", est.grad[k], se[k]);
    }
}

#[test]
fn single_state_overlap_identical_states_is_one() {
    let row = |x: f64| vec![SignedLog::new(1, -x * x), SignedLog::new(1, -x * x)];
    let xs = [0.1, -0.4, 0.9, 1.3];
    let origin = vec![0, 0, 1, 1];
    let batch = PooledBatch::from_log_values(2, origin, xs.iter().map(|&x| row(x)).collect()).unwrap();
    let o = overlap_single_state(&batch, 0, 1).unwrap();
    assert_eq!(o.abs, 1.0);
    assert_eq!((o.a, o.b), (1.0, 1.0));
}

#[test]
fn single_state_overlap_of_orthogonal_states_shrinks() {
    let model = HermiteGaussianModel::new(2, 1);
    let p = model.canonical_params(0.5);
    let batch = ModelSampler1D::new(&model, &p, 1.5).pooled(2048, &mut SmallRng::seed_from_u64(3)).unwrap();
    let o = overlap_single_state(&batch, 0, 1).unwrap();
    let se = (2.0f64 / (2.0 * 4096.0)).sqrt();
    assert!(o.abs < 5.0 * se, "{}", o.abs);
}

#[test]
fn single_state_overlap_variance_matches_delta_method() {
    let model = HermiteGaussianModel::new(2, 1);
    let p = model.params_from(&[vec![1.0, 0.0], vec![1.0, 0.5]], 0.5).unwrap();
    let exact = 1.0 / 1.25f64.sqrt();
    let sampler = ModelSampler1D::new(&model, &p, 1.5);
    let mut rng = SmallRng::seed_from_u64(99);
    let n_batch = 2048;
    let est: Vec<f64> = (0..200)
        .map(|_| overlap_single_state(&sampler.pooled(n_batch / 2, &mut rng).unwrap(), 0, 1).unwrap().abs)
        .collect();
    let predicted = 2.0 * (1.0 - exact * exact) / (2.0 * n_batch as f64);
    let ratio = stats::variance(&est) / predicted;
    assert!((0.5..=2.0).contains(&ratio), "variance ratio {ratio}");
    assert!((stats::mean(&est) - exact).abs() < 0.01);
}

#[test]
fn msis_trivial_cases() {
    let one = PooledBatch::from_log_values(1, vec![0, 0], vec![vec![SignedLog::new(1, 0.3)], vec![SignedLog::new(-1, -2.0)]])
        .unwrap();
    assert_eq!(overlap_msis(&one, &RatioVector::ones(1)).unwrap().s_hat, vec![vec![1.0]]);

    let rows: Vec<Vec<SignedLog>> =
        [0.2, -1.0, 3.0].iter().map(|&l| vec![SignedLog::new(-1, l), SignedLog::new(-1, l)]).collect();
    let log_r = [0.0, 0.0];
    for row in &rows {
        assert_eq!(msis_integrand(row, &log_r, 0, 1), 1.0);
    }
    let batch = PooledBatch::from_log_values(2, vec![0, 1, 1], rows).unwrap();
    let m = overlap_msis(&batch, &RatioVector::ones(2)).unwrap();
    assert_eq!(m.s_hat[0][1], 1.0);
    assert_eq!(bhattacharyya(&batch, &RatioVector::ones(2)).unwrap()[0][1], 1.0);
}

#[test]
fn msis_orthogonal_hermite_within_bound() {
    let model = HermiteGaussianModel::new(2, 1);
    let p = model.canonical_params(0.5);
    let sampler = ModelSampler1D::new(&model, &p, 1.5);
    let ratios = hermite_ratios(2);
    let mut rng = SmallRng::seed_from_u64(5);
    let n_batch = 2048;
    let f01 = {
        let num = simpson(|x| (psi(&model, &p, 0, x) * psi(&model, &p, 1, x)).abs(), -10.0, 10.0, 4001);
        let n0 = simpson(|x| psi(&model, &p, 0, x).powi(2), -10.0, 10.0, 4001);
        let n1 = simpson(|x| psi(&model, &p, 1, x).powi(2), -10.0, 10.0, 4001);
        num / (n0 * n1).sqrt()
    };
    let mut s_vals = Vec::new();
    let mut f_vals = Vec::new();
    for _ in 0..200 {
        let m = overlap_msis(&sampler.pooled(n_batch / 2, &mut rng).unwrap(), &ratios).unwrap();
        s_vals.push(m.s_hat[0][1]);
        f_vals.push(m.f_hat[0][1]);
    }
    let var = stats::variance(&s_vals);
    assert!(var <= 2.0 * f01 / (2.0 * n_batch as f64), "var {var}");
    let se = (var / 200.0).sqrt();
    assert!(stats::mean(&s_vals).abs() < 5.0 * se);
    assert!((stats::mean(&f_vals) - f01).abs() < 3.0 * stats::std_error(&f_vals) + 1e-4);
}

#[test]
fn msis_corrupted_ratios_trip_the_bound() {
    // f_01 = 2 sqrt(r0 r1) psi0 psi1 / (r0 psi0^2 + r1 psi1^2) is bounded only if
    // the same ratios are used in numerator and denominator; a ratio vector whose
    // length mismatches is rejected outright, and a log-domain sign bug shows as
    // a violated bound.
    let rows = vec![vec![SignedLog::new(1, 0.0), SignedLog::new(1, 0.0)]];
    let batch = PooledBatch::from_log_values(2, vec![0], rows).unwrap();
    assert!(overlap_msis(&batch, &RatioVector::ones(3)).is_err());
    assert!(RatioVector::new(vec![1.0, -2.0]).is_err());
}

#[test]
fn far_translated_gaussians_have_no_overlap() {
    let row = |x: f64| vec![SignedLog::new(1, -(x * x) / 2.0), SignedLog::new(1, -((x - 40.0) * (x - 40.0)) / 2.0)];
    let mut rng = SmallRng::seed_from_u64(1);
    let mut origin = Vec::new();
    let mut rows = Vec::new();
    for s in 0..2 {
        for _ in 0..500 {
            let x: f64 = rng.sample::<f64, _>(StandardNormal) + 40.0 * s as f64;
            origin.push(s);
            rows.push(row(x));
        }
    }
    let batch = PooledBatch::from_log_values(2, origin, rows).unwrap();
    assert!(bhattacharyya(&batch, &RatioVector::ones(2)).unwrap()[0][1] < 1e-12);
}

/// Pooled batch of isotropic Gaussians `q_s = exp(-|x - mu_s|^2 / (2 sigma_s^2))`
/// with exact draws.
fn gaussian_batch(dim: usize, params: &[(f64, f64)], n: usize, log_scale: f64, seed: u64) -> PooledBatch {
    let mut rng = SmallRng::seed_from_u64(seed);
    let mut origin = Vec::new();
    let mut rows = Vec::new();
    for (s, &(mu, sigma)) in params.iter().enumerate() {
        for _ in 0..n {
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
    PooledBatch::from_log_values(params.len(), origin, rows).unwrap()
}

#[test]
fn bridge_identical_states_is_exactly_one() {
    let batch = gaussian_batch(1, &[(0.0, 1.0), (0.0, 1.0)], 200, 0.0, 4);
    let res = bridge_ratios(&batch, None, BridgeOptions { iterations: 1, ..Default::default() }).unwrap();
    assert_eq!(res.ratios.as_slice(), &[1.0, 1.0]);
    let three = gaussian_batch(1, &[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], 200, 0.0, 4);
    let res = bridge_ratios(&three, None, BridgeOptions { iterations: 1, ..Default::default() }).unwrap();
    for r in res.ratios.as_slice() {
        assert!((r - 1.0).abs() < 1e-12);
    }
}

#[test]
fn bridge_one_dimensional_gaussian_ratio() {
    // r_2 = Z_1 / Z_2 = sigma_1 / sigma_2 in one dimension
    let batch = gaussian_batch(1, &[(0.0, 1.0), (0.0, 2.0)], 10_000, 0.0, 8);
    let res = bridge_ratios(&batch, None, BridgeOptions::default()).unwrap();
    assert!((res.ratios.as_slice()[1] - 0.5).abs() / 0.5 < 0.02);
    assert!(res.converged);
}

#[test]
fn bridge_two_dimensional_gaussian_ratio_and_scale_invariance() {
    let batch = gaussian_batch(2, &[(0.0, 1.0), (0.0, 2.0)], 10_000, 0.0, 8);
    let res = bridge_ratios(&batch, None, BridgeOptions::default()).unwrap();
    let r2 = res.ratios.as_slice()[1];
    assert!((r2 - 0.25).abs() / 0.25 < 0.02, "{r2}");
    let scaled = gaussian_batch(2, &[(0.0, 1.0), (0.0, 2.0)], 10_000, 3.7, 8);
    let again = bridge_ratios(&scaled, None, BridgeOptions::default()).unwrap();
    assert!((again.ratios.as_slice()[1] - r2).abs() < 1e-10 * r2);
}

#[test]
fn bridging_state_rescues_disjoint_pair() {
    let far = gaussian_batch(1, &[(0.0, 1.0), (16.0, 1.0)], 5_000, 0.0, 12);
    let res = bridge_ratios(&far, None, BridgeOptions::default()).unwrap();
    assert!(!res.converged, "residual {}", res.residual);

    let bridged = gaussian_batch(1, &[(0.0, 1.0), (8.0, 4.0), (16.0, 1.0)], 20_000, 0.0, 12);
    let res = bridge_ratios(&bridged, None, BridgeOptions { iterations: 30, ..Default::default() }).unwrap();
    assert!(res.converged, "residual {}", res.residual);
    let r = res.ratios.as_slice();
    assert!((r[1] - 0.25).abs() / 0.25 < 0.05, "{r:?}");
    assert!((r[2] - 1.0).abs() < 0.05, "{r:?}");
}

#[test]
fn ess_limits() {
    let rows = |n: usize| (0..n).map(|_| vec![SignedLog::new(1, 0.0), SignedLog::new(1, 0.0)]).collect::<Vec<_>>();
    let batch = PooledBatch::from_log_values(2, vec![0, 0, 1, 1], rows(4)).unwrap();
    let rep = kish_ess_all(&batch, &RatioVector::ones(2));
    assert_eq!(rep.ess, vec![4.0, 4.0]);
    assert_eq!(rep.normalized, vec![2.0, 2.0]);

    let single = PooledBatch::from_log_values(1, vec![0; 5], (0..5).map(|i| vec![SignedLog::new(1, i as f64)]).collect())
        .unwrap();
    assert_eq!(kish_ess_all(&single, &RatioVector::ones(1)).normalized, vec![5.0 * 1.0 / 5.0]);

    let mut sparse = rows(4);
    for row in sparse.iter_mut().skip(1) {
        row[0] = SignedLog::zero();
    }
    let batch = PooledBatch::from_log_values(2, vec![0, 0, 1, 1], sparse).unwrap();
    assert_eq!(kish_ess(&batch, &RatioVector::ones(2), 0), 1.0);
}
