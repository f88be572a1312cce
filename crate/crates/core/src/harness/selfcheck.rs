use std::time::Instant;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{gaussian_pooled, hermite_ratios, ModelSampler1D};
use crate::ansatz::HermiteGaussianModel;
use crate::estimators::{kish_ess_all, overlap_msis, RatioVector};
use crate::numerics::{determinant, pfaffian_bruteforce, pfaffian_with, polar_factor, procrustes, PfaffianOptions};
use crate::training::snap_target;
use crate::{Mat, SkewMatrix};

#[derive(Clone, Copy, Debug, Default)]
pub struct SelfcheckOptions {
    /// Passed to every Pfaffian evaluation; lets tests inject faults.
    #[doc(hidden)]
    pub pfaffian: PfaffianOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub elapsed_ms: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfcheckReport {
    pub checks: Vec<CheckResult>,
}

impl SelfcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

type Check = Result<String, String>;

fn random_skew(rng: &mut SmallRng, dim: usize) -> SkewMatrix<f64> {
    let upper = (0..dim * (dim - 1) / 2).map(|_| rng.sample(StandardNormal)).collect();
    SkewMatrix::from_upper(dim, upper).expect("even dimension")
}

fn random_mat(rng: &mut SmallRng, r: usize, c: usize) -> Mat<f64> {
    Mat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn pfaffian_oracle(opts: PfaffianOptions) -> Check {
    let mut rng = SmallRng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for k in 0..200 {
        let dim = 2 * (k % 4 + 1);
        let m = random_skew(&mut rng, dim);
        let exact = pfaffian_bruteforce(&m).map_err(|e| e.to_string())?;
        let got = pfaffian_with(&m, opts).value();
        let rel = (got - exact).abs() / exact.abs().max(1e-300);
        worst = worst.max(rel);
        if !(rel < 1e-10) {
            return Err(format!("dim {dim}: Pf = {got}, matching expansion = {exact}"));
        }
    }
    Ok(format!("200 matrices, worst relative error {worst:.1e}"))
}

fn pfaffian_determinant(opts: PfaffianOptions) -> Check {
    let mut rng = SmallRng::seed_from_u64(2);
    for k in 0..200 {
        let dim = 2 * (k % 4 + 1);
        let m = random_skew(&mut rng, dim);
        let pf = pfaffian_with(&m, opts);
        let det = determinant(&m.to_dense());
        if det.sign() < 0 || (2.0 * pf.log_abs() - det.log_abs()).abs() > 1e-9 {
            return Err(format!("dim {dim}: Pf^2 != det"));
        }
        let b = random_mat(&mut rng, dim, dim);
        let lhs = pfaffian_with(&m.congruence(&b).map_err(|e| e.to_string())?, opts);
        let rhs_sign = determinant(&b).sign() * pf.sign();
        let rhs_log = determinant(&b).log_abs() + pf.log_abs();
        if lhs.sign() != rhs_sign || (lhs.log_abs() - rhs_log).abs() > 1e-9 {
            return Err(format!("dim {dim}: Pf(B M B^T) != det(B) Pf(M)"));
        }
    }
    Ok("200 pairs".into())
}

fn procrustes_recovery() -> Check {
    let mut rng = SmallRng::seed_from_u64(3);
    for n in 2..=6 {
        let r0 = polar_factor(&random_mat(&mut rng, n, n)).map_err(|e| e.to_string())?.rotation;
        let a = random_mat(&mut rng, 3 * n, n);
        let p = procrustes(&a, &a.matmul(&r0)).map_err(|e| e.to_string())?;
        let err = p.rotation.sub(&r0).max_abs();
        if !(err < 1e-10) {
            return Err(format!("n = {n}: rotation error {err:e}"));
        }
    }
    Ok("n = 2..6".into())
}

fn msis_bound() -> Check {
    let model = HermiteGaussianModel::new(4, 3);
    let params = model.canonical_params(0.5);
    let sampler = ModelSampler1D::new(&model, params.values(), 1.5);
    let mut rng = SmallRng::seed_from_u64(4);
    let batch = sampler.pooled(500, &mut rng).map_err(|e| e.to_string())?;
    overlap_msis(&batch, &hermite_ratios(4)).map_err(|e| e.to_string())?;
    let skewed = RatioVector::new(vec![1.0, 1e3, 1e-3, 7.0]).expect("positive");
    overlap_msis(&batch, &skewed).map_err(|e| e.to_string())?;
    Ok(format!("{} samples, 6 pairs, exact and skewed ratios", batch.len()))
}

fn ess_bounds() -> Check {
    let mut rng = SmallRng::seed_from_u64(5);
    let batch = gaussian_pooled(1, &[(0.0, 1.0), (1.0, 0.5), (3.0, 2.0)], 300, 0.0, &mut rng);
    let rep = kish_ess_all(&batch, &RatioVector::new(vec![1.0, 2.0, 0.5]).expect("positive"));
    let n = batch.len() as f64;
    if let Some(e) = rep.ess.iter().find(|e| !(**e >= 1.0 - 1e-12 && **e <= n + 1e-9)) {
        return Err(format!("ESS {e} outside [1, {n}]"));
    }
    let same = gaussian_pooled(1, &[(0.0, 1.0); 3], 300, 0.0, &mut rng);
    let rep = kish_ess_all(&same, &RatioVector::ones(3));
    if rep.normalized.iter().any(|v| (v - 3.0).abs() > 0.03) {
        return Err(format!("identical states: normalized ESS {:?}", rep.normalized));
    }
    let single = gaussian_pooled(1, &[(0.0, 1.0)], 300, 0.0, &mut rng);
    let rep = kish_ess_all(&single, &RatioVector::ones(1));
    if rep.normalized[0] != 1.0 {
        return Err(format!("single state: normalized ESS {}", rep.normalized[0]));
    }
    Ok("bounds, identical-state and single-state normalization".into())
}

fn snap_continuity() -> Check {
    let n = 10_000;
    let dx = 12.0 / n as f64;
    for counts in [None, Some((2, 2)), Some((3, 2))] {
        let mut prev = snap_target(0.0, counts);
        for i in 1..=n {
            let v = i as f64 * dx;
            let cur = snap_target(v, counts);
            if (cur.deviation_sq.sqrt() - prev.deviation_sq.sqrt()).abs() > dx * (1.0 + 1e-9) {
                return Err(format!("jump at <S^2> = {v} with counts {counts:?}"));
            }
            prev = cur;
        }
    }
    Ok("grid of 10^4 points on [0, 12]".into())
}

/// Fast invariant battery over the numerical core.
pub fn selfcheck(opts: SelfcheckOptions) -> SelfcheckReport {
    let checks: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        ("pfaffian-oracle", Box::new(move || pfaffian_oracle(opts.pfaffian))),
        ("pfaffian-determinant", Box::new(move || pfaffian_determinant(opts.pfaffian))),
        ("procrustes-recovery", Box::new(procrustes_recovery)),
        ("msis-bound", Box::new(msis_bound)),
        ("ess-bounds", Box::new(ess_bounds)),
        ("snap-continuity", Box::new(snap_continuity)),
    ];
    let checks = checks
        .into_iter()
        .map(|(name, f)| {
            let start = Instant::now();
            let outcome = f();
            let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
            let (passed, detail) = match outcome {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckResult { name: name.into(), passed, elapsed_ms, detail }
        })
        .collect();
    SelfcheckReport { checks }
}
