use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{default_excitations, selector_set, synth_hf, PretrainError, Selector, Structure, SynthSpec};
use crate::ansatz::{Configuration, ExcitedPfaffianModel, ParamVector, WaveFunction};
use crate::config::{RunConfig, SystemSpec};
use crate::numerics::{determinant, polar_factor, svd, upper_index, Mat};
use crate::sampler::WalkerEnsemble;
use crate::training::{initial_walker, Lamb, Trainer, TrainError};

const PRETRAIN_SALT: u64 = 0x9E7A_0001;

/// Orbital target and per-state occupations for one geometry.
#[derive(Clone, Debug)]
pub struct PretrainTargets {
    pub structure: Structure,
    pub selectors: Vec<Selector>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainOptions {
    pub steps: usize,
    /// LAMB schedule `lr / (1 + t / t_decay)`.
    pub lr: f64,
    pub t_decay: f64,
    /// Metropolis steps between pretraining updates.
    pub decorr_steps: usize,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        Self { steps: 2000, lr: 1e-2, t_decay: 1000.0, decorr_steps: 20 }
    }
}

/// Loss terms for one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainLoss {
    /// `sum_k mean_n |Phi_k R_k - Phi_HF|_F^2`.
    pub orbital: f64,
    /// `sum_{s,k} |A_sk - R_k Pi_s A*_sk Pi_s^T R_k^T|_F^2`.
    pub antisym: f64,
    /// Optimal orbital rotation per determinant.
    pub rotations: Vec<Mat<f64>>,
    /// Count of degenerate antisymmetrizer targets.
    pub degenerate: usize,
}

impl PretrainLoss {
    pub fn total(&self) -> f64 {
        self.orbital + self.antisym
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub orbital_loss: Vec<f64>,
    pub antisym_loss: Vec<f64>,
    pub degenerate_events: usize,
}

/// Orthogonal `R` minimizing `sum_n |Phi_n R - T_n|_F^2` and the minimum.
pub fn orbital_loss(phis: &[Mat<f64>], targets: &[Mat<f64>]) -> Result<(f64, Mat<f64>), PretrainError> {
    let n = phis.first().ok_or(PretrainError::Empty)?.cols();
    let mut m = Mat::zeros(n, n);
    for (phi, t) in phis.iter().zip(targets) {
        m = m.add(&phi.t_matmul(t));
    }
    let r = polar_factor(&m)?.rotation;
    let loss = phis.iter().zip(targets).map(|(p, t)| p.matmul(&r).sub(t).frobenius_norm().powi(2)).sum::<f64>()
        / phis.len() as f64;
    Ok((loss, r))
}

/// Closest skew-orthogonal target `Pi^T R^T A R Pi` can be rotated onto, and
/// whether it was degenerate.
pub fn antisym_target(a: &Mat<f64>, r: &Mat<f64>, selector: &Selector) -> Result<(Mat<f64>, bool), PretrainError> {
    let rar = r.t_matmul(&a.matmul(r));
    let sub = rar.select_columns(&selector.occupied).transpose().select_columns(&selector.occupied).transpose();
    let p = polar_factor(&sub)?;
    Ok((p.rotation, p.degenerate))
}

/// `Pi A* Pi^T` embedded in the full orbital space.
fn embed(target: &Mat<f64>, selector: &Selector, n_orb: usize) -> Mat<f64> {
    let mut b = Mat::zeros(n_orb, n_orb);
    for (a, &ra) in selector.occupied.iter().enumerate() {
        for (c, &rc) in selector.occupied.iter().enumerate() {
            b[(ra, rc)] = target[(a, c)];
        }
    }
    b
}

/// `|A - R B R^T|_F^2` with `B = Pi A* Pi^T`.
pub fn antisym_loss(a: &Mat<f64>, r: &Mat<f64>, selector: &Selector) -> Result<f64, PretrainError> {
    let (t, _) = antisym_target(a, r, selector)?;
    let b = embed(&t, selector, a.rows());
    Ok(a.sub(&r.matmul(&b).matmul_t(r)).frobenius_norm().powi(2))
}

/// Back-propagates `dL/dR` through `R = polar(M)`.
fn polar_backward(m: &Mat<f64>, g_r: &Mat<f64>) -> Result<Mat<f64>, PretrainError> {
    let d = svd(m)?;
    let h = d.u.t_matmul(&g_r.matmul(&d.v));
    let n = d.sigma.len();
    let k = Mat::from_fn(n, n, |i, j| {
        let s = d.sigma[i] + d.sigma[j];
        if s > 0.0 {
            (h[(i, j)] - h[(j, i)]) / s
        } else {
            0.0
        }
    });
    Ok(d.u.matmul(&k).matmul_t(&d.v))
}

fn positions(config: &Configuration) -> Vec<&[f64]> {
    (0..config.n_particles()).map(|i| config.particle(i)).collect()
}

/// Pretraining loss and its gradient on a fixed batch. The antisymmetrizer
/// targets are held fixed; gradients pass through the orbital rotations.
pub fn pretrain_loss_grad(
    model: &ExcitedPfaffianModel,
    params: &[f64],
    configs: &[Configuration],
    targets: &PretrainTargets,
) -> Result<(PretrainLoss, Vec<f64>), PretrainError> {
    if configs.is_empty() {
        return Err(PretrainError::Empty);
    }
    let n_orb = model.n_orb();
    if targets.structure.n_orb() != n_orb {
        return Err(PretrainError::Shape(format!(
            "target has {} orbitals, model {n_orb}",
            targets.structure.n_orb()
        )));
    }
    if targets.selectors.len() != model.n_states() {
        return Err(PretrainError::Shape(format!(
            "{} selectors for {} states",
            targets.selectors.len(),
            model.n_states()
        )));
    }
    let rows: Vec<(Vec<Mat<f64>>, Mat<f64>)> = configs
        .par_iter()
        .map(|c| Ok((model.orbitals(params, c)?, targets.structure.orbital_values(&positions(c))?)))
        .collect::<Result<_, PretrainError>>()?;
    let nb = configs.len() as f64;
    let n_det = model.n_det();
    let mut grad = vec![0.0; params.len()];
    let mut d_phi: Vec<Vec<Mat<f64>>> =
        rows.iter().map(|(phis, _)| phis.iter().map(|p| Mat::zeros(p.rows(), p.cols())).collect()).collect();
    let mut loss = PretrainLoss { orbital: 0.0, antisym: 0.0, rotations: Vec::new(), degenerate: 0 };
    for k in 0..n_det {
        let phis: Vec<Mat<f64>> = rows.iter().map(|(p, _)| p[k].clone()).collect();
        let ts: Vec<Mat<f64>> = rows.iter().map(|(_, t)| t.clone()).collect();
        let (lo, r) = orbital_loss(&phis, &ts)?;
        loss.orbital += lo;
        let mut m = Mat::zeros(n_orb, n_orb);
        for (p, t) in phis.iter().zip(&ts) {
            m = m.add(&p.t_matmul(t));
        }
        let mut g_r = Mat::zeros(n_orb, n_orb);
        for (s, sel) in targets.selectors.iter().enumerate() {
            let a = model.antisymmetrizer(params, s, k).to_dense();
            let (t, degenerate) = antisym_target(&a, &r, sel)?;
            loss.degenerate += usize::from(degenerate);
            let b = embed(&t, sel, n_orb);
            let diff = a.sub(&r.matmul(&b).matmul_t(&r));
            loss.antisym += diff.frobenius_norm().powi(2);
            g_r = g_r.add(&diff.matmul(&r).matmul(&b).scale(4.0));
            let off = model.antisym_offset(s, k);
            for p in 0..n_orb {
                for q in p + 1..n_orb {
                    grad[off + upper_index(n_orb, p, q)] += 4.0 * diff[(p, q)];
                }
            }
        }
        // dL/dM from the antisymmetrizer term; the orbital term is stationary in R
        let g_m = polar_backward(&m, &g_r)?;
        for (n, (p, t)) in phis.iter().zip(&ts).enumerate() {
            let resid = p.matmul(&r).sub(t).matmul_t(&r).scale(2.0 / nb);
            d_phi[n][k] = resid.add(&t.matmul_t(&g_m));
        }
        loss.rotations.push(r);
    }
    let parts: Vec<Vec<f64>> = configs
        .par_iter()
        .zip(d_phi.par_iter())
        .map(|(c, d)| model.orbital_vjp(params, c, d))
        .collect::<Result<_, _>>()?;
    for part in parts {
        grad.iter_mut().zip(&part).for_each(|(g, v)| *g += v);
    }
    Ok((loss, grad))
}

/// Fits orbitals and antisymmetrizers to the targets on samples drawn from
/// the model itself.
pub fn pretrain_fit(
    model: &ExcitedPfaffianModel,
    params: &mut ParamVector,
    targets: &PretrainTargets,
    ensemble: &mut WalkerEnsemble,
    sampler: &crate::sampler::SamplerConfig,
    opts: &PretrainOptions,
) -> Result<PretrainReport, PretrainError> {
    let groups = params.layout().slices().iter().map(|s| s.range()).collect();
    let mut opt = Lamb::new(groups, opts.lr, opts.t_decay);
    let mut report = PretrainReport { orbital_loss: Vec::new(), antisym_loss: Vec::new(), degenerate_events: 0 };
    for step in 0..opts.steps {
        ensemble.advance(model, params, opts.decorr_steps, sampler, true);
        let configs: Vec<Configuration> = ensemble.chains.iter().flat_map(|c| c.walkers.iter().cloned()).collect();
        let (loss, grad) = pretrain_loss_grad(model, params, &configs, targets)?;
        report.orbital_loss.push(loss.orbital);
        report.antisym_loss.push(loss.antisym);
        report.degenerate_events += loss.degenerate;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(PretrainError::Diverged(step));
        }
        opt.step(params, &grad, step as u64);
        ensemble.sync(model, params).map_err(|e| PretrainError::Sampling(e.to_string()))?;
    }
    Ok(report)
}

/// `det(Phi_HF Pi_s)` at `config`.
pub fn target_determinant(structure: &Structure, selector: &Selector, config: &Configuration) -> Result<f64, PretrainError> {
    let phi = structure.orbital_values(&positions(config))?;
    let sub = phi.select_columns(&selector.occupied);
    Ok(determinant(&sub).value())
}

/// Fraction of configurations where `sign(psi_state)` agrees with the target
/// determinant's sign, up to one global sign.
pub fn sign_agreement(
    model: &ExcitedPfaffianModel,
    params: &[f64],
    state: usize,
    structure: &Structure,
    selector: &Selector,
    configs: &[Configuration],
) -> Result<f64, PretrainError> {
    let mut same = 0usize;
    let mut total = 0usize;
    for c in configs {
        let psi = model.eval(params, state, c)?;
        let t = target_determinant(structure, selector, c)?;
        if psi.is_zero() || t == 0.0 {
            continue;
        }
        total += 1;
        same += usize::from((psi.sign() > 0) == (t > 0.0));
    }
    if total == 0 {
        return Err(PretrainError::Empty);
    }
    let f = same as f64 / total as f64;
    Ok(f.max(1.0 - f))
}

/// Orbital target for a run: the matching structure from `targets_path`, or
/// a synthetic payload for the run's geometry.
pub fn run_targets(config: &RunConfig) -> Result<PretrainTargets, PretrainError> {
    let SystemSpec::ToyMolecular { nuclei, charges, n_up, n_down, n_states, orbitals_per_nucleus, .. } = &config.system
    else {
        return Err(PretrainError::Shape("pretraining needs a toy-molecular system".into()));
    };
    let structure = match &config.pretrain.targets_path {
        Some(path) => {
            let all = super::load_structures(path)?;
            all.into_iter()
                .find(|s| &s.nuclei == nuclei && &s.charges == charges)
                .ok_or_else(|| PretrainError::Shape(format!("{} has no structure with the run geometry", path.display())))?
        }
        None => synth_hf(&SynthSpec {
            id: 0,
            nuclei: nuclei.clone(),
            charges: charges.clone(),
            basis_per_nucleus: *orbitals_per_nucleus,
            seed: config.seed,
        })?,
    };
    let n_elec = n_up + n_down;
    let selectors = selector_set(structure.n_orb(), n_elec, &default_excitations(structure.n_orb(), n_elec, *n_states)?)?;
    Ok(PretrainTargets { structure, selectors })
}

/// Builds the run's model, pretrains it, and hands it to a fresh trainer.
pub fn pretrained_trainer(config: &RunConfig) -> Result<Trainer, TrainError> {
    config.validate()?;
    let SystemSpec::ToyMolecular { nuclei, n_up, n_down, n_states, n_det, orbitals_per_nucleus, init_noise, .. } =
        &config.system
    else {
        return Err(TrainError::Pretrain("pretraining needs a toy-molecular system".into()));
    };
    let pre = |e: PretrainError| TrainError::Pretrain(e.to_string());
    let model = ExcitedPfaffianModel::new(
        *n_states,
        *n_det,
        n_up + n_down,
        *n_up,
        nuclei.iter().map(|n| n.to_vec()).collect(),
        *orbitals_per_nucleus,
    )?;
    let mut params = model.init_params(config.seed, *init_noise);
    let targets = run_targets(config).map_err(pre)?;
    let sampler = config.sampler.sampler_config();
    let system = config.system.clone();
    let mut ensemble = WalkerEnsemble::new(
        &model,
        &params,
        config.sampler.n_walkers_total,
        config.seed ^ PRETRAIN_SALT,
        &sampler,
        |_, _, rng| initial_walker(&system, rng),
    )?;
    ensemble.advance(&model, &params, config.sampler.burn_in, &sampler, true);
    let opts = PretrainOptions { steps: config.pretrain.steps, ..PretrainOptions::default() };
    pretrain_fit(&model, &mut params, &targets, &mut ensemble, &sampler, &opts).map_err(pre)?;
    Trainer::with_model(config.clone(), Box::new(model), params)
}
