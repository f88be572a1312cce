//! Run configuration: parsing, defaults and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::sampler::SamplerConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), message: message.into() }
}

/// Starting point for Hermite-family models: canonical eigenfunction
/// coefficients plus Gaussian noise on every coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HermiteInit {
    pub alpha: f64,
    pub noise: f64,
}

impl Default for HermiteInit {
    fn default() -> Self {
        Self { alpha: 0.5, noise: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum SystemSpec {
    #[serde(rename = "1d-harmonic")]
    Harmonic1d {
        omega: f64,
        n_states: usize,
        /// Highest Hermite degree; defaults to `n_states`.
        #[serde(default)]
        max_degree: Option<usize>,
        #[serde(default)]
        init: HermiteInit,
    },
    /// `V = sum_k c_k x^k` in one dimension.
    #[serde(rename = "1d-polynomial")]
    Polynomial1d {
        coefficients: Vec<f64>,
        n_states: usize,
        #[serde(default)]
        max_degree: Option<usize>,
        #[serde(default)]
        init: HermiteInit,
    },
    #[serde(rename = "toy-molecular")]
    ToyMolecular {
        nuclei: Vec<[f64; 3]>,
        charges: Vec<f64>,
        n_up: usize,
        n_down: usize,
        n_states: usize,
        #[serde(default = "one")]
        n_det: usize,
        #[serde(default = "one")]
        orbitals_per_nucleus: usize,
        #[serde(default = "default_pf_noise")]
        init_noise: f64,
    },
}

fn one() -> usize {
    1
}

fn default_pf_noise() -> f64 {
    0.05
}

impl SystemSpec {
    pub fn n_states(&self) -> usize {
        match self {
            Self::Harmonic1d { n_states, .. }
            | Self::Polynomial1d { n_states, .. }
            | Self::ToyMolecular { n_states, .. } => *n_states,
        }
    }

    /// `(n_up, n_down)` for systems with spin.
    pub fn spin_counts(&self) -> Option<(usize, usize)> {
        match self {
            Self::ToyMolecular { n_up, n_down, .. } => Some((*n_up, *n_down)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub n_walkers_total: usize,
    pub decorr_steps: usize,
    pub target_acceptance: f64,
    pub initial_sigma: f64,
    /// Adaptive Metropolis steps before the first optimizer step.
    pub burn_in: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self { n_walkers_total: 3072, decorr_steps: 20, target_acceptance: 0.525, initial_sigma: 0.5, burn_in: 200 }
    }
}

impl SamplerSection {
    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            steps_per_iteration: self.decorr_steps,
            initial_sigma: self.initial_sigma,
            target_acceptance: self.target_acceptance,
            ..SamplerConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnapSection {
    pub enabled: bool,
    pub t_ramp: f64,
    pub width: f64,
    /// Per-state `<S^2>` values.
    pub s2_values: Vec<f64>,
}

impl Default for SnapSection {
    fn default() -> Self {
        Self { enabled: false, t_ramp: 5000.0, width: 500.0, s2_values: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub steps: u64,
    pub lr0: f64,
    pub t_decay: f64,
    pub momentum: f64,
    pub beta_tilde: f64,
    pub eps_floor: f64,
    pub ema_decay: f64,
    pub grad_clip: f64,
    /// Trace rows are written every this many steps.
    pub trace_every: u64,
    /// 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
    /// Sampling-only batches averaged into the final report.
    pub eval_batches: usize,
    pub snap: SnapSection,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            steps: 20_000,
            lr0: 0.02,
            t_decay: 1e4,
            momentum: 0.9,
            beta_tilde: 4.0,
            eps_floor: 1e-3,
            ema_decay: 0.99,
            grad_clip: 0.032,
            trace_every: 10,
            checkpoint_every: 0,
            eval_batches: 20,
            snap: SnapSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub bridge_iters: usize,
    pub bridge_clip: f64,
    pub msis_enabled: bool,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self { bridge_iters: 10, bridge_clip: 2.0, msis_enabled: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    pub enabled: bool,
    pub steps: usize,
    /// Structure payload file; a synthetic payload is generated when absent.
    pub targets_path: Option<PathBuf>,
}

impl Default for PretrainSection {
    fn default() -> Self {
        Self { enabled: false, steps: 2000, targets_path: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSpec,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub estimators: EstimatorSection,
    #[serde(default)]
    pub pretrain: PretrainSection,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    /// Parses JSON, reporting the JSON path of any schema violation.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| ConfigError::Parse { path: e.path().to_string(), message: e.inner().to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn n_states(&self) -> usize {
        self.system.n_states()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.n_states();
        if n == 0 {
            return Err(invalid("system.n_states", "must be at least 1"));
        }
        match &self.system {
            SystemSpec::Harmonic1d { omega, max_degree, init, .. } => {
                positive("system.omega", *omega)?;
                check_hermite(n, *max_degree, init)?;
            }
            SystemSpec::Polynomial1d { coefficients, max_degree, init, .. } => {
                if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(invalid("system.coefficients", "must be a non-empty list of finite numbers"));
                }
                if coefficients.len() % 2 == 0 || *coefficients.last().unwrap() <= 0.0 {
                    return Err(invalid("system.coefficients", "leading power must be even with positive coefficient"));
                }
                check_hermite(n, *max_degree, init)?;
            }
            SystemSpec::ToyMolecular { nuclei, charges, n_up, n_down, n_det, orbitals_per_nucleus, init_noise, .. } => {
                if nuclei.is_empty() || nuclei.len() != charges.len() {
                    return Err(invalid("system.charges", "need one charge per nucleus"));
                }
                if n_up + n_down < 2 {
                    return Err(invalid("system.n_up", "need at least two particles"));
                }
                if *n_det == 0 {
                    return Err(invalid("system.n_det", "must be at least 1"));
                }
                if nuclei.len() * orbitals_per_nucleus < n_up + n_down {
                    return Err(invalid("system.orbitals_per_nucleus", "fewer orbitals than particles"));
                }
                if !(init_noise.is_finite() && *init_noise >= 0.0) {
                    return Err(invalid("system.init_noise", "must be non-negative"));
                }
            }
        }
        let s = &self.sampler;
        if s.n_walkers_total < 2 * n {
            return Err(invalid(
                "sampler.n_walkers_total",
                format!("{} is below 2 * n_states = {}", s.n_walkers_total, 2 * n),
            ));
        }
        if s.decorr_steps == 0 {
            return Err(invalid("sampler.decorr_steps", "must be at least 1"));
        }
        if !(s.target_acceptance > 0.0 && s.target_acceptance < 1.0) {
            return Err(invalid("sampler.target_acceptance", "must lie in (0, 1)"));
        }
        positive("sampler.initial_sigma", s.initial_sigma)?;
        let t = &self.training;
        positive("training.lr0", t.lr0)?;
        positive("training.t_decay", t.t_decay)?;
        positive("training.beta_tilde", t.beta_tilde)?;
        positive("training.eps_floor", t.eps_floor)?;
        positive("training.grad_clip", t.grad_clip)?;
        if !(0.0..1.0).contains(&t.momentum) {
            return Err(invalid("training.momentum", "must lie in [0, 1)"));
        }
        if !(t.ema_decay > 0.0 && t.ema_decay < 1.0) {
            return Err(invalid("training.ema_decay", "must lie in (0, 1)"));
        }
        if t.trace_every == 0 {
            return Err(invalid("training.trace_every", "must be at least 1"));
        }
        if t.snap.enabled {
            positive("training.snap.width", t.snap.width)?;
            if !t.snap.t_ramp.is_finite() || t.snap.t_ramp < 0.0 {
                return Err(invalid("training.snap.t_ramp", "must be non-negative"));
            }
            if t.snap.s2_values.len() != n {
                return Err(invalid("training.snap.s2_values", format!("need {n} values, got {}", t.snap.s2_values.len())));
            }
            if t.snap.s2_values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(invalid("training.snap.s2_values", "values must be non-negative"));
            }
        }
        if self.estimators.bridge_iters == 0 {
            return Err(invalid("estimators.bridge_iters", "must be at least 1"));
        }
        if !(self.estimators.bridge_clip.is_finite() && self.estimators.bridge_clip > 1.0) {
            return Err(invalid("estimators.bridge_clip", "must exceed 1"));
        }
        if self.pretrain.enabled {
            if !matches!(self.system, SystemSpec::ToyMolecular { .. }) {
                return Err(invalid("pretrain.enabled", "pretraining needs a toy-molecular system"));
            }
            if self.pretrain.steps == 0 {
                return Err(invalid("pretrain.steps", "must be at least 1"));
            }
        }
        Ok(())
    }
}

fn check_hermite(n_states: usize, max_degree: Option<usize>, init: &HermiteInit) -> Result<(), ConfigError> {
    if let Some(d) = max_degree {
        if d + 1 < n_states {
            return Err(invalid("system.max_degree", format!("must be at least n_states - 1 = {}", n_states - 1)));
        }
    }
    positive("system.init.alpha", init.alpha)?;
    if !(init.noise.is_finite() && init.noise >= 0.0) {
        return Err(invalid("system.init.noise", "must be non-negative"));
    }
    Ok(())
}
