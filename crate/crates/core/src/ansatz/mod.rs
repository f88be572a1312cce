//! Parametric multi-state wave functions.

mod hermite;
mod params;
mod pfaffian;

pub use hermite::HermiteGaussianModel;
pub use params::{ParamLayout, ParamSlice, ParamVector};
pub use pfaffian::{excited_pfaffian_value, ExcitedPfaffianModel, FEATURE_EXPONENTS};

use serde::{Deserialize, Serialize};

use crate::numerics::NumericsError;
use crate::SignedLog;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnsatzError {
    #[error("state {state} out of range for {n_states} states")]
    InvalidState { state: usize, n_states: usize },
    #[error("non-finite value while evaluating coordinate {coordinate}")]
    NonFinite { coordinate: usize },
    #[error("wave function vanishes at this configuration")]
    Node,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Positions of all particles, `n_particles x dim`, row-major. Particles
/// `0..n_up` are spin up and the rest spin down.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    coords: Vec<f64>,
    dim: usize,
    n_up: usize,
}

impl Configuration {
    pub fn new(dim: usize, n_up: usize, coords: Vec<f64>) -> Result<Self, AnsatzError> {
        if dim == 0 || coords.is_empty() || coords.len() % dim != 0 {
            return Err(AnsatzError::InvalidConfig(format!(
                "{} coordinates do not form particles of dimension {dim}",
                coords.len()
            )));
        }
        if n_up > coords.len() / dim {
            return Err(AnsatzError::InvalidConfig(format!("n_up={n_up} exceeds particle count")));
        }
        Ok(Self { coords, dim, n_up })
    }

    /// Single particle on a line.
    pub fn point(x: f64) -> Self {
        Self { coords: vec![x], dim: 1, n_up: 1 }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn n_particles(&self) -> usize {
        self.coords.len() / self.dim
    }

    #[inline]
    pub fn n_up(&self) -> usize {
        self.n_up
    }

    #[inline]
    pub fn n_down(&self) -> usize {
        self.n_particles() - self.n_up
    }

    #[inline]
    pub fn spin_up(&self, i: usize) -> bool {
        i < self.n_up
    }

    #[inline]
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    #[inline]
    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    #[inline]
    pub fn particle(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn swap_particles(&mut self, i: usize, j: usize) {
        for k in 0..self.dim {
            self.coords.swap(i * self.dim + k, j * self.dim + k);
        }
    }
}

/// `sum_i lap_i log|psi|` and `sum_i |grad_i log|psi||^2` over particle coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogDerivatives {
    pub laplacian: f64,
    pub grad_sq: f64,
}

/// Common interface of every multi-state ansatz. Implementations are immutable
/// and evaluate with externally owned parameters.
pub trait WaveFunction: Send + Sync {
    fn n_states(&self) -> usize;

    fn layout(&self) -> &ParamLayout;

    /// Signed log of the unnormalized `psi_state(config)`.
    fn eval(&self, params: &[f64], state: usize, config: &Configuration) -> Result<SignedLog, AnsatzError>;

    fn eval_all(&self, params: &[f64], config: &Configuration) -> Result<Vec<SignedLog>, AnsatzError> {
        (0..self.n_states()).map(|s| self.eval(params, s, config)).collect()
    }

    /// Gradient of `log|psi_state|` with respect to every parameter.
    fn grad_log(&self, params: &[f64], state: usize, config: &Configuration) -> Result<Vec<f64>, AnsatzError>;

    fn laplacian_log(
        &self,
        params: &[f64],
        state: usize,
        config: &Configuration,
    ) -> Result<LogDerivatives, AnsatzError>;

    fn check_state(&self, state: usize) -> Result<(), AnsatzError> {
        if state < self.n_states() {
            Ok(())
        } else {
            Err(AnsatzError::InvalidState { state, n_states: self.n_states() })
        }
    }
}

/// True iff exchanging particles `i` and `j` flips the sign of `psi_state` and
/// keeps its magnitude to 1e-12.
pub fn antisymmetry_check<W: WaveFunction + ?Sized>(
    model: &W,
    params: &[f64],
    state: usize,
    config: &Configuration,
    i: usize,
    j: usize,
) -> bool {
    let Ok(a) = model.eval(params, state, config) else { return false };
    let mut swapped = config.clone();
    swapped.swap_particles(i, j);
    let Ok(b) = model.eval(params, state, &swapped) else { return false };
    if a.is_zero() || b.is_zero() {
        return a.is_zero() && b.is_zero();
    }
    a.sign() == -b.sign() && (a.log_abs() - b.log_abs()).abs() <= 1e-12
}
