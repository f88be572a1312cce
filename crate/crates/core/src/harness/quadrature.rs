use super::simpson;
use crate::ansatz::{Configuration, WaveFunction};
use crate::estimators::{local_energy, Hamiltonian};

/// Grid for deterministic 1-D integrals over `[-half_width, half_width]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    pub half_width: f64,
    pub points: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { half_width: 12.0, points: 4001 }
    }
}

impl Quadrature {
    fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        simpson(f, -self.half_width, self.half_width, self.points)
    }

    fn psi<W: WaveFunction + ?Sized>(model: &W, params: &[f64], state: usize, x: f64) -> f64 {
        model.eval(params, state, &Configuration::point(x)).map(|v| v.value()).unwrap_or(0.0)
    }

    pub fn norm_sq<W: WaveFunction + ?Sized>(&self, model: &W, params: &[f64], state: usize) -> f64 {
        self.integrate(|x| Self::psi(model, params, state, x).powi(2))
    }

    /// Rayleigh quotient of one state.
    pub fn energy<W: WaveFunction + ?Sized>(&self, ham: &Hamiltonian, model: &W, params: &[f64], state: usize) -> f64 {
        let num = self.integrate(|x| {
            let c = Configuration::point(x);
            let p = Self::psi(model, params, state, x);
            match local_energy(ham, model, params, state, &c) {
                Ok(e) if e.is_finite() => p * p * e,
                _ => 0.0,
            }
        });
        num / self.norm_sq(model, params, state)
    }

    /// `2 <(E_loc - E) grad log|psi|>` integrated exactly.
    pub fn energy_grad<W: WaveFunction + ?Sized>(
        &self,
        ham: &Hamiltonian,
        model: &W,
        params: &[f64],
        state: usize,
    ) -> Vec<f64> {
        let e = self.energy(ham, model, params, state);
        let norm = self.norm_sq(model, params, state);
        let n = params.len();
        (0..n)
            .map(|k| {
                2.0 * self.integrate(|x| {
                    let c = Configuration::point(x);
                    let p = Self::psi(model, params, state, x);
                    match (local_energy(ham, model, params, state, &c), model.grad_log(params, state, &c)) {
                        (Ok(el), Ok(g)) if el.is_finite() => p * p * (el - e) * g[k],
                        _ => 0.0,
                    }
                }) / norm
            })
            .collect()
    }

    /// Normalized signed overlap of state `s` under `params_s` and state `t`
    /// under `params_t`.
    pub fn overlap<W: WaveFunction + ?Sized>(
        &self,
        model: &W,
        params_s: &[f64],
        s: usize,
        params_t: &[f64],
        t: usize,
    ) -> f64 {
        let cross = self.integrate(|x| Self::psi(model, params_s, s, x) * Self::psi(model, params_t, t, x));
        cross / (self.norm_sq(model, params_s, s) * self.norm_sq(model, params_t, t)).sqrt()
    }
}
