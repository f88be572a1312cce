use super::{AnsatzError, Configuration, LogDerivatives, ParamLayout, ParamVector, WaveFunction};
use crate::SignedLog;

/// One particle on a line:
/// `psi_s(x) = (sum_m c[s][m] He_m(2 sqrt(alpha) x)) exp(-alpha x^2)`.
///
/// `He_m` are the probabilists' Hermite polynomials. With `c[s][m] = delta(s, m)`
/// and `alpha = 1/2` the states are the harmonic-oscillator eigenfunctions.
#[derive(Clone, Debug)]
pub struct HermiteGaussianModel {
    n_states: usize,
    n_basis: usize,
    layout: ParamLayout,
}

struct Poly {
    z: f64,
    p: f64,
    dp: f64,
    d2p: f64,
    he: Vec<f64>,
}

impl HermiteGaussianModel {
    pub fn new(n_states: usize, max_degree: usize) -> Self {
        let n_basis = max_degree + 1;
        let mut layout = ParamLayout::new();
        for s in 0..n_states {
            layout.push("coefficients", Some(s), n_basis);
        }
        layout.push("alpha", None, 1);
        Self { n_states, n_basis, layout }
    }

    pub fn max_degree(&self) -> usize {
        self.n_basis - 1
    }

    /// `c[s][m] = delta(s, m)` (where the basis allows) and the given width.
    pub fn canonical_params(&self, alpha: f64) -> ParamVector {
        let mut p = ParamVector::zeros(self.layout.clone());
        for s in 0..self.n_states {
            if s < self.n_basis {
                p.slice_mut("coefficients", Some(s)).unwrap()[s] = 1.0;
            }
        }
        p.slice_mut("alpha", None).unwrap()[0] = alpha;
        p
    }

    pub fn params_from(&self, coefficients: &[Vec<f64>], alpha: f64) -> Result<ParamVector, AnsatzError> {
        if coefficients.len() != self.n_states || coefficients.iter().any(|c| c.len() != self.n_basis) {
            return Err(AnsatzError::InvalidParams(format!(
                "expected {} x {} coefficients",
                self.n_states, self.n_basis
            )));
        }
        let mut p = ParamVector::zeros(self.layout.clone());
        for (s, c) in coefficients.iter().enumerate() {
            p.slice_mut("coefficients", Some(s)).unwrap().copy_from_slice(c);
        }
        p.slice_mut("alpha", None).unwrap()[0] = alpha;
        Ok(p)
    }

    fn alpha(&self, params: &[f64]) -> Result<f64, AnsatzError> {
        if params.len() != self.layout.len() {
            return Err(AnsatzError::InvalidParams(format!(
                "expected {} parameters, got {}",
                self.layout.len(),
                params.len()
            )));
        }
        let a = params[self.layout.len() - 1];
        if a > 0.0 && a.is_finite() {
            Ok(a)
        } else {
            Err(AnsatzError::InvalidParams(format!("alpha must be positive, got {a}")))
        }
    }

    fn coefficients<'a>(&self, params: &'a [f64], state: usize) -> &'a [f64] {
        &params[state * self.n_basis..(state + 1) * self.n_basis]
    }

    fn x(config: &Configuration) -> Result<f64, AnsatzError> {
        if config.dim() != 1 || config.n_particles() != 1 {
            return Err(AnsatzError::InvalidConfig("Hermite model needs one particle in 1-D".into()));
        }
        let x = config.coords()[0];
        if x.is_finite() {
            Ok(x)
        } else {
            Err(AnsatzError::NonFinite { coordinate: 0 })
        }
    }

    /// `sum_m c_m He_m(z)` without derivatives.
    fn value(c: &[f64], z: f64) -> f64 {
        let (mut prev, mut cur) = (0.0, 1.0);
        let mut p = c[0];
        for (m, &cm) in c.iter().enumerate().skip(1) {
            let next = z * cur - (m - 1) as f64 * prev;
            prev = cur;
            cur = next;
            p += cm * cur;
        }
        p
    }

    fn poly(&self, c: &[f64], z: f64) -> Poly {
        let n = self.n_basis;
        let mut he = vec![0.0; n];
        he[0] = 1.0;
        if n > 1 {
            he[1] = z;
        }
        for m in 1..n.saturating_sub(1) {
            he[m + 1] = z * he[m] - m as f64 * he[m - 1];
        }
        let mut p = 0.0;
        let mut dp = 0.0;
        let mut d2p = 0.0;
        for m in 0..n {
            p += c[m] * he[m];
            if m >= 1 {
                dp += c[m] * m as f64 * he[m - 1];
            }
            if m >= 2 {
                d2p += c[m] * (m * (m - 1)) as f64 * he[m - 2];
            }
        }
        Poly { z, p, dp, d2p, he }
    }

    fn prepare(&self, params: &[f64], state: usize, config: &Configuration) -> Result<(f64, f64, Poly), AnsatzError> {
        self.check_state(state)?;
        let alpha = self.alpha(params)?;
        let x = Self::x(config)?;
        let poly = self.poly(self.coefficients(params, state), 2.0 * alpha.sqrt() * x);
        if !poly.p.is_finite() {
            return Err(AnsatzError::NonFinite { coordinate: 0 });
        }
        Ok((alpha, x, poly))
    }
}

impl WaveFunction for HermiteGaussianModel {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn eval(&self, params: &[f64], state: usize, config: &Configuration) -> Result<SignedLog, AnsatzError> {
        self.check_state(state)?;
        let alpha = self.alpha(params)?;
        let x = Self::x(config)?;
        let p = Self::value(self.coefficients(params, state), 2.0 * alpha.sqrt() * x);
        if !p.is_finite() {
            return Err(AnsatzError::NonFinite { coordinate: 0 });
        }
        let base = SignedLog::from_value(p);
        if base.is_zero() {
            return Ok(base);
        }
        Ok(SignedLog::new(base.sign(), base.log_abs() - alpha * x * x))
    }

    fn grad_log(&self, params: &[f64], state: usize, config: &Configuration) -> Result<Vec<f64>, AnsatzError> {
        let (alpha, x, poly) = self.prepare(params, state, config)?;
        if poly.p == 0.0 {
            return Err(AnsatzError::Node);
        }
        let mut g = vec![0.0; self.layout.len()];
        let off = state * self.n_basis;
        for m in 0..self.n_basis {
            g[off + m] = poly.he[m] / poly.p;
        }
        let dz_dalpha = x / alpha.sqrt();
        g[self.layout.len() - 1] = poly.dp / poly.p * dz_dalpha - x * x;
        debug_assert!(poly.z.is_finite());
        Ok(g)
    }

    fn laplacian_log(
        &self,
        params: &[f64],
        state: usize,
        config: &Configuration,
    ) -> Result<LogDerivatives, AnsatzError> {
        let (alpha, x, poly) = self.prepare(params, state, config)?;
        if poly.p == 0.0 {
            return Err(AnsatzError::Node);
        }
        let r1 = poly.dp / poly.p;
        let r2 = poly.d2p / poly.p;
        let grad = 2.0 * alpha.sqrt() * r1 - 2.0 * alpha * x;
        let lap = 4.0 * alpha * (r2 - r1 * r1) - 2.0 * alpha;
        Ok(LogDerivatives { laplacian: lap, grad_sq: grad * grad })
    }
}
