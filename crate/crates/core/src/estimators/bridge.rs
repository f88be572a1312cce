use serde::{Deserialize, Serialize};

use super::EstimatorError;
use crate::numerics::{log_sum_exp, Lu, Mat};
use crate::sampler::PooledBatch;

/// Largest relative change on the final iteration still counted as converged.
pub const CONVERGENCE_TOL: f64 = 1e-3;
const SINGULAR_SHIFT: f64 = 1e-10;

/// Normalizer ratios `r_s = N_1^2 / N_s^2` with `r_0 = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioVector(Vec<f64>);

impl RatioVector {
    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn new(r: Vec<f64>) -> Result<Self, EstimatorError> {
        if r.is_empty() || r.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(EstimatorError::InvalidRatios(format!("{r:?}")));
        }
        Ok(Self(r))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn permute(&mut self, perm: &[usize]) {
        let old = self.0.clone();
        self.0 = perm.iter().map(|&p| old[p]).collect();
        let r0 = self.0[0];
        self.0.iter_mut().for_each(|r| *r /= r0);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeOptions {
    pub iterations: usize,
    /// Multiplicative bound on each update.
    pub clip: f64,
}

impl Default for BridgeOptions {
    fn default() -> Self {
        Self { iterations: 10, clip: 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BridgeResult {
    pub ratios: RatioVector,
    /// Largest relative change on the last iteration.
    pub residual: f64,
    pub converged: bool,
    /// Set when the linear system needed a diagonal shift.
    pub regularized: bool,
    pub iterations: usize,
}

/// Iterative bridge sampling for all normalizer ratios from pooled samples,
/// starting from `initial` (all ones when `None`).
pub fn bridge_ratios(
    pooled: &PooledBatch,
    initial: Option<&RatioVector>,
    opts: BridgeOptions,
) -> Result<BridgeResult, EstimatorError> {
    let n = pooled.n_states();
    for (s, &c) in pooled.counts().iter().enumerate() {
        if c == 0 {
            return Err(EstimatorError::TooFewSamples { state: s, have: 0, need: 1 });
        }
    }
    let mut r = initial.map(|r| r.as_slice().to_vec()).unwrap_or_else(|| vec![1.0; n]);
    if r.len() != n {
        return Err(EstimatorError::InvalidRatios(format!("expected {n} ratios, got {}", r.len())));
    }
    if n == 1 {
        return Ok(BridgeResult { ratios: RatioVector(r), residual: 0.0, converged: true, regularized: false, iterations: 0 });
    }
    let log_q: Vec<Vec<f64>> =
        pooled.log_psi().iter().map(|row| row.iter().map(|v| 2.0 * v.log_abs()).collect()).collect();

    let mut residual = f64::INFINITY;
    let mut regularized = false;
    for _ in 0..opts.iterations {
        // m[s][u] = E_{p_s}[R_u], R_u = q_u / sum_v r_v q_v
        let mut m = vec![vec![0.0; n]; n];
        let log_r: Vec<f64> = r.iter().map(|x| x.ln()).collect();
        let mut shifted = vec![0.0; n];
        for (row, &s) in log_q.iter().zip(pooled.origin()) {
            for u in 0..n {
                shifted[u] = log_r[u] + row[u];
            }
            let denom = log_sum_exp(shifted.iter().copied());
            for u in 0..n {
                m[s][u] += (row[u] - denom).exp();
            }
        }
        for (s, c) in pooled.counts().iter().enumerate() {
            m[s].iter_mut().for_each(|v| *v /= *c as f64);
        }

        let k = n - 1;
        let mut b_mat = Mat::from_fn(k, k, |i, j| {
            let (s, t) = (i + 1, j + 1);
            if s == t {
                (0..n).filter(|&sp| sp != s).map(|sp| m[sp][s]).sum()
            } else {
                -m[s][t]
            }
        });
        let rhs: Vec<f64> = (1..n).map(|s| m[s][0]).collect();
        let mut lu = Lu::new(&b_mat)?;
        if lu.is_singular() {
            regularized = true;
            for i in 0..k {
                b_mat[(i, i)] += SINGULAR_SHIFT;
            }
            lu = Lu::new(&b_mat)?;
        }
        let solution = lu.solve(&rhs).unwrap_or_else(|_| r[1..].to_vec());

        residual = 0.0;
        for (i, &x) in solution.iter().enumerate() {
            let old = r[i + 1];
            let new = if x.is_finite() { x.clamp(old / opts.clip, old * opts.clip) } else { old };
            residual = f64::max(residual, (new - old).abs() / old);
            r[i + 1] = new;
        }
    }
    Ok(BridgeResult {
        ratios: RatioVector(r),
        residual,
        converged: residual <= CONVERGENCE_TOL,
        regularized,
        iterations: opts.iterations,
    })
}
