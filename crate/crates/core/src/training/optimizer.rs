use std::ops::Range;

use serde::{Deserialize, Serialize};

/// Heavy-ball SGD with a decaying learning rate and gradient-norm clipping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentumSgd {
    pub lr0: f64,
    pub t_decay: f64,
    pub momentum: f64,
    pub clip_norm: f64,
    pub velocity: Vec<f64>,
}

impl MomentumSgd {
    pub fn new(n_params: usize, lr0: f64, t_decay: f64, momentum: f64, clip_norm: f64) -> Self {
        Self { lr0, t_decay, momentum, clip_norm, velocity: vec![0.0; n_params] }
    }

    pub fn learning_rate(&self, t: u64) -> f64 {
        self.lr0 / (1.0 + t as f64 / self.t_decay)
    }

    /// Rescales `grad` in place to at most `clip_norm`; returns the norm before clipping.
    pub fn clip(&self, grad: &mut [f64]) -> f64 {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > self.clip_norm && norm > 0.0 {
            let f = self.clip_norm / norm;
            grad.iter_mut().for_each(|g| *g *= f);
        }
        norm
    }

    /// Clips `grad`, updates the velocity and applies the step to `params`.
    /// Returns the pre-clip gradient norm.
    pub fn step(&mut self, params: &mut [f64], grad: &mut [f64], t: u64) -> f64 {
        let norm = self.clip(grad);
        let lr = self.learning_rate(t);
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grad.iter()) {
            *v = self.momentum * *v + g;
            *p -= lr * *v;
        }
        norm
    }
}

/// Layer-wise adaptive Adam (LAMB). Each parameter group gets an Adam step
/// rescaled by the trust ratio `|p| / |u|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lamb {
    pub lr0: f64,
    pub t_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub groups: Vec<Range<usize>>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Lamb {
    pub fn new(groups: Vec<Range<usize>>, lr0: f64, t_decay: f64) -> Self {
        let n = groups.iter().map(|g| g.end).max().unwrap_or(0);
        Self {
            lr0,
            t_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-6,
            weight_decay: 0.0,
            groups,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn learning_rate(&self, t: u64) -> f64 {
        self.lr0 / (1.0 + t as f64 / self.t_decay)
    }

    /// Applies step `t` (0-based) to `params`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], t: u64) {
        let lr = self.learning_rate(t);
        let k = t as i32 + 1;
        let (c1, c2) = (1.0 - self.beta1.powi(k), 1.0 - self.beta2.powi(k));
        for g in &self.groups {
            let mut u = Vec::with_capacity(g.len());
            for i in g.clone() {
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
                u.push((self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps) + self.weight_decay * params[i]);
            }
            let p_norm = params[g.clone()].iter().map(|x| x * x).sum::<f64>().sqrt();
            let u_norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let trust = if p_norm > 0.0 && u_norm > 0.0 { p_norm / u_norm } else { 1.0 };
            for (p, d) in params[g.clone()].iter_mut().zip(&u) {
                *p -= lr * trust * d;
            }
        }
    }
}
