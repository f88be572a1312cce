use serde::{Deserialize, Serialize};

/// Running energy statistics and the overlap-penalty weights derived from them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltySchedule {
    pub beta_tilde: f64,
    pub eps_floor: f64,
    pub decay: f64,
    /// Updates during which the weights use only the spread term.
    pub warmup: usize,
    pub ema_mean: Vec<f64>,
    pub ema_std: Vec<f64>,
    pub updates: usize,
}

impl PenaltySchedule {
    pub fn new(n_states: usize, beta_tilde: f64, eps_floor: f64, decay: f64) -> Self {
        Self {
            beta_tilde,
            eps_floor,
            decay,
            warmup: 10,
            ema_mean: vec![0.0; n_states],
            ema_std: vec![0.0; n_states],
            updates: 0,
        }
    }

    pub fn n_states(&self) -> usize {
        self.ema_mean.len()
    }

    /// Folds in one step's per-state energy means and standard deviations.
    pub fn update(&mut self, energies: &[f64], stds: &[f64]) {
        if self.updates == 0 {
            self.ema_mean.copy_from_slice(energies);
            self.ema_std.copy_from_slice(stds);
        } else {
            let d = self.decay;
            for s in 0..self.n_states() {
                self.ema_mean[s] = d * self.ema_mean[s] + (1.0 - d) * energies[s];
                self.ema_std[s] = d * self.ema_std[s] + (1.0 - d) * stds[s];
            }
        }
        self.updates += 1;
    }

    /// True when state `s` sits below `t`: lower EMA energy, or equal energy
    /// and lower index.
    pub fn is_below(&self, s: usize, t: usize) -> bool {
        let (a, b) = (self.ema_mean[s], self.ema_mean[t]);
        a < b || (a == b && s < t)
    }

    /// `beta[s][t]`, nonzero only when `s` sits below `t`.
    pub fn weights(&self) -> Vec<Vec<f64>> {
        let n = self.n_states();
        let mut beta = vec![vec![0.0; n]; n];
        for s in 0..n {
            for t in 0..n {
                if s == t || !self.is_below(s, t) {
                    continue;
                }
                let gap = if self.updates <= self.warmup { 0.0 } else { (self.ema_mean[s] - self.ema_mean[t]).abs() };
                beta[s][t] = self.beta_tilde * gap.max(self.ema_std[s]).max(self.eps_floor);
            }
        }
        beta
    }

    pub fn permute(&mut self, perm: &[usize]) {
        let (m, sd) = (self.ema_mean.clone(), self.ema_std.clone());
        self.ema_mean = perm.iter().map(|&p| m[p]).collect();
        self.ema_std = perm.iter().map(|&p| sd[p]).collect();
    }
}

/// Stable sort of states by energy: new position `i` holds old state `perm[i]`.
pub fn reorder_permutation(energies: &[f64]) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..energies.len()).collect();
    perm.sort_by(|&a, &b| energies[a].partial_cmp(&energies[b]).unwrap_or(std::cmp::Ordering::Equal));
    perm
}

pub fn is_identity(perm: &[usize]) -> bool {
    perm.iter().enumerate().all(|(i, &p)| i == p)
}
