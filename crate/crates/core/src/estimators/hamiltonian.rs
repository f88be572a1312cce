use serde::{Deserialize, Serialize};

use crate::ansatz::Configuration;

/// Potential part of `H = -1/2 lap + V`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Hamiltonian {
    /// `V = omega^2 x^2 / 2` for one particle on a line.
    Harmonic { omega: f64 },
    /// `V = sum_k c_k x^k` for one particle on a line.
    Polynomial { coefficients: Vec<f64> },
    /// Electrons around fixed point charges.
    Molecular { nuclei: Vec<[f64; 3]>, charges: Vec<f64> },
}

impl Hamiltonian {
    pub fn potential(&self, config: &Configuration) -> f64 {
        match self {
            Self::Harmonic { omega } => config.coords().iter().map(|x| 0.5 * omega * omega * x * x).sum(),
            Self::Polynomial { coefficients } => config
                .coords()
                .iter()
                .map(|&x| coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c))
                .sum(),
            Self::Molecular { nuclei, charges } => {
                let n = config.n_particles();
                let mut v = 0.0;
                for i in 0..n {
                    let ri = config.particle(i);
                    for j in i + 1..n {
                        v += 1.0 / dist(ri, config.particle(j));
                    }
                    for (nuc, z) in nuclei.iter().zip(charges) {
                        v -= z / dist(ri, nuc);
                    }
                }
                v + self.nuclear_repulsion()
            }
        }
    }

    pub fn nuclear_repulsion(&self) -> f64 {
        match self {
            Self::Molecular { nuclei, charges } => {
                let mut e = 0.0;
                for a in 0..nuclei.len() {
                    for b in a + 1..nuclei.len() {
                        e += charges[a] * charges[b] / dist(&nuclei[a], &nuclei[b]);
                    }
                }
                e
            }
            _ => 0.0,
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
