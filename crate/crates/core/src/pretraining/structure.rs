use std::f64::consts::PI;
use std::path::Path;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::PretrainError;
use crate::numerics::{symmetric_eigen, Mat};

/// Normalized s-type Gaussian `(2a/pi)^{3/4} exp(-a |r - n_center|^2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisFunction {
    pub center: usize,
    pub exponent: f64,
}

impl BasisFunction {
    pub fn norm(&self) -> f64 {
        (2.0 * self.exponent / PI).powf(0.75)
    }

    pub fn value(&self, nuclei: &[[f64; 3]], r: &[f64]) -> f64 {
        let c = nuclei[self.center];
        let d2: f64 = r.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
        self.norm() * (-self.exponent * d2).exp()
    }
}

/// Analytic overlap of two normalized s-type Gaussians.
pub fn gaussian_overlap(a: f64, ca: &[f64; 3], b: f64, cb: &[f64; 3]) -> f64 {
    let d2: f64 = ca.iter().zip(cb).map(|(x, y)| (x - y) * (x - y)).sum();
    let p = a + b;
    (4.0 * a * b / (p * p)).powf(0.75) * (-a * b / p * d2).exp()
}

/// One molecular geometry with its orbital payload. Matrices are row-major
/// `n_orb x n_orb`; column `k` of `C` holds orbital `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Structure {
    pub id: usize,
    pub nuclei: Vec<[f64; 3]>,
    pub charges: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_up: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_down: Option<usize>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    #[serde(rename = "S_basis")]
    pub s_basis: Vec<f64>,
    pub eps: Vec<f64>,
    /// Needed only to evaluate orbitals at particle positions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub basis: Vec<BasisFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<Vec<f64>>,
}

impl Structure {
    pub fn n_orb(&self) -> usize {
        self.eps.len()
    }

    pub fn validate(&self) -> Result<(), PretrainError> {
        let n = self.n_orb();
        let bad = |m: String| Err(PretrainError::Payload { id: self.id, message: m });
        if n == 0 {
            return bad("no orbitals".into());
        }
        if self.c.len() != n * n {
            return bad(format!("C has {} entries, expected {}", self.c.len(), n * n));
        }
        if self.s_basis.len() != n * n {
            return bad(format!("S_basis has {} entries, expected {}", self.s_basis.len(), n * n));
        }
        if self.nuclei.len() != self.charges.len() {
            return bad("nuclei and charges differ in length".into());
        }
        if !self.basis.is_empty() && self.basis.len() != n {
            return bad(format!("{} basis functions for {n} orbitals", self.basis.len()));
        }
        if self.basis.iter().any(|b| b.center >= self.nuclei.len()) {
            return bad("basis function centered on a missing nucleus".into());
        }
        Ok(())
    }

    pub fn c_mat(&self) -> Mat<f64> {
        Mat::from_vec(self.n_orb(), self.n_orb(), self.c.clone())
    }

    pub fn s_mat(&self) -> Mat<f64> {
        Mat::from_vec(self.n_orb(), self.n_orb(), self.s_basis.clone())
    }

    /// `max |C^T S C - I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let c = self.c_mat();
        c.t_matmul(&self.s_mat().matmul(&c)).identity_defect()
    }

    /// Orbital values `phi_k(r_i)`, `positions.len() x n_orb`.
    pub fn orbital_values(&self, positions: &[&[f64]]) -> Result<Mat<f64>, PretrainError> {
        if self.basis.len() != self.n_orb() {
            return Err(PretrainError::Payload { id: self.id, message: "no basis description".into() });
        }
        let g = Mat::from_fn(positions.len(), self.n_orb(), |i, mu| self.basis[mu].value(&self.nuclei, positions[i]));
        Ok(g.matmul(&self.c_mat()))
    }
}

/// Input to [`synth_hf`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub id: usize,
    pub nuclei: Vec<[f64; 3]>,
    pub charges: Vec<f64>,
    pub basis_per_nucleus: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Gaussian exponents used by synthetic bases, tightest last.
pub const SYNTH_EXPONENTS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

const SYNTH_NOISE: f64 = 0.05;

/// Synthetic orbital payload: an s-Gaussian basis on every nucleus, its
/// analytic overlap matrix, and orbitals solving `H C = S C eps` for a
/// model one-body matrix `H_ij = S_ij (k_i + k_j) / 2` plus seeded noise, with
/// `k_i = -Z sqrt(a_i)`.
pub fn synth_hf(spec: &SynthSpec) -> Result<Structure, PretrainError> {
    let nb = spec.basis_per_nucleus;
    if nb == 0 || nb > SYNTH_EXPONENTS.len() {
        return Err(PretrainError::Payload {
            id: spec.id,
            message: format!("basis_per_nucleus must lie in 1..={}", SYNTH_EXPONENTS.len()),
        });
    }
    if spec.nuclei.is_empty() || spec.nuclei.len() != spec.charges.len() {
        return Err(PretrainError::Payload { id: spec.id, message: "need one charge per nucleus".into() });
    }
    let basis: Vec<BasisFunction> = (0..spec.nuclei.len())
        .flat_map(|m| SYNTH_EXPONENTS[..nb].iter().map(move |&a| BasisFunction { center: m, exponent: a }))
        .collect();
    let n = basis.len();
    let s = Mat::from_fn(n, n, |i, j| {
        gaussian_overlap(
            basis[i].exponent,
            &spec.nuclei[basis[i].center],
            basis[j].exponent,
            &spec.nuclei[basis[j].center],
        )
    });
    let k: Vec<f64> = basis.iter().map(|b| -spec.charges[b.center] * b.exponent.sqrt()).collect();
    let mut rng = SmallRng::seed_from_u64(spec.seed);
    let mut h = Mat::from_fn(n, n, |i, j| s[(i, j)] * 0.5 * (k[i] + k[j]));
    for i in 0..n {
        for j in i..n {
            let e = SYNTH_NOISE * rng.sample::<f64, _>(StandardNormal);
            h[(i, j)] += e;
            if i != j {
                h[(j, i)] += e;
            }
        }
    }
    // canonical orthogonalization X = U s^{-1/2}
    let se = symmetric_eigen(&s)?;
    if se.values[0] <= 0.0 {
        return Err(PretrainError::Payload { id: spec.id, message: "basis overlap is not positive definite".into() });
    }
    let x = Mat::from_fn(n, n, |i, j| se.vectors[(i, j)] / se.values[j].sqrt());
    let hp = x.t_matmul(&h.matmul(&x));
    let he = symmetric_eigen(&hp)?;
    let mut c = x.matmul(&he.vectors);
    // fix column signs so the largest-magnitude coefficient is positive
    for j in 0..n {
        let col = c.column(j);
        let big = col.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        if big < 0.0 {
            for i in 0..n {
                c[(i, j)] = -c[(i, j)];
            }
        }
    }
    Ok(Structure {
        id: spec.id,
        nuclei: spec.nuclei.clone(),
        charges: spec.charges.clone(),
        n_up: None,
        n_down: None,
        c: c.into_vec(),
        s_basis: s.into_vec(),
        eps: he.values,
        basis,
        parent_id: None,
        rotation: None,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PretrainError> {
    let text = std::fs::read_to_string(path).map_err(|e| PretrainError::Io(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| PretrainError::Schema {
        pointer: json_pointer(e.path()),
        message: e.inner().to_string(),
    })
}

/// JSON-pointer rendering of a serde path, e.g. `/0/C/3`.
pub fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

pub fn load_structures(path: &Path) -> Result<Vec<Structure>, PretrainError> {
    let structures: Vec<Structure> = read_json(path)?;
    for s in &structures {
        s.validate()?;
    }
    Ok(structures)
}

pub(crate) fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PretrainError> {
    read_json(path)
}
