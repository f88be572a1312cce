use rand::rngs::SmallRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use super::{AnsatzError, Configuration, LogDerivatives, ParamLayout, ParamSlice, ParamVector, WaveFunction};
use crate::numerics::{inverse, pfaffian, upper_index, upper_len, Mat, SkewMatrix};
use crate::SignedLog;

/// Gaussian exponents of the per-nucleus radial features.
pub const FEATURE_EXPONENTS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

/// Default central-difference step for coordinate derivatives.
pub const DEFAULT_H_FD: f64 = 1e-4;

/// `psi_s = sum_k Pf(Phi_k A_sk Phi_k^T)` for the given orbital matrices and
/// antisymmetrizers, summed in the log domain.
pub fn excited_pfaffian_value(orbitals: &[Mat<f64>], antisym: &[SkewMatrix<f64>]) -> Result<SignedLog, AnsatzError> {
    if orbitals.len() != antisym.len() {
        return Err(AnsatzError::InvalidParams(format!(
            "{} orbital matrices vs {} antisymmetrizers",
            orbitals.len(),
            antisym.len()
        )));
    }
    let terms = orbitals
        .iter()
        .zip(antisym)
        .map(|(phi, a)| Ok(pfaffian(&a.congruence(phi)?)))
        .collect::<Result<Vec<_>, AnsatzError>>()?;
    Ok(SignedLog::sum(&terms))
}

/// Pfaffian wave function whose states share orbitals and differ only in their
/// antisymmetrizers.
///
/// Orbital `j` of determinant `k` for a particle of spin `sigma` at `r` is
/// `(h(r) . w[sigma][k][:, j]) exp(-exp(l[sigma][k][j]) |r - n_j|)`, where `h`
/// stacks Gaussians `exp(-g |r - n_m|^2)` for every nucleus and
/// `g` in [`FEATURE_EXPONENTS`], plus a constant. Orbitals are assigned to
/// nuclei in consecutive groups of `orbitals_per_nucleus`.
#[derive(Clone, Debug)]
pub struct ExcitedPfaffianModel {
    n_states: usize,
    n_det: usize,
    n_particles: usize,
    n_up: usize,
    dim: usize,
    nuclei: Vec<Vec<f64>>,
    orbitals_per_nucleus: usize,
    n_orb: usize,
    n_feat: usize,
    h_fd: f64,
    layout: ParamLayout,
    w: [ParamSlice; 2],
    envelope: [ParamSlice; 2],
    antisym: Vec<ParamSlice>,
}

struct Orbitals {
    /// `h` per particle, `n_particles x n_feat`.
    features: Mat<f64>,
    /// Particle-to-nucleus distances, `n_particles x n_nuclei`.
    dist: Mat<f64>,
    phi: Vec<Mat<f64>>,
}

impl ExcitedPfaffianModel {
    pub fn new(
        n_states: usize,
        n_det: usize,
        n_particles: usize,
        n_up: usize,
        nuclei: Vec<Vec<f64>>,
        orbitals_per_nucleus: usize,
    ) -> Result<Self, AnsatzError> {
        let bad = |m: String| Err(AnsatzError::InvalidParams(m));
        if n_states == 0 || n_det == 0 {
            return bad("need at least one state and one determinant".into());
        }
        if n_particles == 0 || n_particles % 2 == 1 {
            return bad(format!("particle count {n_particles} must be even and positive"));
        }
        if n_up > n_particles {
            return bad(format!("n_up={n_up} exceeds {n_particles} particles"));
        }
        let Some(dim) = nuclei.first().map(Vec::len) else {
            return bad("need at least one nucleus".into());
        };
        if dim == 0 || nuclei.iter().any(|n| n.len() != dim) {
            return bad("nuclei must share a positive dimension".into());
        }
        let n_orb = nuclei.len() * orbitals_per_nucleus;
        if n_orb < n_particles || n_orb % 2 == 1 {
            return bad(format!("orbital count {n_orb} must be even and at least {n_particles}"));
        }
        let n_feat = nuclei.len() * FEATURE_EXPONENTS.len() + 1;
        let mut layout = ParamLayout::new();
        let w = [
            layout.push("w_up", None, n_det * n_feat * n_orb),
            layout.push("w_down", None, n_det * n_feat * n_orb),
        ];
        let envelope = [
            layout.push("envelope_up", None, n_det * n_orb),
            layout.push("envelope_down", None, n_det * n_orb),
        ];
        let antisym = (0..n_states).map(|s| layout.push("antisym", Some(s), n_det * upper_len(n_orb))).collect();
        Ok(Self {
            n_states,
            n_det,
            n_particles,
            n_up,
            dim,
            nuclei,
            orbitals_per_nucleus,
            n_orb,
            n_feat,
            h_fd: DEFAULT_H_FD,
            layout,
            w,
            envelope,
            antisym,
        })
    }

    pub fn with_h_fd(mut self, h: f64) -> Self {
        self.h_fd = h;
        self
    }

    pub fn n_det(&self) -> usize {
        self.n_det
    }

    pub fn n_orb(&self) -> usize {
        self.n_orb
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn n_up(&self) -> usize {
        self.n_up
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nuclei(&self) -> &[Vec<f64>] {
        &self.nuclei
    }

    pub fn h_fd(&self) -> f64 {
        self.h_fd
    }

    /// Normal readout weights, unit envelope decay, and canonical pairing
    /// antisymmetrizers perturbed by `noise`-scaled normal entries.
    pub fn init_params(&self, seed: u64, noise: f64) -> ParamVector {
        let mut rng = SmallRng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut p = ParamVector::zeros(self.layout.clone());
        for slice in &self.w {
            for v in &mut p[slice.range()] {
                *v = normal.sample(&mut rng);
            }
        }
        let np = upper_len(self.n_orb);
        for slice in &self.antisym {
            let block = &mut p[slice.range()];
            for k in 0..self.n_det {
                for v in &mut block[k * np..(k + 1) * np] {
                    *v = noise * normal.sample(&mut rng);
                }
                for b in (0..self.n_orb).step_by(2) {
                    block[k * np + upper_index(self.n_orb, b, b + 1)] += 1.0;
                }
            }
        }
        p
    }

    /// Antisymmetrizer of `(state, det)` as a skew matrix.
    pub fn antisymmetrizer(&self, params: &[f64], state: usize, det: usize) -> SkewMatrix<f64> {
        let np = upper_len(self.n_orb);
        let off = self.antisym[state].offset + det * np;
        SkewMatrix::from_upper(self.n_orb, params[off..off + np].to_vec()).expect("even orbital count")
    }

    /// Orbital matrices `Phi_k`, one per determinant, `n_particles x n_orb`.
    pub fn orbitals(&self, params: &[f64], config: &Configuration) -> Result<Vec<Mat<f64>>, AnsatzError> {
        Ok(self.compute_orbitals(params, config)?.phi)
    }

    /// Parameter gradient of a scalar `L` given `d_phi[k] = dL/dPhi_k` at `config`.
    /// Only the readout and envelope parameters receive contributions.
    pub fn orbital_vjp(&self, params: &[f64], config: &Configuration, d_phi: &[Mat<f64>]) -> Result<Vec<f64>, AnsatzError> {
        let orb = self.compute_orbitals(params, config)?;
        let mut g = vec![0.0; self.layout.len()];
        for (k, dk) in d_phi.iter().enumerate().take(self.n_det) {
            for i in 0..self.n_particles {
                let spin = usize::from(!config.spin_up(i));
                let env = &params[self.envelope[spin].range()];
                let w_off = self.w[spin].offset;
                let e_off = self.envelope[spin].offset;
                for j in 0..self.n_orb {
                    let dj = dk[(i, j)];
                    if dj == 0.0 {
                        continue;
                    }
                    let d = orb.dist[(i, self.nucleus_of(j))];
                    let decay = env[k * self.n_orb + j].exp();
                    let envelope = (-decay * d).exp();
                    for f in 0..self.n_feat {
                        g[w_off + (k * self.n_feat + f) * self.n_orb + j] += dj * orb.features[(i, f)] * envelope;
                    }
                    g[e_off + k * self.n_orb + j] += dj * orb.phi[k][(i, j)] * (-decay * d);
                }
            }
        }
        Ok(g)
    }

    /// Offset of the first parameter of antisymmetrizer `(state, det)`.
    pub fn antisym_offset(&self, state: usize, det: usize) -> usize {
        self.antisym[state].offset + det * upper_len(self.n_orb)
    }

    fn validate(&self, params: &[f64], config: &Configuration) -> Result<(), AnsatzError> {
        if params.len() != self.layout.len() {
            return Err(AnsatzError::InvalidParams(format!(
                "expected {} parameters, got {}",
                self.layout.len(),
                params.len()
            )));
        }
        if config.n_particles() != self.n_particles || config.dim() != self.dim || config.n_up() != self.n_up {
            return Err(AnsatzError::InvalidConfig(format!(
                "expected {} particles ({} up) in {}-D",
                self.n_particles, self.n_up, self.dim
            )));
        }
        if let Some(c) = config.coords().iter().position(|x| !x.is_finite()) {
            return Err(AnsatzError::NonFinite { coordinate: c });
        }
        Ok(())
    }

    fn nucleus_of(&self, orbital: usize) -> usize {
        orbital / self.orbitals_per_nucleus
    }

    fn compute_orbitals(&self, params: &[f64], config: &Configuration) -> Result<Orbitals, AnsatzError> {
        self.validate(params, config)?;
        let n = self.n_particles;
        let n_nuc = self.nuclei.len();
        let mut features = Mat::zeros(n, self.n_feat);
        let mut dist = Mat::zeros(n, n_nuc);
        for i in 0..n {
            let r = config.particle(i);
            for (m, nuc) in self.nuclei.iter().enumerate() {
                let d2: f64 = r.iter().zip(nuc).map(|(a, b)| (a - b) * (a - b)).sum();
                dist[(i, m)] = d2.sqrt();
                for (g, &gamma) in FEATURE_EXPONENTS.iter().enumerate() {
                    features[(i, m * FEATURE_EXPONENTS.len() + g)] = (-gamma * d2).exp();
                }
            }
            features[(i, self.n_feat - 1)] = 1.0;
        }
        let mut phi = Vec::with_capacity(self.n_det);
        for k in 0..self.n_det {
            let mut m = Mat::zeros(n, self.n_orb);
            for i in 0..n {
                let spin = usize::from(!config.spin_up(i));
                let w = &params[self.w[spin].range()];
                let env = &params[self.envelope[spin].range()];
                for j in 0..self.n_orb {
                    let mut lin = 0.0;
                    for f in 0..self.n_feat {
                        lin += features[(i, f)] * w[(k * self.n_feat + f) * self.n_orb + j];
                    }
                    let decay = env[k * self.n_orb + j].exp();
                    let v = lin * (-decay * dist[(i, self.nucleus_of(j))]).exp();
                    if !v.is_finite() {
                        return Err(AnsatzError::NonFinite { coordinate: i * self.dim });
                    }
                    m[(i, j)] = v;
                }
            }
            phi.push(m);
        }
        Ok(Orbitals { features, dist, phi })
    }

    fn log_abs(&self, params: &[f64], state: usize, config: &Configuration) -> Result<f64, AnsatzError> {
        let v = self.eval(params, state, config)?;
        if v.is_zero() {
            Err(AnsatzError::Node)
        } else {
            Ok(v.log_abs())
        }
    }
}

impl WaveFunction for ExcitedPfaffianModel {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn eval(&self, params: &[f64], state: usize, config: &Configuration) -> Result<SignedLog, AnsatzError> {
        self.check_state(state)?;
        let orb = self.compute_orbitals(params, config)?;
        let antisym: Vec<_> = (0..self.n_det).map(|k| self.antisymmetrizer(params, state, k)).collect();
        excited_pfaffian_value(&orb.phi, &antisym)
    }

    fn eval_all(&self, params: &[f64], config: &Configuration) -> Result<Vec<SignedLog>, AnsatzError> {
        let orb = self.compute_orbitals(params, config)?;
        (0..self.n_states)
            .map(|s| {
                let antisym: Vec<_> = (0..self.n_det).map(|k| self.antisymmetrizer(params, s, k)).collect();
                excited_pfaffian_value(&orb.phi, &antisym)
            })
            .collect()
    }

    fn grad_log(&self, params: &[f64], state: usize, config: &Configuration) -> Result<Vec<f64>, AnsatzError> {
        self.check_state(state)?;
        let orb = self.compute_orbitals(params, config)?;
        let n = self.n_particles;
        let np = upper_len(self.n_orb);

        let mut terms = Vec::with_capacity(self.n_det);
        let mut mats = Vec::with_capacity(self.n_det);
        for k in 0..self.n_det {
            let a = self.antisymmetrizer(params, state, k);
            let m = a.congruence(&orb.phi[k])?;
            terms.push(pfaffian(&m));
            mats.push((a, m));
        }
        let psi = SignedLog::sum(&terms);
        if psi.is_zero() {
            return Err(AnsatzError::Node);
        }

        let mut g = vec![0.0; self.layout.len()];
        for (k, (a, m)) in mats.iter().enumerate() {
            if terms[k].is_zero() {
                continue;
            }
            let weight = (terms[k] / psi).value();
            // Singular M with a nonzero Pfaffian cannot occur; a failed
            // inverse here only happens on exact cancellation.
            let Ok(ginv) = inverse(&m.to_dense()) else { continue };
            let phi = &orb.phi[k];
            let a_dense = a.to_dense();
            // d log Pf / d Phi = M^{-1} Phi A
            let d_phi = ginv.matmul(phi).matmul(&a_dense);
            // d log Pf / d A_pq (p < q) = -(Phi^T M^{-1} Phi)_pq
            let c = phi.t_matmul(&ginv.matmul(phi));
            let off = self.antisym[state].offset + k * np;
            for p in 0..self.n_orb {
                for q in p + 1..self.n_orb {
                    g[off + upper_index(self.n_orb, p, q)] -= weight * c[(p, q)];
                }
            }
            for i in 0..n {
                let spin = usize::from(!config.spin_up(i));
                let env = &params[self.envelope[spin].range()];
                let w_off = self.w[spin].offset;
                let e_off = self.envelope[spin].offset;
                for j in 0..self.n_orb {
                    let dj = weight * d_phi[(i, j)];
                    if dj == 0.0 {
                        continue;
                    }
                    let d = orb.dist[(i, self.nucleus_of(j))];
                    let decay = env[k * self.n_orb + j].exp();
                    let envelope = (-decay * d).exp();
                    for f in 0..self.n_feat {
                        g[w_off + (k * self.n_feat + f) * self.n_orb + j] += dj * orb.features[(i, f)] * envelope;
                    }
                    g[e_off + k * self.n_orb + j] += dj * phi[(i, j)] * (-decay * d);
                }
            }
        }
        Ok(g)
    }

    fn laplacian_log(
        &self,
        params: &[f64],
        state: usize,
        config: &Configuration,
    ) -> Result<LogDerivatives, AnsatzError> {
        let h = self.h_fd;
        let f0 = self.log_abs(params, state, config)?;
        let mut lap = 0.0;
        let mut grad_sq = 0.0;
        let mut shifted = config.clone();
        for c in 0..config.coords().len() {
            let x = config.coords()[c];
            shifted.coords_mut()[c] = x + h;
            let fp = self.log_abs(params, state, &shifted)?;
            shifted.coords_mut()[c] = x - h;
            let fm = self.log_abs(params, state, &shifted)?;
            shifted.coords_mut()[c] = x;
            let d1 = (fp - fm) / (2.0 * h);
            lap += (fp - 2.0 * f0 + fm) / (h * h);
            grad_sq += d1 * d1;
        }
        Ok(LogDerivatives { laplacian: lap, grad_sq })
    }
}
