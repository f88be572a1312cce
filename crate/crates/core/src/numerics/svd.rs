use super::{Mat, NumericsError, Real};

const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Thin singular value decomposition `m = U diag(sigma) V^T`.
///
/// For an `r x c` input with `k = min(r, c)`, `u` is `r x k`, `v` is `c x k`,
/// and `sigma` has length `k`, sorted non-increasing.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    pub u: Mat<T>,
    pub sigma: Vec<T>,
    pub v: Mat<T>,
}

impl<T: Real> Svd<T> {
    pub fn reconstruct(&self) -> Mat<T> {
        let k = self.sigma.len();
        let us = Mat::from_fn(self.u.rows(), k, |i, j| self.u[(i, j)] * self.sigma[j]);
        us.matmul_t(&self.v)
    }
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd<T: Real>(m: &Mat<T>) -> Result<Svd<T>, NumericsError> {
    if m.rows() < m.cols() {
        let Svd { u, sigma, v } = svd_tall(&m.transpose())?;
        return Ok(Svd { u: v, sigma, v: u });
    }
    svd_tall(m)
}

fn svd_tall<T: Real>(m: &Mat<T>) -> Result<Svd<T>, NumericsError> {
    let (rows, n) = (m.rows(), m.cols());
    // Columns are stored as rows of the transposes for contiguous access.
    let mut a = m.transpose();
    let mut v = Mat::<T>::identity(n);
    let tol = T::lit(OFF_DIAGONAL_TOL);

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for (&x, &y) in a.row(p).iter().zip(a.row(q)) {
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut a, p, q, c, s);
                rotate_rows(&mut v, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(NumericsError::NoConvergence { sweeps: MAX_SWEEPS });
    }

    // `v` currently holds V^T.
    let mut sigma: Vec<T> = (0..n).map(|j| a.row(j).iter().map(|&x| x * x).sum::<T>().sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap_or(std::cmp::Ordering::Equal));

    let smax = order.first().map(|&i| sigma[i]).unwrap_or(T::zero());
    let floor = smax * T::epsilon() * T::lit(rows.max(n) as f64);
    let mut u = Mat::zeros(rows, n);
    let mut vout = Mat::zeros(n, n);
    let mut sorted = Vec::with_capacity(n);
    let mut filled = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let s = sigma[src];
        for i in 0..n {
            vout[(i, dst)] = v[(src, i)];
        }
        if s > floor && s > T::zero() {
            for i in 0..rows {
                u[(i, dst)] = a[(src, i)] / s;
            }
            filled.push(true);
        } else {
            filled.push(false);
        }
        sorted.push(s);
    }
    complete_basis(&mut u, &filled);
    sigma = sorted;
    Ok(Svd { u, sigma, v: vout })
}

fn rotate_rows<T: Real>(m: &mut Mat<T>, p: usize, q: usize, c: T, s: T) {
    for k in 0..m.cols() {
        let x = m[(p, k)];
        let y = m[(q, k)];
        m[(p, k)] = c * x - s * y;
        m[(q, k)] = s * x + c * y;
    }
}

/// Fills unset columns of `u` with unit vectors orthogonal to all others.
fn complete_basis<T: Real>(u: &mut Mat<T>, filled: &[bool]) {
    let rows = u.rows();
    let mut candidate = 0;
    for j in 0..filled.len() {
        if filled[j] {
            continue;
        }
        while candidate < rows {
            let mut w = vec![T::zero(); rows];
            w[candidate] = T::one();
            candidate += 1;
            // Two passes of Gram–Schmidt for stability.
            for _ in 0..2 {
                for (k, &done) in filled.iter().enumerate() {
                    if done || k < j && !filled[k] {
                        let dot: T = (0..rows).map(|i| u[(i, k)] * w[i]).sum();
                        for (i, wi) in w.iter_mut().enumerate() {
                            *wi -= dot * u[(i, k)];
                        }
                    }
                }
            }
            let norm = w.iter().map(|&x| x * x).sum::<T>().sqrt();
            if norm > T::lit(1e-6) {
                for i in 0..rows {
                    u[(i, j)] = w[i] / norm;
                }
                break;
            }
        }
    }
}
