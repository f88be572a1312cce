use super::{Mat, Real, SignedLogValue, SkewMatrix};

/// Knobs for [`pfaffian_with`]. Only the self-check harness changes these.
#[doc(hidden)]
#[derive(Clone, Copy, Debug)]
pub struct PfaffianOptions {
    pub track_swap_sign: bool,
}

impl Default for PfaffianOptions {
    fn default() -> Self {
        Self { track_swap_sign: true }
    }
}

/// Sign and log-magnitude of `Pf(m)` via Parlett–Reid tridiagonalization with
/// partial pivoting. A singular matrix yields sign 0.
pub fn pfaffian<T: Real>(m: &SkewMatrix<T>) -> SignedLogValue<T> {
    pfaffian_with(m, PfaffianOptions::default())
}

#[doc(hidden)]
pub fn pfaffian_with<T: Real>(m: &SkewMatrix<T>, opts: PfaffianOptions) -> SignedLogValue<T> {
    let n = m.dim();
    let mut a: Mat<T> = m.to_dense();
    if has_duplicate_rows(&a) {
        return SignedLogValue::zero();
    }
    let mut sign: i8 = 1;
    let mut log_abs = T::zero();

    for k in (0..n).step_by(2) {
        // Largest entry of column k below the diagonal.
        let mut kp = k + 1;
        let mut best = a[(k, k + 1)].abs();
        for i in k + 2..n {
            let v = a[(k, i)].abs();
            if v > best {
                best = v;
                kp = i;
            }
        }
        if kp != k + 1 {
            a.swap_rows(k + 1, kp);
            a.swap_cols(k + 1, kp);
            if opts.track_swap_sign {
                sign = -sign;
            }
        }
        let pivot = a[(k, k + 1)];
        if pivot == T::zero() || !pivot.is_finite() {
            return SignedLogValue::zero();
        }
        if pivot < T::zero() {
            sign = -sign;
        }
        log_abs += pivot.abs().ln();

        if k + 2 < n {
            let tau: Vec<T> = (k + 2..n).map(|i| a[(k, i)] / pivot).collect();
            let col: Vec<T> = (k + 2..n).map(|i| a[(i, k + 1)]).collect();
            let off = k + 2;
            for i in off..n {
                for j in i + 1..n {
                    let delta = tau[i - off] * col[j - off] - col[i - off] * tau[j - off];
                    let v = a[(i, j)] + delta;
                    a[(i, j)] = v;
                    a[(j, i)] = -v;
                }
            }
        }
    }
    SignedLogValue::new(sign, log_abs)
}

/// Elimination leaves rounding residue where the exact answer is zero; catch the
/// common exactly-repeated-row case up front.
fn has_duplicate_rows<T: Real>(a: &Mat<T>) -> bool {
    let n = a.rows();
    (0..n).any(|i| (i + 1..n).any(|j| a.row(i) == a.row(j)))
}
