use super::{svd, symmetric_eigen, Mat, NumericsError, Real};

/// Relative singular-value threshold below which the Procrustes solution is
/// flagged as non-unique.
pub const DEGENERATE_RTOL: f64 = 1e-10;
const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct Procrustes<T> {
    pub rotation: Mat<T>,
    pub singular_values: Vec<T>,
    pub degenerate: bool,
}

/// Orthogonal factor `U V^T` of the polar decomposition of a square matrix,
/// together with the SVD it came from.
pub fn polar_factor<T: Real>(m: &Mat<T>) -> Result<Procrustes<T>, NumericsError> {
    if !m.is_square() {
        return Err(NumericsError::Shape(format!("{}x{} is not square", m.rows(), m.cols())));
    }
    let s = svd(m)?;
    let smax = s.sigma.first().copied().unwrap_or(T::zero());
    let degenerate = s.sigma.iter().any(|&x| x <= T::lit(DEGENERATE_RTOL) * smax);
    Ok(Procrustes { rotation: s.u.matmul_t(&s.v), singular_values: s.sigma, degenerate })
}

/// Orthogonal `R` minimizing `|src R - dst|_F`.
pub fn procrustes<T: Real>(src: &Mat<T>, dst: &Mat<T>) -> Result<Procrustes<T>, NumericsError> {
    if src.rows() != dst.rows() || src.cols() != dst.cols() {
        return Err(NumericsError::Shape(format!(
            "src {}x{} vs dst {}x{}",
            src.rows(),
            src.cols(),
            dst.rows(),
            dst.cols()
        )));
    }
    if src.cols() > src.rows() {
        return Err(NumericsError::Shape(format!("k={} exceeds n={}", src.cols(), src.rows())));
    }
    polar_factor(&src.t_matmul(dst))
}

/// `c (c^T s c)^{-1/2}`: columns of `c` made orthonormal in the `s` metric with
/// the least possible change.
pub fn symmetric_orthogonalize<T: Real>(c: &Mat<T>, s: &Mat<T>) -> Result<Mat<T>, NumericsError> {
    if !s.is_square() || s.rows() != c.rows() {
        return Err(NumericsError::Shape(format!(
            "c {}x{} vs s {}x{}",
            c.rows(),
            c.cols(),
            s.rows(),
            s.cols()
        )));
    }
    let gram = c.t_matmul(&s.matmul(c));
    let e = symmetric_eigen(&gram)?;
    if let Some(&min) = e.values.first() {
        if !(min > T::zero()) {
            return Err(NumericsError::NotPositiveDefinite { min_eigenvalue: min.as_f64() });
        }
    }
    let floor = T::lit(EIGEN_FLOOR);
    let inv_sqrt: Vec<T> = e.values.iter().map(|&l| T::one() / l.max(floor).sqrt()).collect();
    let n = e.values.len();
    let scaled = Mat::from_fn(n, n, |i, j| e.vectors[(i, j)] * inv_sqrt[j]);
    let root = scaled.matmul_t(&e.vectors);
    Ok(c.matmul(&root))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_inputs_give_identity() {
        let a = Mat::from_rows(&[vec![1.0, 0.2], vec![0.3, -1.0], vec![0.5, 0.5]]);
        let p = procrustes(&a, &a).unwrap();
        assert!(p.rotation.sub(&Mat::identity(2)).max_abs() < 1e-12);
        assert!(!p.degenerate);
    }

    #[test]
    fn scaled_columns_normalized() {
        let c = Mat::diag(&[2.0, 2.0]);
        let o = symmetric_orthogonalize(&c, &Mat::identity(2)).unwrap();
        assert!(o.sub(&Mat::identity(2)).max_abs() < 1e-14);
    }

    #[test]
    fn zero_cross_term_is_degenerate() {
        let a = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        let p = procrustes(&a, &a).unwrap();
        assert!(p.degenerate);
        assert!(p.rotation.t_matmul(&p.rotation).identity_defect() < 1e-12);
    }

    #[test]
    fn rank_deficient_c_rejected() {
        let c = Mat::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0]]);
        assert!(symmetric_orthogonalize(&c, &Mat::identity(2)).is_err());
    }
}
