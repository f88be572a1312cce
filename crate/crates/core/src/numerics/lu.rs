use super::{Mat, NumericsError, Real, SignedLogValue};

/// LU factorization with partial pivoting, `P A = L U`, packed in one matrix.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    lu: Mat<T>,
    perm: Vec<usize>,
    parity: i8,
    singular: bool,
}

impl<T: Real> Lu<T> {
    pub fn new(a: &Mat<T>) -> Result<Self, NumericsError> {
        if !a.is_square() {
            return Err(NumericsError::Shape(format!("{}x{} is not square", a.rows(), a.cols())));
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut parity = 1i8;
        let mut singular = false;
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in k + 1..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == T::zero() {
                singular = true;
                continue;
            }
            if p != k {
                lu.swap_rows(p, k);
                perm.swap(p, k);
                parity = -parity;
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != T::zero() {
                    for j in k + 1..n {
                        let v = lu[(k, j)];
                        lu[(i, j)] -= f * v;
                    }
                }
            }
        }
        Ok(Self { lu, perm, parity, singular })
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn determinant(&self) -> SignedLogValue<T> {
        if self.singular {
            return SignedLogValue::zero();
        }
        let mut sign = self.parity;
        let mut log_abs = T::zero();
        for k in 0..self.lu.rows() {
            let d = self.lu[(k, k)];
            if d < T::zero() {
                sign = -sign;
            }
            log_abs += d.abs().ln();
        }
        SignedLogValue::new(sign, log_abs)
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, NumericsError> {
        let n = self.lu.rows();
        if b.len() != n {
            return Err(NumericsError::Shape(format!("rhs length {} != {n}", b.len())));
        }
        if self.singular {
            return Err(NumericsError::Singular);
        }
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                let l = self.lu[(i, j)];
                let xj = x[j];
                x[i] -= l * xj;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let u = self.lu[(i, j)];
                let xj = x[j];
                x[i] -= u * xj;
            }
            x[i] /= self.lu[(i, i)];
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<Mat<T>, NumericsError> {
        let n = self.lu.rows();
        let mut out = Mat::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[j] = T::one();
            let col = self.solve(&e)?;
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        Ok(out)
    }
}

/// Sign and log-magnitude of `det(a)`. Non-square input yields sign 0.
pub fn determinant<T: Real>(a: &Mat<T>) -> SignedLogValue<T> {
    Lu::new(a).map(|lu| lu.determinant()).unwrap_or_else(|_| SignedLogValue::zero())
}

pub fn inverse<T: Real>(a: &Mat<T>) -> Result<Mat<T>, NumericsError> {
    Lu::new(a)?.inverse()
}
