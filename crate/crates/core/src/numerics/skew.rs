use std::ops::Neg;

use num_traits::{Num, Zero};

use super::{Mat, NumericsError, Real};

/// Even-dimensional skew-symmetric matrix, stored as its strict upper triangle
/// in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct SkewMatrix<T> {
    dim: usize,
    upper: Vec<T>,
}

/// Number of strict-upper-triangle entries of a `dim x dim` matrix.
#[inline]
pub const fn upper_len(dim: usize) -> usize {
    dim * dim.saturating_sub(1) / 2
}

/// Position of `(i, j)`, `i < j`, inside the packed strict upper triangle.
#[inline]
pub const fn upper_index(dim: usize, i: usize, j: usize) -> usize {
    i * dim - i * (i + 1) / 2 + (j - i - 1)
}

impl<T: Copy + Zero + Neg<Output = T>> SkewMatrix<T> {
    pub fn from_upper(dim: usize, upper: Vec<T>) -> Result<Self, NumericsError> {
        if dim == 0 || dim % 2 == 1 {
            return Err(NumericsError::OddDimension(dim));
        }
        if upper.len() != upper_len(dim) {
            return Err(NumericsError::Shape(format!(
                "expected {} upper entries for dim {dim}, got {}",
                upper_len(dim),
                upper.len()
            )));
        }
        Ok(Self { dim, upper })
    }

    /// Accepts a dense matrix only if it is exactly skew-symmetric.
    pub fn from_dense(m: &Mat<T>) -> Result<Self, NumericsError>
    where
        T: PartialEq,
    {
        if !m.is_square() {
            return Err(NumericsError::Shape(format!("{}x{} is not square", m.rows(), m.cols())));
        }
        let n = m.rows();
        for i in 0..n {
            if m[(i, i)] != T::zero() {
                return Err(NumericsError::NotSkew { i, j: i });
            }
            for j in i + 1..n {
                if m[(i, j)] != -m[(j, i)] {
                    return Err(NumericsError::NotSkew { i, j });
                }
            }
        }
        let mut upper = Vec::with_capacity(upper_len(n));
        for i in 0..n {
            for j in i + 1..n {
                upper.push(m[(i, j)]);
            }
        }
        Self::from_upper(n, upper)
    }

    /// Block-diagonal matrix of `[[0, 1], [-1, 0]]` blocks.
    pub fn canonical_pairing(dim: usize) -> Result<Self, NumericsError>
    where
        T: num_traits::One,
    {
        let mut upper = vec![T::zero(); upper_len(dim)];
        for b in (0..dim).step_by(2) {
            if b + 1 < dim {
                upper[upper_index(dim, b, b + 1)] = T::one();
            }
        }
        Self::from_upper(dim, upper)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Equal => T::zero(),
            Less => self.upper[upper_index(self.dim, i, j)],
            Greater => -self.upper[upper_index(self.dim, j, i)],
        }
    }

    pub fn to_dense(&self) -> Mat<T> {
        Mat::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }
}

impl<T: Real> SkewMatrix<T> {
    /// `B * self * B^T` for a `k x dim` matrix `B`, computed so that the result
    /// is exactly skew and identical rows of `B` give exactly zero entries.
    pub fn congruence(&self, b: &Mat<T>) -> Result<Self, NumericsError> {
        if b.cols() != self.dim {
            return Err(NumericsError::Shape(format!(
                "congruence needs {} columns, got {}",
                self.dim,
                b.cols()
            )));
        }
        let k = b.rows();
        let mut upper = Vec::with_capacity(upper_len(k));
        for i in 0..k {
            let x = b.row(i);
            for j in i + 1..k {
                let y = b.row(j);
                let mut acc = T::zero();
                for p in 0..self.dim {
                    for q in p + 1..self.dim {
                        let a = self.upper[upper_index(self.dim, p, q)];
                        if a != T::zero() {
                            acc += a * (x[p] * y[q] - x[q] * y[p]);
                        }
                    }
                }
                upper.push(acc);
            }
        }
        Self::from_upper(k, upper)
    }
}

/// Exact Pfaffian by expansion over perfect matchings.
///
/// Works for any commutative ring (integers, rationals, floats), which makes it
/// usable as an exact oracle. Limited to `dim <= 10` (945 matchings).
pub fn pfaffian_bruteforce<T>(m: &SkewMatrix<T>) -> Result<T, NumericsError>
where
    T: Copy + Num + Neg<Output = T>,
{
    const LIMIT: usize = 10;
    if m.dim() > LIMIT {
        return Err(NumericsError::OracleLimit { dim: m.dim(), limit: LIMIT });
    }
    let idx: Vec<usize> = (0..m.dim()).collect();
    Ok(expand(m, &idx))
}

fn expand<T>(m: &SkewMatrix<T>, idx: &[usize]) -> T
where
    T: Copy + Num + Neg<Output = T>,
{
    if idx.is_empty() {
        return T::one();
    }
    let first = idx[0];
    let mut total = T::zero();
    for (pos, &partner) in idx.iter().enumerate().skip(1) {
        let a = m.get(first, partner);
        if a == T::zero() {
            continue;
        }
        let rest: Vec<usize> =
            idx.iter().enumerate().filter(|&(p, _)| p != 0 && p != pos).map(|(_, &v)| v).collect();
        let term = a * expand(m, &rest);
        total = if pos % 2 == 1 { total + term } else { total - term };
    }
    total
}
