use std::cmp::Ordering;
use std::ops::{Div, Mul, Neg};

use serde::{Deserialize, Serialize};

use super::Real;

/// A real number stored as `sign * exp(log_abs)`.
///
/// Zero is represented by `sign == 0` together with `log_abs == -inf`, so
/// evaluations that land on a nodal surface are ordinary values rather than
/// errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedLogValue<T> {
    sign: i8,
    log_abs: T,
}

impl<T: Real> SignedLogValue<T> {
    pub fn zero() -> Self {
        Self { sign: 0, log_abs: T::neg_infinity() }
    }

    pub fn one() -> Self {
        Self { sign: 1, log_abs: T::zero() }
    }

    /// Builds from explicit parts. A zero sign forces `log_abs = -inf`.
    pub fn new(sign: i8, log_abs: T) -> Self {
        if sign == 0 || log_abs == T::neg_infinity() {
            Self::zero()
        } else {
            Self { sign: sign.signum(), log_abs }
        }
    }

    pub fn from_value(x: T) -> Self {
        if x == T::zero() {
            Self::zero()
        } else {
            Self { sign: if x > T::zero() { 1 } else { -1 }, log_abs: x.abs().ln() }
        }
    }

    #[inline]
    pub fn sign(&self) -> i8 {
        self.sign
    }

    #[inline]
    pub fn log_abs(&self) -> T {
        self.log_abs
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    pub fn value(&self) -> T {
        match self.sign {
            0 => T::zero(),
            1 => self.log_abs.exp(),
            _ => -self.log_abs.exp(),
        }
    }

    pub fn abs(self) -> Self {
        if self.sign == 0 {
            self
        } else {
            Self { sign: 1, log_abs: self.log_abs }
        }
    }

    /// `self / other` as a plain number, with the log-difference clamped to
    /// `[-clamp, clamp]`. The flag reports whether clamping happened.
    pub fn ratio_clamped(&self, other: &Self, clamp: T) -> (T, bool) {
        if self.sign == 0 {
            return (T::zero(), false);
        }
        debug_assert!(other.sign != 0, "ratio with zero denominator");
        let d = self.log_abs - other.log_abs;
        let clamped = d.abs() > clamp;
        let d = d.max(-clamp).min(clamp);
        let s = T::from_i8(self.sign * other.sign).unwrap();
        (s * d.exp(), clamped)
    }

    /// Sum of signed values without leaving the log domain. Terms that cancel
    /// exactly give zero.
    pub fn sum(terms: &[Self]) -> Self {
        let max = terms
            .iter()
            .filter(|t| t.sign != 0)
            .map(|t| t.log_abs)
            .fold(T::neg_infinity(), T::max);
        if max == T::neg_infinity() {
            return Self::zero();
        }
        let mut acc = T::zero();
        for t in terms.iter().filter(|t| t.sign != 0) {
            let e = (t.log_abs - max).exp();
            if t.sign > 0 {
                acc += e;
            } else {
                acc -= e;
            }
        }
        if acc == T::zero() {
            Self::zero()
        } else {
            Self { sign: if acc > T::zero() { 1 } else { -1 }, log_abs: max + acc.abs().ln() }
        }
    }

    pub fn cmp_magnitude(&self, other: &Self) -> Ordering {
        self.log_abs.partial_cmp(&other.log_abs).unwrap_or(Ordering::Equal)
    }
}

impl<T: Real> Mul for SignedLogValue<T> {
    type Output = Self;

    fn mul(self, rhs: Self) -> Self {
        if self.sign == 0 || rhs.sign == 0 {
            Self::zero()
        } else {
            Self { sign: self.sign * rhs.sign, log_abs: self.log_abs + rhs.log_abs }
        }
    }
}

impl<T: Real> Div for SignedLogValue<T> {
    type Output = Self;

    /// Dividing by zero yields a non-finite magnitude with the numerator's sign.
    fn div(self, rhs: Self) -> Self {
        if self.sign == 0 {
            return Self::zero();
        }
        if rhs.sign == 0 {
            return Self { sign: self.sign, log_abs: T::infinity() };
        }
        Self { sign: self.sign * rhs.sign, log_abs: self.log_abs - rhs.log_abs }
    }
}

impl<T: Real> Neg for SignedLogValue<T> {
    type Output = Self;

    fn neg(self) -> Self {
        Self { sign: -self.sign, log_abs: self.log_abs }
    }
}

/// `log(sum(exp(xs)))` with max-shift; empty or all `-inf` input gives `-inf`.
pub fn log_sum_exp<T: Real>(xs: impl IntoIterator<Item = T> + Clone) -> T {
    let max = xs.clone().into_iter().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    max + xs.into_iter().map(|x| (x - max).exp()).sum::<T>().ln()
}
