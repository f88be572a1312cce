//! Small reductions shared by the estimators.

use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::statistics::{Data, OrderStatistics};

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

pub fn std_error(x: &[f64]) -> f64 {
    (variance(x) / x.len().max(1) as f64).sqrt()
}

pub fn quantile(x: &[f64], tau: f64) -> f64 {
    Data::new(x.to_vec()).quantile(tau)
}

pub fn median(x: &[f64]) -> f64 {
    quantile(x, 0.5)
}

/// Clamps values to `median +- width * q95(|x - median|)`. Returns the clipped
/// values and how many were changed.
pub fn clip_around_median(x: &[f64], width: f64) -> (Vec<f64>, usize) {
    if x.is_empty() {
        return (Vec::new(), 0);
    }
    let m = median(x);
    let dev: Vec<f64> = x.iter().map(|v| (v - m).abs()).collect();
    let half = width * quantile(&dev, 0.95);
    let (lo, hi) = (m - half, m + half);
    let mut n = 0;
    let out = x
        .iter()
        .map(|&v| {
            let c = v.clamp(lo, hi);
            if c != v {
                n += 1;
            }
            c
        })
        .collect();
    (out, n)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    /// Welch-Satterthwaite degrees of freedom.
    pub df: f64,
    /// One-sided p-value for `mean(a) > mean(b)`.
    pub p_greater: f64,
}

/// Welch's unequal-variance t-test. `None` with fewer than two values per
/// sample or zero pooled variance.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Option<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a) / na, variance(b) / nb);
    let se2 = va + vb;
    if !(se2 > 0.0) {
        return None;
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some(WelchTest { t, df, p_greater: dist.sf(t) })
}
