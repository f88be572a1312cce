/// Snap-penalty scale at step `t`: `0.1 sigmoid((t - t_ramp) / (width / (2 ln 9)))`,
/// rising from 1% to 9% of its maximum over `width` steps.
pub fn snap_ramp(t: f64, t_ramp: f64, width: f64) -> f64 {
    let scale = width / (2.0 * 9f64.ln());
    0.1 / (1.0 + (-(t - t_ramp) / scale).exp())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnapTarget {
    /// Nearest admissible spin quantum number.
    pub s_star: f64,
    /// `s_star (s_star + 1)`.
    pub target: f64,
    /// `(<S^2> - target)^2`, to be scaled by the ramp.
    pub deviation_sq: f64,
}

impl SnapTarget {
    pub fn loss(&self, lambda: f64) -> f64 {
        lambda * self.deviation_sq
    }
}

/// Nearest `s (s + 1)` to the supplied `<S^2>`. With particle counts, only
/// `s >= |n_up - n_down| / 2` with matching integer/half-integer parity are
/// admissible.
pub fn snap_target(s2: f64, counts: Option<(usize, usize)>) -> SnapTarget {
    let v = s2.max(0.0);
    let (start, step) = match counts {
        Some((up, down)) => (up.abs_diff(down) as f64 / 2.0, 1.0),
        None => (0.0, 0.5),
    };
    let mut best = start;
    let mut best_d = (start * (start + 1.0) - v).abs();
    let mut s = start;
    loop {
        s += step;
        let d = (s * (s + 1.0) - v).abs();
        if d < best_d {
            best = s;
            best_d = d;
        }
        if (s - step) * (s - step + 1.0) > v {
            break;
        }
    }
    let target = best * (best + 1.0);
    SnapTarget { s_star: best, target, deviation_sq: (v - target) * (v - target) }
}

/// Source of per-state `<S^2>` values for the snap penalty.
pub trait SpinExpectation: Send + Sync {
    fn s2(&self, state: usize) -> f64;

    /// Parameter gradient of `<S^2>_state`, when the source can provide one.
    fn grad(&self, _state: usize) -> Option<Vec<f64>> {
        None
    }
}

/// Fixed per-state values taken from configuration; carries no gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct SuppliedSpin(pub Vec<f64>);

impl SpinExpectation for SuppliedSpin {
    fn s2(&self, state: usize) -> f64 {
        self.0.get(state).copied().unwrap_or(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_values() {
        assert!((snap_ramp(100.0, 100.0, 40.0) - 0.05).abs() < 1e-15);
        assert!((snap_ramp(80.0, 100.0, 40.0) - 0.01).abs() < 1e-15);
        assert!((snap_ramp(1e9, 100.0, 40.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn targets() {
        let t = snap_target(0.3, None);
        assert_eq!(t.s_star, 0.0);
        assert!((t.loss(1.0) - 0.09).abs() < 1e-15);
        let t = snap_target(1.9, None);
        assert_eq!(t.s_star, 1.0);
        assert!((t.deviation_sq - 0.01).abs() < 1e-14);
        assert_eq!(snap_target(2.0, None).deviation_sq, 0.0);
    }

    #[test]
    fn parity_restriction() {
        // one unpaired particle: only half-integers
        assert_eq!(snap_target(0.1, Some((2, 1))).s_star, 0.5);
        // balanced: integers only, 0.75 closer to 0 than 2
        assert_eq!(snap_target(0.75, Some((1, 1))).s_star, 0.0);
        assert_eq!(snap_target(1.5, Some((1, 1))).s_star, 1.0);
    }
}
