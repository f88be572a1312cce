use serde::{Deserialize, Serialize};

use super::PretrainError;

/// Zero-one `n_orb x n_elec` matrix with a single 1 per column, stored as the
/// row index of each column's 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selector {
    pub state: usize,
    pub occupied: Vec<usize>,
}

impl Selector {
    pub fn to_dense(&self, n_orb: usize) -> Vec<Vec<i64>> {
        let mut m = vec![vec![0; self.occupied.len()]; n_orb];
        for (j, &r) in self.occupied.iter().enumerate() {
            m[r][j] = 1;
        }
        m
    }
}

/// Exact determinant of an integer matrix by fraction-free elimination.
pub fn integer_determinant(mut a: Vec<Vec<i64>>) -> i64 {
    let n = a.len();
    if n == 0 {
        return 1;
    }
    let mut sign = 1;
    let mut prev = 1i64;
    for k in 0..n - 1 {
        if a[k][k] == 0 {
            let Some(p) = (k + 1..n).find(|&i| a[i][k] != 0) else { return 0 };
            a.swap(k, p);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    sign * a[n - 1][n - 1]
}

/// `det(Pi_a^T Pi_b)` in exact integer arithmetic.
pub fn selector_overlap_det(a: &Selector, b: &Selector) -> i64 {
    let m = a.occupied.iter().map(|&ra| b.occupied.iter().map(|&rb| i64::from(ra == rb)).collect()).collect();
    integer_determinant(m)
}

/// Pairs `(s, t)` violating `det(Pi_s^T Pi_t) = delta_st`.
pub fn selector_violations(selectors: &[Selector]) -> Vec<(usize, usize)> {
    let mut bad = Vec::new();
    for (i, a) in selectors.iter().enumerate() {
        for (j, b) in selectors.iter().enumerate().skip(i) {
            let expected = i64::from(i == j);
            if selector_overlap_det(a, b) != expected {
                bad.push((a.state, b.state));
            }
        }
    }
    bad
}

/// Ground-state selector on the lowest `n_elec` orbitals, and one selector per
/// entry of `excitations`, each applying its `(from, to)` swaps to the ground
/// occupation. An empty list gives the ground state itself.
pub fn selector_set(
    n_orb: usize,
    n_elec: usize,
    excitations: &[Vec<(usize, usize)>],
) -> Result<Vec<Selector>, PretrainError> {
    if n_elec > n_orb {
        return Err(PretrainError::Selector(format!("{n_elec} electrons exceed {n_orb} orbitals")));
    }
    let ground: Vec<usize> = (0..n_elec).collect();
    let mut out = Vec::with_capacity(excitations.len());
    for (state, ex) in excitations.iter().enumerate() {
        let mut occ = ground.clone();
        for &(from, to) in ex {
            let Some(col) = occ.iter().position(|&r| r == from) else {
                return Err(PretrainError::Selector(format!("state {state}: orbital {from} is not occupied")));
            };
            if to >= n_orb || occ.contains(&to) {
                return Err(PretrainError::Selector(format!("state {state}: orbital {to} is not a free virtual")));
            }
            occ[col] = to;
        }
        out.push(Selector { state, occupied: occ });
    }
    let bad = selector_violations(&out);
    if !bad.is_empty() {
        return Err(PretrainError::Orthogonality(bad));
    }
    Ok(out)
}

/// Ground state followed by single excitations out of the highest occupied
/// orbital into successive virtuals.
pub fn default_excitations(n_orb: usize, n_elec: usize, n_states: usize) -> Result<Vec<Vec<(usize, usize)>>, PretrainError> {
    if n_elec == 0 || n_states > 1 + n_orb.saturating_sub(n_elec) {
        return Err(PretrainError::Selector(format!(
            "{n_states} states need more than {} virtual orbitals",
            n_orb.saturating_sub(n_elec)
        )));
    }
    Ok((0..n_states).map(|s| if s == 0 { Vec::new() } else { vec![(n_elec - 1, n_elec + s - 1)] }).collect())
}
