use serde::{Deserialize, Serialize};

use super::{PretrainError, Structure, StructureGraph};
use crate::numerics::{polar_factor, symmetric_orthogonalize, Mat};

/// Grid resolution of the orbital-energy density estimate.
pub const KDE_GRID: usize = 512;
/// Default KDE bandwidth in energy units.
pub const DEFAULT_BANDWIDTH: f64 = 0.5;

/// Groups orbitals by the local maxima of a Gaussian kernel density estimate
/// of their energies. Each orbital joins its nearest maximum; groups come back
/// ordered by energy and are contiguous in sorted energy.
///
/// The density is evaluated on a uniform grid over
/// `[min - 3h, max + 3h]` merged with the energies themselves, so that
/// arbitrarily narrow kernels still register a peak at every orbital.
pub fn cluster_orbital_energies(eps: &[f64], h: f64) -> Result<Vec<Vec<usize>>, PretrainError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(PretrainError::Bandwidth(h));
    }
    if eps.is_empty() {
        return Ok(Vec::new());
    }
    let lo = eps.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = eps.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let mut xs: Vec<f64> = (0..KDE_GRID).map(|i| lo + (hi - lo) * i as f64 / (KDE_GRID - 1) as f64).collect();
    xs.extend_from_slice(eps);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let density: Vec<f64> =
        xs.iter().map(|x| eps.iter().map(|e| (-0.5 * ((x - e) / h).powi(2)).exp()).sum::<f64>()).collect();
    let mut centroids = Vec::new();
    let mut i = 0;
    while i < xs.len() {
        // treat runs of equal density as one plateau
        let mut j = i;
        while j + 1 < xs.len() && density[j + 1] == density[i] {
            j += 1;
        }
        let left = if i == 0 { f64::NEG_INFINITY } else { density[i - 1] };
        let right = if j + 1 == xs.len() { f64::NEG_INFINITY } else { density[j + 1] };
        if density[i] > left && density[i] > right && density[i] > 0.0 {
            centroids.push(0.5 * (xs[i] + xs[j]));
        }
        i = j + 1;
    }
    let mut groups = vec![Vec::new(); centroids.len()];
    for (k, e) in eps.iter().enumerate() {
        let nearest = centroids
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - e).abs().total_cmp(&(b.1 - e).abs()))
            .map(|(g, _)| g)
            .unwrap();
        groups[nearest].push(k);
    }
    groups.retain(|g| !g.is_empty());
    for g in &mut groups {
        g.sort_by(|&a, &b| eps[a].total_cmp(&eps[b]).then(a.cmp(&b)));
    }
    Ok(groups)
}

#[derive(Clone, Debug)]
pub struct BlockAlignment {
    pub c: Mat<f64>,
    /// Block-diagonal orthogonal rotation applied to the child's columns.
    pub rotation: Mat<f64>,
    /// Groups whose block had a degenerate Procrustes solution.
    pub degenerate: Vec<usize>,
}

/// Rotates each group of `c_child`'s columns to best match the same columns of
/// `c_parent` under the cross overlap `s_cross` (child basis by parent basis).
pub fn blockwise_align(
    c_child: &Mat<f64>,
    c_parent: &Mat<f64>,
    s_cross: &Mat<f64>,
    groups: &[Vec<usize>],
) -> Result<BlockAlignment, PretrainError> {
    let n = c_child.cols();
    if c_parent.cols() != n || s_cross.rows() != c_child.rows() || s_cross.cols() != c_parent.rows() {
        return Err(PretrainError::Shape("child, parent and cross overlap do not conform".into()));
    }
    let mut covered = vec![false; n];
    for &k in groups.iter().flatten() {
        if k >= n || std::mem::replace(&mut covered[k], true) {
            return Err(PretrainError::Shape(format!("orbital {k} is out of range or in two groups")));
        }
    }
    let m = c_child.t_matmul(&s_cross.matmul(c_parent));
    let mut rotation = Mat::identity(n);
    let mut degenerate = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        let block = Mat::from_fn(g.len(), g.len(), |a, b| m[(g[a], g[b])]);
        let p = polar_factor(&block)?;
        if p.degenerate {
            degenerate.push(gi);
        }
        for a in 0..g.len() {
            for b in 0..g.len() {
                rotation[(g[a], g[b])] = p.rotation[(a, b)];
            }
        }
    }
    Ok(BlockAlignment { c: c_child.matmul(&rotation), rotation, degenerate })
}

/// Per-edge outcome of [`propagate_orbitals`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationEdge {
    pub parent: usize,
    pub child: usize,
    pub groups: Vec<Vec<usize>>,
    pub degenerate_groups: Vec<usize>,
    /// `|C_child - C_ref|_F` before and after alignment, where `C_ref` is the
    /// parent's orbitals orthogonalized in the child's basis.
    pub distance_before: f64,
    pub distance_after: f64,
}

/// Walks the tree from the root, aligning every child's orbitals to its
/// parent's. Basis functions are matched by position, so the parent's
/// coefficients are first made orthonormal under the child's `S_basis`.
pub fn propagate_orbitals(
    graph: &StructureGraph,
    structures: &[Structure],
    bandwidth: f64,
) -> Result<(Vec<Structure>, Vec<PropagationEdge>), PretrainError> {
    let mut out: Vec<Structure> = structures.to_vec();
    let pos = |id: usize| out_position(structures, id);
    let mut report = Vec::new();
    for &id in &graph.order {
        let Some(&parent_id) = graph.parent.get(&id) else { continue };
        let (ci, pi) = (pos(id)?, pos(parent_id)?);
        let child = &out[ci];
        if child.n_orb() != out[pi].n_orb() {
            return Err(PretrainError::Mismatch { a: parent_id, b: id });
        }
        let s = child.s_mat();
        let c_ref = symmetric_orthogonalize(&out[pi].c_mat(), &s)
            .map_err(|e| PretrainError::SingularEdge { parent: parent_id, child: id, message: e.to_string() })?;
        let groups = cluster_orbital_energies(&child.eps, bandwidth)?;
        let c_child = child.c_mat();
        let aligned = blockwise_align(&c_child, &c_ref, &s, &groups)?;
        report.push(PropagationEdge {
            parent: parent_id,
            child: id,
            distance_before: c_child.sub(&c_ref).frobenius_norm(),
            distance_after: aligned.c.sub(&c_ref).frobenius_norm(),
            groups,
            degenerate_groups: aligned.degenerate,
        });
        let child = &mut out[ci];
        child.c = aligned.c.into_vec();
        child.parent_id = Some(parent_id);
        child.rotation = Some(aligned.rotation.into_vec());
    }
    Ok((out, report))
}

fn out_position(structures: &[Structure], id: usize) -> Result<usize, PretrainError> {
    structures.iter().position(|s| s.id == id).ok_or(PretrainError::UnknownId(id))
}
