use std::collections::{BTreeMap, VecDeque};

use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use super::{PretrainError, Structure};
use crate::numerics::{determinant, svd, Mat};

/// Root-mean-square deviation of nuclear positions. With `kabsch`, both
/// geometries are centred and optimally rotated (proper rotations only) first.
pub fn rmsd_with(a: &Structure, b: &Structure, kabsch: bool) -> Result<f64, PretrainError> {
    if a.charges != b.charges || a.nuclei.len() != b.nuclei.len() {
        return Err(PretrainError::Mismatch { a: a.id, b: b.id });
    }
    let n = a.nuclei.len();
    if n == 0 {
        return Ok(0.0);
    }
    let (p, q) = if kabsch {
        let centred = |s: &Structure| {
            let mut c = [0.0; 3];
            for r in &s.nuclei {
                for k in 0..3 {
                    c[k] += r[k] / n as f64;
                }
            }
            Mat::from_fn(n, 3, |i, k| s.nuclei[i][k] - c[k])
        };
        let (p, q) = (centred(a), centred(b));
        let m = p.t_matmul(&q);
        let d = svd(&m)?;
        let mut rot = d.u.matmul_t(&d.v);
        if determinant(&rot).sign() < 0 {
            let mut u = d.u.clone();
            for i in 0..3 {
                u[(i, 2)] = -u[(i, 2)];
            }
            rot = u.matmul_t(&d.v);
        }
        (p.matmul(&rot), q)
    } else {
        (Mat::from_fn(n, 3, |i, k| a.nuclei[i][k]), Mat::from_fn(n, 3, |i, k| b.nuclei[i][k]))
    };
    let sq: f64 = p.as_slice().iter().zip(q.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sq / n as f64).sqrt())
}

/// Plain RMSD without superposition.
pub fn rmsd(a: &Structure, b: &Structure) -> Result<f64, PretrainError> {
    rmsd_with(a, b, false)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub a: usize,
    pub b: usize,
    pub rmsd: f64,
}

/// Rooted spanning tree over structures, identified by id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureGraph {
    pub nodes: Vec<usize>,
    pub edges: Vec<GraphEdge>,
    pub root: usize,
    /// Breadth-first from the root, children visited in increasing id.
    pub order: Vec<usize>,
    pub parent: BTreeMap<usize, usize>,
    /// Edge-count eccentricity of every node in the tree.
    pub eccentricity: BTreeMap<usize, usize>,
}

/// Kruskal minimum spanning tree of the complete RMSD graph, rooted at the
/// node of least eccentricity (lowest id on ties).
pub fn build_graph(structures: &[Structure], kabsch: bool) -> Result<StructureGraph, PretrainError> {
    if structures.is_empty() {
        return Err(PretrainError::Empty);
    }
    let n = structures.len();
    let ids: Vec<usize> = structures.iter().map(|s| s.id).collect();
    let mut sorted = ids.clone();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(PretrainError::DuplicateId(w[0]));
    }
    let mut candidates = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            candidates.push((rmsd_with(&structures[i], &structures[j], kabsch)?, i, j));
        }
    }
    candidates.sort_by(|x, y| {
        x.0.total_cmp(&y.0).then_with(|| (ids[x.1].min(ids[x.2]), ids[x.1].max(ids[x.2])).cmp(&(ids[y.1].min(ids[y.2]), ids[y.1].max(ids[y.2]))))
    });
    let mut uf = UnionFind::<usize>::new(n);
    let mut tree = UnGraph::<usize, f64>::with_capacity(n, n.saturating_sub(1));
    let idx: Vec<NodeIndex> = ids.iter().map(|&id| tree.add_node(id)).collect();
    let mut edges = Vec::new();
    for (w, i, j) in candidates {
        if uf.union(i, j) {
            tree.add_edge(idx[i], idx[j], w);
            edges.push(GraphEdge { a: ids[i].min(ids[j]), b: ids[i].max(ids[j]), rmsd: w });
        }
    }
    let mut eccentricity = BTreeMap::new();
    for i in 0..n {
        let dist = dijkstra(&tree, idx[i], None, |_| 1usize);
        eccentricity.insert(ids[i], dist.values().copied().max().unwrap_or(0));
    }
    let root = *eccentricity.iter().min_by_key(|(&id, &e)| (e, id)).map(|(id, _)| id).unwrap();

    let mut neighbours: BTreeMap<usize, Vec<usize>> = ids.iter().map(|&id| (id, Vec::new())).collect();
    for e in &edges {
        neighbours.get_mut(&e.a).unwrap().push(e.b);
        neighbours.get_mut(&e.b).unwrap().push(e.a);
    }
    neighbours.values_mut().for_each(|v| v.sort_unstable());
    let mut order = Vec::with_capacity(n);
    let mut parent = BTreeMap::new();
    let mut queue = VecDeque::from([root]);
    let mut seen = std::collections::BTreeSet::from([root]);
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &v in &neighbours[&u] {
            if seen.insert(v) {
                parent.insert(v, u);
                queue.push_back(v);
            }
        }
    }
    let mut nodes = ids;
    nodes.sort_unstable();
    Ok(StructureGraph { nodes, edges, root, order, parent, eccentricity })
}
