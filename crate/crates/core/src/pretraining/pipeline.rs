use serde::{Deserialize, Serialize};

use super::{build_graph, propagate_orbitals, selector_overlap_det, PretrainError, PropagationEdge, Selector, Structure, StructureGraph};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorPair {
    pub s: usize,
    pub t: usize,
    /// `det(Pi_s^T Pi_t)`.
    pub det: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorReport {
    pub pairs: Vec<SelectorPair>,
    /// `(state_s, state_t)` of every pair whose determinant is not `delta_st`.
    pub violations: Vec<(usize, usize)>,
}

impl SelectorReport {
    pub fn new(selectors: &[Selector]) -> Self {
        let mut pairs = Vec::new();
        let mut violations = Vec::new();
        for (i, a) in selectors.iter().enumerate() {
            for (j, b) in selectors.iter().enumerate().skip(i) {
                let det = selector_overlap_det(a, b);
                if det != i64::from(i == j) {
                    violations.push((a.state, b.state));
                }
                pairs.push(SelectorPair { s: a.state, t: b.state, det });
            }
        }
        Self { pairs, violations }
    }

    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignOutput {
    pub structures: Vec<Structure>,
    pub graph: StructureGraph,
    pub edges: Vec<PropagationEdge>,
    pub selectors: Option<SelectorReport>,
}

/// Graph construction, orbital propagation from the root, and selector
/// validation in one pass.
pub fn align_payloads(
    structures: &[Structure],
    selectors: Option<&[Selector]>,
    bandwidth: f64,
    kabsch: bool,
) -> Result<AlignOutput, PretrainError> {
    let graph = build_graph(structures, kabsch)?;
    let (aligned, edges) = propagate_orbitals(&graph, structures, bandwidth)?;
    Ok(AlignOutput { structures: aligned, graph, edges, selectors: selectors.map(SelectorReport::new) })
}
