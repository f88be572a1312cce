use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

/// Named contiguous block of a flat parameter vector. `state` is set for blocks
/// owned by a single state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSlice {
    pub name: String,
    pub state: Option<usize>,
    pub offset: usize,
    pub len: usize,
}

impl ParamSlice {
    #[inline]
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }

    /// `name` for shared blocks, `name[s]` for state-owned ones.
    pub fn label(&self) -> String {
        match self.state {
            Some(s) => format!("{}[{s}]", self.name),
            None => self.name.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    slices: Vec<ParamSlice>,
    total: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, state: Option<usize>, len: usize) -> ParamSlice {
        let slice = ParamSlice { name: name.to_string(), state, offset: self.total, len };
        self.total += len;
        self.slices.push(slice.clone());
        slice
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.total
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn slices(&self) -> &[ParamSlice] {
        &self.slices
    }

    pub fn find(&self, name: &str, state: Option<usize>) -> Option<&ParamSlice> {
        self.slices.iter().find(|s| s.name == name && s.state == state)
    }

    pub fn find_label(&self, label: &str) -> Option<&ParamSlice> {
        self.slices.iter().find(|s| s.label() == label)
    }

    /// Reorders state-owned blocks so that new state `i` carries old state
    /// `perm[i]`. Shared blocks are untouched.
    pub fn permute_states(&self, values: &mut [f64], perm: &[usize]) {
        let old = values.to_vec();
        for dst in &self.slices {
            let Some(i) = dst.state else { continue };
            let Some(&from) = perm.get(i) else { continue };
            if let Some(src) = self.find(&dst.name, Some(from)) {
                values[dst.range()].copy_from_slice(&old[src.range()]);
            }
        }
    }
}

/// Flat parameter values together with their layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    layout: ParamLayout,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: ParamLayout) -> Self {
        let values = vec![0.0; layout.len()];
        Self { layout, values }
    }

    pub fn from_values(layout: ParamLayout, values: Vec<f64>) -> Option<Self> {
        (values.len() == layout.len()).then_some(Self { layout, values })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn slice(&self, name: &str, state: Option<usize>) -> Option<&[f64]> {
        self.layout.find(name, state).map(|s| &self.values[s.range()])
    }

    pub fn slice_mut(&mut self, name: &str, state: Option<usize>) -> Option<&mut [f64]> {
        let r = self.layout.find(name, state)?.range();
        Some(&mut self.values[r])
    }

    pub fn permute_states(&mut self, perm: &[usize]) {
        self.layout.permute_states(&mut self.values, perm);
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}
