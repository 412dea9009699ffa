//! Named parameter storage and per-step graph sessions.

use super::graph::{Graph, ValueId};
use super::tensor::Tensor;

/// Handle to a parameter inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Ordered, named parameter tensors. Insertion order is the canonical order
/// used by gradients, the optimizer and checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            self.entries.iter().all(|(n, _)| n != &name),
            "duplicate parameter name '{name}'"
        );
        self.entries.push((name, value));
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].0
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].1
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Positional access in canonical order.
    pub fn entry(&self, idx: usize) -> (&str, &Tensor) {
        let (n, t) = &self.entries[idx];
        (n.as_str(), t)
    }

    pub fn entry_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.entries[idx].1
    }

    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Replaces every tensor with the same-named tensor from `other`.
    /// Used when restoring checkpoints or early-stopping snapshots.
    pub fn load_from(&mut self, other: &ParamSet) -> Result<(), super::NnError> {
        for (name, tensor) in &mut self.entries {
            let src = other.by_name(name).ok_or_else(|| {
                super::NnError::Checkpoint(format!("missing parameter '{name}'"))
            })?;
            if src.shape() != tensor.shape() {
                return Err(super::NnError::Checkpoint(format!(
                    "parameter '{name}' has shape {:?}, expected {:?}",
                    src.shape(),
                    tensor.shape()
                )));
            }
            *tensor = src.clone();
        }
        Ok(())
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// A graph plus one leaf per parameter, built fresh for each forward pass.
pub struct Session {
    pub graph: Graph,
    param_nodes: Vec<ValueId>,
}

impl Session {
    /// When `trainable` is set the parameter leaves require gradients.
    pub fn new(params: &ParamSet, trainable: bool) -> Self {
        let mut graph = Graph::new();
        let param_nodes = params
            .entries
            .iter()
            .map(|(_, t)| graph.leaf(t.clone(), trainable))
            .collect();
        Session { graph, param_nodes }
    }

    pub fn param(&self, id: ParamId) -> ValueId {
        self.param_nodes[id.0]
    }

    /// Parameter gradients in canonical order (zeros where unreached).
    pub fn param_grads(&self) -> Vec<Tensor> {
        self.param_nodes.iter().map(|&id| self.graph.grad_tensor(id)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_keep_canonical_order() {
        let mut ps = ParamSet::new();
        let a = ps.add("w", Tensor::zeros(vec![2, 2]));
        let b = ps.add("b", Tensor::zeros(vec![2]));
        assert_eq!(ps.name(a), "w");
        assert_eq!(ps.name(b), "b");
        assert_eq!(ps.iter().map(|(n, _)| n).collect::<Vec<_>>(), vec!["w", "b"]);
    }

    #[test]
    #[should_panic]
    fn duplicate_names_panic() {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::zeros(vec![1]));
        ps.add("w", Tensor::zeros(vec![1]));
    }

    #[test]
    fn session_grads_align_with_params() {
        let mut ps = ParamSet::new();
        let w = ps.add("w", Tensor::new(vec![2], vec![3.0, 4.0]));
        let mut s = Session::new(&ps, true);
        let wid = s.param(w);
        let loss = s.graph.sum(wid);
        s.graph.backward(loss).unwrap();
        let grads = s.param_grads();
        assert_eq!(grads.len(), 1);
        assert_eq!(grads[0].data(), &[1.0, 1.0]);
    }
}
