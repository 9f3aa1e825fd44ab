//! Minimal reverse-mode differentiable computation engine.
//!
//! Nodes hold batched matrices (`rows` = batch, `cols` = features) of f64
//! values. Ops are coarse (whole linear layers, whole losses) so dispatch
//! overhead stays negligible next to the arithmetic. Gradients are available
//! for parameters and for any input leaf flagged as gradient-requiring, which
//! the diagnostics module uses for d(Q)/d(action).

mod adam;
mod checkpoint;
mod nn;
mod tape;

pub use adam::{clip_global_norm, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use nn::{forward_mlp, forward_mlp_single, init_mlp, HiddenNorm, MlpSpec};
pub use tape::{Grads, NodeId, Tape, Tensor};

use crate::Result;

/// Ordered, named parameter collection. Order is fixed at construction and
/// drives optimizer-state alignment and checkpoint layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.entries.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, Tensor)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut (String, Tensor)> {
        self.entries.iter_mut()
    }

    pub fn at(&self, i: usize) -> &(String, Tensor) {
        &self.entries[i]
    }

    pub fn at_mut(&mut self, i: usize) -> &mut (String, Tensor) {
        &mut self.entries[i]
    }

    /// Bind every entry as a leaf on `tape`, in order.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> Vec<NodeId> {
        self.iter()
            .map(|(_, t)| tape.leaf_tensor(t, requires_grad))
            .collect()
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Run `backward` and return the gradient of each entry of `params`, aligned
/// with the bound leaf ids from [`ParamSet::bind`].
pub fn param_grads<'a>(grads: &'a Grads, ids: &[NodeId]) -> Vec<Option<&'a [f64]>> {
    ids.iter().map(|&id| grads.get(id)).collect()
}

/// Backward pass from a scalar output node.
pub fn backward(tape: &Tape, output: NodeId) -> Result<Grads> {
    tape.backward(output)
}
