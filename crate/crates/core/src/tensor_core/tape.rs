//! Reverse-mode differentiation over a sequential tape.
//!
//! Nodes are appended in evaluation order, so the tape is topologically sorted
//! by construction and backward is a single reverse sweep.

use crate::error::{Error, Result};

use super::layer::{backward_layer, forward_saved, Layer, LayerParams, Saved};
use super::tensor::Tensor;

pub type NodeId = usize;

enum Op<'a> {
    Leaf,
    Add,
    Layer { layer: &'a Layer, saved: Saved },
}

struct TapeNode<'a> {
    op: Op<'a>,
    inputs: Vec<NodeId>,
    value: Tensor,
}

/// Records forward evaluation for a later backward sweep.
#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<TapeNode<'a>>,
}

/// Result of a backward sweep.
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: Vec<Option<LayerParams>>,
}

impl Gradients {
    /// Gradient with respect to a node's value, or `None` if no path reaches it.
    pub fn wrt(&self, node: NodeId) -> Option<&Tensor> {
        self.nodes.get(node).and_then(Option::as_ref)
    }

    pub fn take(&mut self, node: NodeId) -> Option<Tensor> {
        self.nodes.get_mut(node).and_then(Option::take)
    }

    /// Parameter gradient of the layer applied at `node`.
    pub fn params(&self, node: NodeId) -> Option<&LayerParams> {
        self.params.get(node).and_then(Option::as_ref)
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, node: NodeId) -> &Tensor {
        &self.nodes[node].value
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, Vec::new(), value)
    }

    /// Elementwise `lhs + rhs`; both local gradients are the identity.
    pub fn add(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId> {
        let value = self.nodes[lhs].value.add(&self.nodes[rhs].value)?;
        value.ensure_finite("adder")?;
        Ok(self.push(Op::Add, vec![lhs, rhs], value))
    }

    pub fn layer(&mut self, layer: &'a Layer, input: NodeId) -> Result<NodeId> {
        let (value, saved) = forward_saved(layer, &self.nodes[input].value)?;
        Ok(self.push(Op::Layer { layer, saved }, vec![input], value))
    }

    /// Applies `layers` in order starting from `input`; returns the last node.
    pub fn layers(&mut self, layers: &'a [Layer], input: NodeId) -> Result<NodeId> {
        layers
            .iter()
            .try_fold(input, |node, layer| self.layer(layer, node))
    }

    fn push(&mut self, op: Op<'a>, inputs: Vec<NodeId>, value: Tensor) -> NodeId {
        self.nodes.push(TapeNode { op, inputs, value });
        self.nodes.len() - 1
    }

    /// Backpropagates `seed` (the gradient of the loss w.r.t. `output`).
    pub fn backward(&self, output: NodeId, seed: Tensor, want_params: bool) -> Result<Gradients> {
        seed.expect_shape(self.nodes[output].value.shape(), "backward seed")?;
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut params: Vec<Option<LayerParams>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output] = Some(seed);
        for id in (0..=output).rev() {
            let Some(grad) = grads[id].clone() else {
                continue;
            };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {}
                Op::Add => {
                    for &input in &node.inputs {
                        accumulate(&mut grads[input], &grad)?;
                    }
                }
                Op::Layer { layer, saved } => {
                    let (grad_in, grad_params) = backward_layer(layer, saved, &grad, want_params)?;
                    accumulate(&mut grads[node.inputs[0]], &grad_in)?;
                    params[id] = grad_params;
                }
            }
        }
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }
}

fn accumulate(slot: &mut Option<Tensor>, grad: &Tensor) -> Result<()> {
    match slot {
        None => *slot = Some(grad.clone()),
        Some(existing) => {
            let sum = existing.add(grad)?;
            if !sum.is_finite() {
                return Err(Error::NonFinite("gradient accumulation".into()));
            }
            *existing = sum;
        }
    }
    Ok(())
}
