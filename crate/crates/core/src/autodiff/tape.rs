//! The differentiation tape.
//!
//! Nodes are appended in execution order, so the tape is already a
//! topological order of the (acyclic) graph and a single reverse sweep
//! visits every node exactly once. A tape is confined to one training step;
//! it is not shared across threads while live.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::{Element, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

/// Gradients keyed by trainable-leaf name (deterministic iteration order).
pub type GradMap<E> = BTreeMap<String, Tensor<E>>;

#[derive(Clone)]
enum BackOp<E: Element> {
    Leaf,
    Conv3d { input: NodeId, weights: NodeId, stride: [usize; 3], pad: [usize; 3] },
    Depthwise { input: NodeId, weights: NodeId, stride: [usize; 3], pad: [usize; 3] },
    BiasAdd { input: NodeId, bias: NodeId },
    LayerNorm { input: NodeId, gamma: NodeId, beta: NodeId, eps: E },
    Gelu { input: NodeId },
    Softmax { input: NodeId },
    Add { a: NodeId, b: NodeId },
    Scale { input: NodeId, factor: E },
    Pool { input: NodeId },
    Linear { input: NodeId, weight: NodeId, bias: NodeId },
    Resize { input: NodeId },
    Concat { parts: Vec<NodeId> },
    CrossEntropy { logits: NodeId, label: usize, weight: E },
    SegCrossEntropy { logits: NodeId, mask: Tensor<E> },
    AddScaled { a: NodeId, b: NodeId, factor: E },
    DotConst { input: NodeId, coeffs: Tensor<E> },
}

struct Node<E: Element> {
    value: Tensor<E>,
    grad: Option<Tensor<E>>,
    op: BackOp<E>,
    trainable: Option<String>,
}

/// Records tensor ops for a single backward pass.
pub struct Tape<E: Element> {
    nodes: Vec<Node<E>>,
}

impl<E: Element> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Element> Tape<E> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<E>, op: BackOp<E>) -> NodeId {
        self.nodes.push(Node { value, grad: None, op, trainable: None });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf that accumulates a named gradient during `backward`.
    pub fn trainable_leaf(&mut self, name: &str, value: Tensor<E>) -> NodeId {
        let id = self.push(value, BackOp::Leaf);
        self.nodes[id.0].trainable = Some(name.to_string());
        id
    }

    /// Leaf with no gradient tracking (e.g. the input volume).
    pub fn constant_leaf(&mut self, value: Tensor<E>) -> NodeId {
        self.push(value, BackOp::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<E> {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&Tensor<E>> {
        self.nodes[id.0].grad.as_ref()
    }

    pub fn conv3d(&mut self, x: NodeId, w: NodeId, stride: [usize; 3], pad: [usize; 3]) -> Result<NodeId> {
        let value = ops::conv3d(self.value(x), self.value(w), stride, pad)?;
        Ok(self.push(value, BackOp::Conv3d { input: x, weights: w, stride, pad }))
    }

    pub fn depthwise_conv3d(&mut self, x: NodeId, w: NodeId, stride: [usize; 3], pad: [usize; 3]) -> Result<NodeId> {
        let value = ops::depthwise_conv3d(self.value(x), self.value(w), stride, pad)?;
        Ok(self.push(value, BackOp::Depthwise { input: x, weights: w, stride, pad }))
    }

    pub fn bias_add(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let value = ops::bias_add(self.value(x), self.value(bias))?;
        Ok(self.push(value, BackOp::BiasAdd { input: x, bias }))
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: E) -> Result<NodeId> {
        let value = ops::layer_norm(self.value(x), self.value(gamma), self.value(beta), eps)?;
        Ok(self.push(value, BackOp::LayerNorm { input: x, gamma, beta, eps }))
    }

    pub fn gelu(&mut self, x: NodeId) -> Result<NodeId> {
        let value = ops::gelu(self.value(x));
        Ok(self.push(value, BackOp::Gelu { input: x }))
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let value = ops::softmax(self.value(x))?;
        Ok(self.push(value, BackOp::Softmax { input: x }))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, BackOp::Add { a, b }))
    }

    pub fn scale(&mut self, x: NodeId, factor: E) -> Result<NodeId> {
        let value = self.value(x).scale(factor);
        Ok(self.push(value, BackOp::Scale { input: x, factor }))
    }

    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let value = ops::global_avg_pool(self.value(x))?;
        Ok(self.push(value, BackOp::Pool { input: x }))
    }

    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let value = ops::linear(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(value, BackOp::Linear { input: x, weight: w, bias: b }))
    }

    pub fn resize(&mut self, x: NodeId, target: [usize; 3]) -> Result<NodeId> {
        let value = ops::trilinear_resize(self.value(x), target)?;
        Ok(self.push(value, BackOp::Resize { input: x }))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let tensors: Vec<&Tensor<E>> = parts.iter().map(|&p| self.value(p)).collect();
        let value = ops::concat_channels(&tensors)?;
        Ok(self.push(value, BackOp::Concat { parts: parts.to_vec() }))
    }

    pub fn cross_entropy(&mut self, logits: NodeId, label: usize, weight: E) -> Result<NodeId> {
        let value = ops::cross_entropy(self.value(logits), label, weight)?;
        Ok(self.push(Tensor::scalar(value), BackOp::CrossEntropy { logits, label, weight }))
    }

    pub fn seg_cross_entropy(&mut self, logits: NodeId, mask: &Tensor<E>) -> Result<NodeId> {
        let value = ops::seg_cross_entropy(self.value(logits), mask)?;
        Ok(self.push(Tensor::scalar(value), BackOp::SegCrossEntropy { logits, mask: mask.clone() }))
    }

    /// `a + factor·b` (used to combine loss terms).
    pub fn add_scaled(&mut self, a: NodeId, b: NodeId, factor: E) -> Result<NodeId> {
        let value = self.value(a).add(&self.value(b).scale(factor))?;
        Ok(self.push(value, BackOp::AddScaled { a, b, factor }))
    }

    pub fn dot_const(&mut self, x: NodeId, coeffs: &Tensor<E>) -> Result<NodeId> {
        let value = ops::dot_const(self.value(x), coeffs)?;
        Ok(self.push(value, BackOp::DotConst { input: x, coeffs: coeffs.clone() }))
    }

    fn accumulate(&mut self, id: NodeId, grad: Tensor<E>) {
        match &mut self.nodes[id.0].grad {
            Some(existing) => {
                *existing = existing.add(&grad).expect("gradient dims stable");
            }
            slot @ None => *slot = Some(grad),
        }
    }

    /// Reverse sweep from a scalar loss node. Fills the `grad` slot of every
    /// node the loss depends on.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got dims {:?}",
                self.nodes[loss.0].value.dims()
            )));
        }
        self.accumulate(loss, Tensor::scalar(E::one()));
        for i in (0..=loss.0).rev() {
            let Some(grad_out) = self.nodes[i].grad.clone() else {
                continue;
            };
            let op = self.nodes[i].op.clone();
            match op {
                BackOp::Leaf => {}
                BackOp::Conv3d { input, weights, stride, pad } => {
                    let (gx, gw) = ops::conv3d_backward(
                        self.value(input),
                        self.value(weights),
                        stride,
                        pad,
                        &grad_out,
                    )?;
                    self.accumulate(input, gx);
                    self.accumulate(weights, gw);
                }
                BackOp::Depthwise { input, weights, stride, pad } => {
                    let (gx, gw) = ops::depthwise_conv3d_backward(
                        self.value(input),
                        self.value(weights),
                        stride,
                        pad,
                        &grad_out,
                    )?;
                    self.accumulate(input, gx);
                    self.accumulate(weights, gw);
                }
                BackOp::BiasAdd { input, bias } => {
                    let gb = ops::bias_add_backward(&grad_out)?;
                    self.accumulate(input, grad_out);
                    self.accumulate(bias, gb);
                }
                BackOp::LayerNorm { input, gamma, beta, eps } => {
                    let (gx, gg, gb) = ops::layer_norm_backward(
                        self.value(input),
                        self.value(gamma),
                        eps,
                        &grad_out,
                    )?;
                    self.accumulate(input, gx);
                    self.accumulate(gamma, gg);
                    self.accumulate(beta, gb);
                }
                BackOp::Gelu { input } => {
                    let gx = ops::gelu_backward(self.value(input), &grad_out)?;
                    self.accumulate(input, gx);
                }
                BackOp::Softmax { input } => {
                    let gx = ops::softmax_backward(&self.nodes[i].value, &grad_out)?;
                    self.accumulate(input, gx);
                }
                BackOp::Add { a, b } => {
                    self.accumulate(a, grad_out.clone());
                    self.accumulate(b, grad_out);
                }
                BackOp::Scale { input, factor } => {
                    self.accumulate(input, grad_out.scale(factor));
                }
                BackOp::Pool { input } => {
                    let dims = self.value(input).dims().to_vec();
                    let gx = ops::global_avg_pool_backward(&dims, &grad_out)?;
                    self.accumulate(input, gx);
                }
                BackOp::Linear { input, weight, bias } => {
                    let (gx, gw, gb) =
                        ops::linear_backward(self.value(input), self.value(weight), &grad_out)?;
                    self.accumulate(input, gx);
                    self.accumulate(weight, gw);
                    self.accumulate(bias, gb);
                }
                BackOp::Resize { input } => {
                    let dims = self.value(input).dims().to_vec();
                    let gx = ops::trilinear_resize_backward(&dims, &grad_out)?;
                    self.accumulate(input, gx);
                }
                BackOp::Concat { parts } => {
                    let channels: Vec<usize> =
                        parts.iter().map(|&p| self.value(p).dims()[0]).collect();
                    let grads = ops::concat_channels_backward(&channels, &grad_out)?;
                    for (p, g) in parts.into_iter().zip(grads) {
                        self.accumulate(p, g);
                    }
                }
                BackOp::CrossEntropy { logits, label, weight } => {
                    let g = grad_out.as_scalar()?;
                    let gx = ops::cross_entropy_backward(self.value(logits), label, weight)?;
                    self.accumulate(logits, gx.scale(g));
                }
                BackOp::SegCrossEntropy { logits, mask } => {
                    let g = grad_out.as_scalar()?;
                    let gx = ops::seg_cross_entropy_backward(self.value(logits), &mask)?;
                    self.accumulate(logits, gx.scale(g));
                }
                BackOp::AddScaled { a, b, factor } => {
                    self.accumulate(a, grad_out.clone());
                    self.accumulate(b, grad_out.scale(factor));
                }
                BackOp::DotConst { input, coeffs } => {
                    let g = grad_out.as_scalar()?;
                    self.accumulate(input, coeffs.scale(g));
                }
            }
        }
        Ok(())
    }

    /// Gradients of every trainable leaf. Leaves the loss never touched get
    /// explicit zero gradients of their value's dims. Several leaves may
    /// carry the same name (one per batch sample); their gradients sum.
    pub fn trainable_gradients(&self) -> GradMap<E> {
        let mut map = GradMap::new();
        for node in &self.nodes {
            if let Some(name) = &node.trainable {
                let grad = node
                    .grad
                    .clone()
                    .unwrap_or_else(|| Tensor::zeros(node.value.dims()));
                match map.entry(name.clone()) {
                    std::collections::btree_map::Entry::Occupied(mut e) => {
                        let sum = e.get().add(&grad).expect("same-named leaves share dims");
                        e.insert(sum);
                    }
                    std::collections::btree_map::Entry::Vacant(e) => {
                        e.insert(grad);
                    }
                }
            }
        }
        map
    }
}
