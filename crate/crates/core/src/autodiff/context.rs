//! Execution context abstraction: the model forward is written once against
//! this trait and runs either eagerly (no graph retained) or on a [`Tape`].

use super::tape::{NodeId, Tape};
use crate::error::Result;
use crate::ops;
use crate::tensor::{Element, Tensor};

pub trait Context<E: Element> {
    type Value: Clone;

    /// Register a (possibly trainable) named parameter.
    fn param(&mut self, name: &str, value: &Tensor<E>) -> Self::Value;
    /// Track a constant tensor (inputs, fixed masks).
    fn constant(&mut self, value: Tensor<E>) -> Self::Value;
    /// Materialize a value back into a tensor.
    fn tensor(&self, v: &Self::Value) -> Tensor<E>;

    fn conv3d(&mut self, x: &Self::Value, w: &Self::Value, stride: [usize; 3], pad: [usize; 3]) -> Result<Self::Value>;
    fn depthwise_conv3d(&mut self, x: &Self::Value, w: &Self::Value, stride: [usize; 3], pad: [usize; 3]) -> Result<Self::Value>;
    fn bias_add(&mut self, x: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn layer_norm(&mut self, x: &Self::Value, gamma: &Self::Value, beta: &Self::Value, eps: E) -> Result<Self::Value>;
    fn gelu(&mut self, x: &Self::Value) -> Result<Self::Value>;
    fn softmax(&mut self, x: &Self::Value) -> Result<Self::Value>;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn scale(&mut self, x: &Self::Value, factor: E) -> Result<Self::Value>;
    fn global_avg_pool(&mut self, x: &Self::Value) -> Result<Self::Value>;
    fn linear(&mut self, x: &Self::Value, w: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn resize(&mut self, x: &Self::Value, target: [usize; 3]) -> Result<Self::Value>;
    fn concat(&mut self, parts: &[Self::Value]) -> Result<Self::Value>;
    fn cross_entropy(&mut self, logits: &Self::Value, label: usize, weight: E) -> Result<Self::Value>;
    fn seg_cross_entropy(&mut self, logits: &Self::Value, mask: &Tensor<E>) -> Result<Self::Value>;
    fn add_scaled(&mut self, a: &Self::Value, b: &Self::Value, factor: E) -> Result<Self::Value>;
    fn dot_const(&mut self, x: &Self::Value, coeffs: &Tensor<E>) -> Result<Self::Value>;
}

/// Immediate execution; intermediates are dropped as soon as they go out of
/// scope, so inference memory stays bounded.
pub struct Eager;

impl<E: Element> Context<E> for Eager {
    type Value = Tensor<E>;

    fn param(&mut self, _name: &str, value: &Tensor<E>) -> Tensor<E> {
        value.clone()
    }

    fn constant(&mut self, value: Tensor<E>) -> Tensor<E> {
        value
    }

    fn tensor(&self, v: &Tensor<E>) -> Tensor<E> {
        v.clone()
    }

    fn conv3d(&mut self, x: &Tensor<E>, w: &Tensor<E>, stride: [usize; 3], pad: [usize; 3]) -> Result<Tensor<E>> {
        ops::conv3d(x, w, stride, pad)
    }

    fn depthwise_conv3d(&mut self, x: &Tensor<E>, w: &Tensor<E>, stride: [usize; 3], pad: [usize; 3]) -> Result<Tensor<E>> {
        ops::depthwise_conv3d(x, w, stride, pad)
    }

    fn bias_add(&mut self, x: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
        ops::bias_add(x, b)
    }

    fn layer_norm(&mut self, x: &Tensor<E>, gamma: &Tensor<E>, beta: &Tensor<E>, eps: E) -> Result<Tensor<E>> {
        ops::layer_norm(x, gamma, beta, eps)
    }

    fn gelu(&mut self, x: &Tensor<E>) -> Result<Tensor<E>> {
        Ok(ops::gelu(x))
    }

    fn softmax(&mut self, x: &Tensor<E>) -> Result<Tensor<E>> {
        ops::softmax(x)
    }

    fn add(&mut self, a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
        a.add(b)
    }

    fn scale(&mut self, x: &Tensor<E>, factor: E) -> Result<Tensor<E>> {
        Ok(x.scale(factor))
    }

    fn global_avg_pool(&mut self, x: &Tensor<E>) -> Result<Tensor<E>> {
        ops::global_avg_pool(x)
    }

    fn linear(&mut self, x: &Tensor<E>, w: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
        ops::linear(x, w, b)
    }

    fn resize(&mut self, x: &Tensor<E>, target: [usize; 3]) -> Result<Tensor<E>> {
        ops::trilinear_resize(x, target)
    }

    fn concat(&mut self, parts: &[Tensor<E>]) -> Result<Tensor<E>> {
        let refs: Vec<&Tensor<E>> = parts.iter().collect();
        ops::concat_channels(&refs)
    }

    fn cross_entropy(&mut self, logits: &Tensor<E>, label: usize, weight: E) -> Result<Tensor<E>> {
        Ok(Tensor::scalar(ops::cross_entropy(logits, label, weight)?))
    }

    fn seg_cross_entropy(&mut self, logits: &Tensor<E>, mask: &Tensor<E>) -> Result<Tensor<E>> {
        Ok(Tensor::scalar(ops::seg_cross_entropy(logits, mask)?))
    }

    fn add_scaled(&mut self, a: &Tensor<E>, b: &Tensor<E>, factor: E) -> Result<Tensor<E>> {
        a.add(&b.scale(factor))
    }

    fn dot_const(&mut self, x: &Tensor<E>, coeffs: &Tensor<E>) -> Result<Tensor<E>> {
        ops::dot_const(x, coeffs)
    }
}

impl<E: Element> Context<E> for Tape<E> {
    type Value = NodeId;

    fn param(&mut self, name: &str, value: &Tensor<E>) -> NodeId {
        self.trainable_leaf(name, value.clone())
    }

    fn constant(&mut self, value: Tensor<E>) -> NodeId {
        self.constant_leaf(value)
    }

    fn tensor(&self, v: &NodeId) -> Tensor<E> {
        self.value(*v).clone()
    }

    fn conv3d(&mut self, x: &NodeId, w: &NodeId, stride: [usize; 3], pad: [usize; 3]) -> Result<NodeId> {
        Tape::conv3d(self, *x, *w, stride, pad)
    }

    fn depthwise_conv3d(&mut self, x: &NodeId, w: &NodeId, stride: [usize; 3], pad: [usize; 3]) -> Result<NodeId> {
        Tape::depthwise_conv3d(self, *x, *w, stride, pad)
    }

    fn bias_add(&mut self, x: &NodeId, b: &NodeId) -> Result<NodeId> {
        Tape::bias_add(self, *x, *b)
    }

    fn layer_norm(&mut self, x: &NodeId, gamma: &NodeId, beta: &NodeId, eps: E) -> Result<NodeId> {
        Tape::layer_norm(self, *x, *gamma, *beta, eps)
    }

    fn gelu(&mut self, x: &NodeId) -> Result<NodeId> {
        Tape::gelu(self, *x)
    }

    fn softmax(&mut self, x: &NodeId) -> Result<NodeId> {
        Tape::softmax(self, *x)
    }

    fn add(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        Tape::add(self, *a, *b)
    }

    fn scale(&mut self, x: &NodeId, factor: E) -> Result<NodeId> {
        Tape::scale(self, *x, factor)
    }

    fn global_avg_pool(&mut self, x: &NodeId) -> Result<NodeId> {
        Tape::global_avg_pool(self, *x)
    }

    fn linear(&mut self, x: &NodeId, w: &NodeId, b: &NodeId) -> Result<NodeId> {
        Tape::linear(self, *x, *w, *b)
    }

    fn resize(&mut self, x: &NodeId, target: [usize; 3]) -> Result<NodeId> {
        Tape::resize(self, *x, target)
    }

    fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        Tape::concat(self, parts)
    }

    fn cross_entropy(&mut self, logits: &NodeId, label: usize, weight: E) -> Result<NodeId> {
        Tape::cross_entropy(self, *logits, label, weight)
    }

    fn seg_cross_entropy(&mut self, logits: &NodeId, mask: &Tensor<E>) -> Result<NodeId> {
        Tape::seg_cross_entropy(self, *logits, mask)
    }

    fn add_scaled(&mut self, a: &NodeId, b: &NodeId, factor: E) -> Result<NodeId> {
        Tape::add_scaled(self, *a, *b, factor)
    }

    fn dot_const(&mut self, x: &NodeId, coeffs: &Tensor<E>) -> Result<NodeId> {
        Tape::dot_const(self, *x, coeffs)
    }
}
