//! Fused cross-entropy kernels (log-sum-exp stabilized) with gradients.
//!
//! Fusing softmax and the log keeps the loss finite for extreme logits and
//! gives the compact gradient `softmax − onehot`.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// `weight · (−log softmax(logits)[label])` for a single sample.
pub fn cross_entropy<E: Element>(logits: &Tensor<E>, label: usize, weight: E) -> Result<E> {
    if logits.rank() != 1 {
        return Err(Error::shape("cross_entropy expects rank-1 logits"));
    }
    let k = logits.dims()[0];
    if label >= k {
        return Err(Error::Contract(format!(
            "label {label} out of range for {k} classes"
        )));
    }
    let x = logits.data();
    let max = x.iter().copied().fold(E::neg_infinity(), E::max);
    let lse = x
        .iter()
        .fold(E::zero(), |acc, &v| acc + (v - max).exp())
        .ln()
        + max;
    Ok(weight * (lse - x[label]))
}

/// Gradient of [`cross_entropy`] with respect to the logits (for a unit
/// upstream gradient): `weight · (softmax − onehot)`.
pub fn cross_entropy_backward<E: Element>(
    logits: &Tensor<E>,
    label: usize,
    weight: E,
) -> Result<Tensor<E>> {
    let s = crate::ops::softmax(logits)?;
    let mut grad = s.data().to_vec();
    for (i, g) in grad.iter_mut().enumerate() {
        let target = if i == label { E::one() } else { E::zero() };
        *g = weight * (*g - target);
    }
    Tensor::from_vec(logits.dims().to_vec(), grad)
}

fn check_mask<E: Element>(mask_logits: &Tensor<E>, mask: &Tensor<E>) -> Result<usize> {
    if mask_logits.rank() < 2 || mask_logits.dims()[0] != 2 {
        return Err(Error::shape(format!(
            "segmentation logits must be [2, ...spatial], got {:?}",
            mask_logits.dims()
        )));
    }
    if mask.dims() != &mask_logits.dims()[1..] {
        return Err(Error::shape(format!(
            "mask dims {:?} do not match logits spatial dims {:?}",
            mask.dims(),
            &mask_logits.dims()[1..]
        )));
    }
    if mask
        .data()
        .iter()
        .any(|&v| v != E::zero() && v != E::one())
    {
        return Err(Error::Contract("segmentation mask must be binary".into()));
    }
    Ok(mask.len())
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Voxel-mean two-class cross-entropy of `[2, ...spatial]` logits against a
/// binary mask.
pub fn seg_cross_entropy<E: Element>(mask_logits: &Tensor<E>, mask: &Tensor<E>) -> Result<E> {
    let voxels = check_mask(mask_logits, mask)?;
    let x = mask_logits.data();
    let mut total = 0.0f64;
    for (v, &m) in mask.data().iter().enumerate() {
        let l0 = x[v].to_f64();
        let l1 = x[voxels + v].to_f64();
        let (target, other) = if m == E::one() { (l1, l0) } else { (l0, l1) };
        total += softplus(other - target);
    }
    Ok(E::from_f64(total / voxels as f64))
}

/// Gradient of [`seg_cross_entropy`] with respect to the logits:
/// `(softmax − onehot)/voxels` per voxel.
pub fn seg_cross_entropy_backward<E: Element>(
    mask_logits: &Tensor<E>,
    mask: &Tensor<E>,
) -> Result<Tensor<E>> {
    let voxels = check_mask(mask_logits, mask)?;
    let x = mask_logits.data();
    let inv = 1.0 / voxels as f64;
    let mut grad = vec![E::zero(); mask_logits.len()];
    for (v, &m) in mask.data().iter().enumerate() {
        let l0 = x[v].to_f64();
        let l1 = x[voxels + v].to_f64();
        let max = l0.max(l1);
        let e0 = (l0 - max).exp();
        let e1 = (l1 - max).exp();
        let p1 = e1 / (e0 + e1);
        let (t0, t1) = if m == E::one() { (0.0, 1.0) } else { (1.0, 0.0) };
        grad[v] = E::from_f64(((1.0 - p1) - t0) * inv);
        grad[voxels + v] = E::from_f64((p1 - t1) * inv);
    }
    Tensor::from_vec(mask_logits.dims().to_vec(), grad)
}
