//! Pseudo-label generation from a segmentation model.

use crate::autodiff::Eager;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::ops::softmax;
use crate::tensor::{Element, Tensor};

/// Per-voxel argmax of the softmaxed two-channel logits (background wins
/// exact ties).
pub fn mask_from_logits<E: Element>(mask_logits: &Tensor<E>) -> Result<Tensor<E>> {
    if mask_logits.rank() < 2 || mask_logits.dims()[0] != 2 {
        return Err(Error::shape(format!(
            "mask logits must be [2, ...], got {:?}",
            mask_logits.dims()
        )));
    }
    let voxels: usize = mask_logits.dims()[1..].iter().product();
    let x = mask_logits.data();
    let mut out = vec![E::zero(); voxels];
    for (v, o) in out.iter_mut().enumerate() {
        // softmax is monotone, so the argmax is decided by the raw logits
        let pair = Tensor::from_vec(vec![2], vec![x[v], x[voxels + v]])?;
        let s = softmax(&pair)?;
        if s.data()[1] > s.data()[0] {
            *o = E::one();
        }
    }
    Tensor::from_vec(mask_logits.dims()[1..].to_vec(), out)
}

/// Pseudo-label a volume of arbitrary extents: resample to a
/// model-compatible cubic input, segment back to the original extents,
/// binarize.
pub fn pseudo_label_resampled<E: Element>(
    seg_model: &Model<E>,
    volume: &Tensor<E>,
    input_side: usize,
) -> Result<Tensor<E>> {
    if !seg_model.config().heads.segmentation {
        return Err(Error::Config("pseudo-labels need a segmentation head".into()));
    }
    let dims = volume.dims();
    if dims.len() != 3 {
        return Err(Error::shape(format!("expected [X,Y,Z] volume, got {dims:?}")));
    }
    let resampled = crate::resample::spline_resample_volume(volume, [input_side; 3])?;
    let input = resampled.reshape(vec![1, input_side, input_side, input_side])?;
    let mut ctx = Eager;
    let feats = seg_model.forward_features(&mut ctx, &input)?;
    let logits = seg_model.segment(&mut ctx, &feats, [dims[0], dims[1], dims[2]])?;
    mask_from_logits(&logits)
}

/// Segment each volume and binarize the output.
pub fn generate_pseudo_labels<E: Element>(
    seg_model: &Model<E>,
    volumes: &[Tensor<E>],
) -> Result<Vec<Tensor<E>>> {
    if !seg_model.config().heads.segmentation {
        return Err(Error::Config("pseudo-labels need a segmentation head".into()));
    }
    let mut masks = Vec::with_capacity(volumes.len());
    for vol in volumes {
        let dims = vol.dims();
        if dims.len() != 3 {
            return Err(Error::shape(format!("expected [X,Y,Z] volume, got {dims:?}")));
        }
        let input = vol.reshape(vec![1, dims[0], dims[1], dims[2]])?;
        let mut ctx = Eager;
        let feats = seg_model.forward_features(&mut ctx, &input)?;
        let logits = seg_model.segment(&mut ctx, &feats, [dims[0], dims[1], dims[2]])?;
        masks.push(mask_from_logits(&logits)?);
    }
    Ok(masks)
}
