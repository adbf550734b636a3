//! Dense layers that are not convolutions: linear map, channel bias,
//! global average pooling, channel concatenation and a fixed-coefficient
//! dot reduction.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// `y_o = Σ_i x_i·W[i,o] + b_o` with `x: [C_in]`, `weight: [C_in, C_out]`.
pub fn linear<E: Element>(x: &Tensor<E>, weight: &Tensor<E>, bias: &Tensor<E>) -> Result<Tensor<E>> {
    if x.rank() != 1 || weight.rank() != 2 || weight.dims()[0] != x.dims()[0] {
        return Err(Error::shape(format!(
            "linear: x {:?} vs weight {:?}",
            x.dims(),
            weight.dims()
        )));
    }
    let (ci, co) = (weight.dims()[0], weight.dims()[1]);
    if bias.dims() != [co] {
        return Err(Error::shape("linear bias length mismatch"));
    }
    let mut out = bias.data().to_vec();
    for i in 0..ci {
        let xi = x.data()[i];
        let row = &weight.data()[i * co..][..co];
        for (o, out_val) in out.iter_mut().enumerate() {
            *out_val += xi * row[o];
        }
    }
    Tensor::from_vec(vec![co], out)
}

pub fn linear_backward<E: Element>(
    x: &Tensor<E>,
    weight: &Tensor<E>,
    grad_out: &Tensor<E>,
) -> Result<(Tensor<E>, Tensor<E>, Tensor<E>)> {
    let (ci, co) = (weight.dims()[0], weight.dims()[1]);
    if grad_out.dims() != [co] {
        return Err(Error::shape("linear grad dims mismatch"));
    }
    let mut grad_x = vec![E::zero(); ci];
    let mut grad_w = vec![E::zero(); ci * co];
    for i in 0..ci {
        let row = &weight.data()[i * co..][..co];
        let mut acc = E::zero();
        for o in 0..co {
            acc += row[o] * grad_out.data()[o];
            grad_w[i * co + o] = x.data()[i] * grad_out.data()[o];
        }
        grad_x[i] = acc;
    }
    Ok((
        Tensor::from_vec(vec![ci], grad_x)?,
        Tensor::from_vec(vec![ci, co], grad_w)?,
        grad_out.clone(),
    ))
}

/// Add a per-channel bias to a `[C, ...spatial]` tensor.
pub fn bias_add<E: Element>(x: &Tensor<E>, bias: &Tensor<E>) -> Result<Tensor<E>> {
    if x.rank() < 1 || bias.dims() != [x.dims()[0]] {
        return Err(Error::shape(format!(
            "bias_add: x {:?} vs bias {:?}",
            x.dims(),
            bias.dims()
        )));
    }
    let c = x.dims()[0];
    let spatial: usize = x.dims()[1..].iter().product::<usize>().max(1);
    let mut out = x.data().to_vec();
    for ch in 0..c {
        let b = bias.data()[ch];
        for v in out[ch * spatial..][..spatial].iter_mut() {
            *v += b;
        }
    }
    Tensor::from_vec(x.dims().to_vec(), out)
}

/// Gradient of the bias: per-channel sum of the output gradient.
pub fn bias_add_backward<E: Element>(grad_out: &Tensor<E>) -> Result<Tensor<E>> {
    let c = grad_out.dims()[0];
    let spatial: usize = grad_out.dims()[1..].iter().product::<usize>().max(1);
    let mut grad_b = vec![E::zero(); c];
    for ch in 0..c {
        let mut acc = E::zero();
        for &v in &grad_out.data()[ch * spatial..][..spatial] {
            acc += v;
        }
        grad_b[ch] = acc;
    }
    Tensor::from_vec(vec![c], grad_b)
}

/// Mean over the spatial axes: `[C, X, Y, Z] -> [C]`.
pub fn global_avg_pool<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    if x.rank() < 2 {
        return Err(Error::shape("global_avg_pool expects spatial axes"));
    }
    let c = x.dims()[0];
    let spatial: usize = x.dims()[1..].iter().product();
    let inv = E::one() / E::from_f64(spatial as f64);
    let mut out = vec![E::zero(); c];
    for ch in 0..c {
        let mut acc = E::zero();
        for &v in &x.data()[ch * spatial..][..spatial] {
            acc += v;
        }
        out[ch] = acc * inv;
    }
    Tensor::from_vec(vec![c], out)
}

pub fn global_avg_pool_backward<E: Element>(
    in_dims: &[usize],
    grad_out: &Tensor<E>,
) -> Result<Tensor<E>> {
    let c = in_dims[0];
    let spatial: usize = in_dims[1..].iter().product();
    if grad_out.dims() != [c] {
        return Err(Error::shape("global_avg_pool grad dims mismatch"));
    }
    let inv = E::one() / E::from_f64(spatial as f64);
    let mut data = vec![E::zero(); c * spatial];
    for ch in 0..c {
        let g = grad_out.data()[ch] * inv;
        for v in data[ch * spatial..][..spatial].iter_mut() {
            *v = g;
        }
    }
    Tensor::from_vec(in_dims.to_vec(), data)
}

/// Concatenate `[C_i, X, Y, Z]` tensors along the channel axis.
pub fn concat_channels<E: Element>(parts: &[&Tensor<E>]) -> Result<Tensor<E>> {
    if parts.is_empty() {
        return Err(Error::shape("concat_channels on empty list"));
    }
    let spatial_dims = &parts[0].dims()[1..];
    for p in parts {
        if p.rank() != parts[0].rank() || &p.dims()[1..] != spatial_dims {
            return Err(Error::shape("concat_channels spatial extents differ"));
        }
    }
    let total_c: usize = parts.iter().map(|p| p.dims()[0]).sum();
    let mut data = Vec::with_capacity(total_c * spatial_dims.iter().product::<usize>());
    for p in parts {
        data.extend_from_slice(p.data());
    }
    let mut dims = vec![total_c];
    dims.extend_from_slice(spatial_dims);
    Tensor::from_vec(dims, data)
}

/// Split a channel-axis gradient back into per-part gradients.
pub fn concat_channels_backward<E: Element>(
    part_channels: &[usize],
    grad_out: &Tensor<E>,
) -> Result<Vec<Tensor<E>>> {
    let spatial: usize = grad_out.dims()[1..].iter().product();
    let spatial_dims = grad_out.dims()[1..].to_vec();
    let mut grads = Vec::with_capacity(part_channels.len());
    let mut off = 0;
    for &c in part_channels {
        let mut dims = vec![c];
        dims.extend_from_slice(&spatial_dims);
        grads.push(Tensor::from_vec(
            dims,
            grad_out.data()[off..off + c * spatial].to_vec(),
        )?);
        off += c * spatial;
    }
    if off != grad_out.len() {
        return Err(Error::shape("concat_channels grad channel total mismatch"));
    }
    Ok(grads)
}

/// `Σ coeffs ⊙ x` as a scalar tensor; the standard reduction used by the
/// gradient checker to turn any op output into a scalar objective.
pub fn dot_const<E: Element>(x: &Tensor<E>, coeffs: &Tensor<E>) -> Result<Tensor<E>> {
    if x.dims() != coeffs.dims() {
        return Err(Error::shape("dot_const dims mismatch"));
    }
    let acc = x
        .data()
        .iter()
        .zip(coeffs.data())
        .fold(E::zero(), |a, (&u, &v)| a + u * v);
    Ok(Tensor::scalar(acc))
}
