//! Trilinear resampling (align-corners-false) for channel-first volumes.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Per-axis sample: two source indices and the interpolation weight of the
/// upper one.
#[derive(Clone, Copy)]
struct AxisSample {
    lo: usize,
    hi: usize,
    t: f64,
}

/// Align-corners-false source coordinates, clamped to the valid range so
/// border samples repeat the edge value. Resampling to the same extent is an
/// exact identity.
fn axis_samples(n_in: usize, n_out: usize) -> Vec<AxisSample> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|j| {
            let src = ((j as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(n_in - 1);
            AxisSample { lo, hi, t: src - lo as f64 }
        })
        .collect()
}

/// Resize a `[C, X, Y, Z]` tensor to `[C, X', Y', Z']`.
pub fn trilinear_resize<E: Element>(input: &Tensor<E>, target: [usize; 3]) -> Result<Tensor<E>> {
    if input.rank() != 4 {
        return Err(Error::shape(format!(
            "trilinear_resize expects [C,X,Y,Z], got {:?}",
            input.dims()
        )));
    }
    if target.iter().any(|&t| t == 0) {
        return Err(Error::parameter("target extents must be >= 1"));
    }
    let [c, xi, yi, zi] = [input.dims()[0], input.dims()[1], input.dims()[2], input.dims()[3]];
    let [xo, yo, zo] = target;
    if [xi, yi, zi] == target {
        return Ok(input.clone());
    }
    let sx = axis_samples(xi, xo);
    let sy = axis_samples(yi, yo);
    let sz = axis_samples(zi, zo);
    let x = input.data();
    let mut out = vec![E::zero(); c * xo * yo * zo];
    for ch in 0..c {
        let in_base = ch * xi * yi * zi;
        let out_base = ch * xo * yo * zo;
        for (ox, ax) in sx.iter().enumerate() {
            for (oy, ay) in sy.iter().enumerate() {
                let p00 = in_base + (ax.lo * yi + ay.lo) * zi;
                let p01 = in_base + (ax.lo * yi + ay.hi) * zi;
                let p10 = in_base + (ax.hi * yi + ay.lo) * zi;
                let p11 = in_base + (ax.hi * yi + ay.hi) * zi;
                let row = out_base + (ox * yo + oy) * zo;
                for (oz, az) in sz.iter().enumerate() {
                    let mut acc = 0.0f64;
                    for (plane, wx) in [(p00, (1.0 - ax.t) * (1.0 - ay.t)), (p01, (1.0 - ax.t) * ay.t), (p10, ax.t * (1.0 - ay.t)), (p11, ax.t * ay.t)] {
                        acc += wx
                            * ((1.0 - az.t) * x[plane + az.lo].to_f64()
                                + az.t * x[plane + az.hi].to_f64());
                    }
                    out[row + oz] = E::from_f64(acc);
                }
            }
        }
    }
    Tensor::from_vec(vec![c, xo, yo, zo], out)
}

/// Adjoint of [`trilinear_resize`]: scatters output gradients back onto the
/// source grid with the same corner weights.
pub fn trilinear_resize_backward<E: Element>(
    in_dims: &[usize],
    grad_out: &Tensor<E>,
) -> Result<Tensor<E>> {
    if in_dims.len() != 4 || grad_out.rank() != 4 || in_dims[0] != grad_out.dims()[0] {
        return Err(Error::shape("trilinear_resize backward dims mismatch"));
    }
    let [c, xi, yi, zi] = [in_dims[0], in_dims[1], in_dims[2], in_dims[3]];
    let [xo, yo, zo] = [grad_out.dims()[1], grad_out.dims()[2], grad_out.dims()[3]];
    if [xi, yi, zi] == [xo, yo, zo] {
        return Ok(grad_out.clone());
    }
    let sx = axis_samples(xi, xo);
    let sy = axis_samples(yi, yo);
    let sz = axis_samples(zi, zo);
    let g = grad_out.data();
    let mut grad_in = vec![E::zero(); c * xi * yi * zi];
    for ch in 0..c {
        let in_base = ch * xi * yi * zi;
        let out_base = ch * xo * yo * zo;
        for (ox, ax) in sx.iter().enumerate() {
            for (oy, ay) in sy.iter().enumerate() {
                let p00 = in_base + (ax.lo * yi + ay.lo) * zi;
                let p01 = in_base + (ax.lo * yi + ay.hi) * zi;
                let p10 = in_base + (ax.hi * yi + ay.lo) * zi;
                let p11 = in_base + (ax.hi * yi + ay.hi) * zi;
                let row = out_base + (ox * yo + oy) * zo;
                for (oz, az) in sz.iter().enumerate() {
                    let gv = g[row + oz].to_f64();
                    for (plane, wxy) in [(p00, (1.0 - ax.t) * (1.0 - ay.t)), (p01, (1.0 - ax.t) * ay.t), (p10, ax.t * (1.0 - ay.t)), (p11, ax.t * ay.t)] {
                        grad_in[plane + az.lo] += E::from_f64(wxy * (1.0 - az.t) * gv);
                        grad_in[plane + az.hi] += E::from_f64(wxy * az.t * gv);
                    }
                }
            }
        }
    }
    Tensor::from_vec(in_dims.to_vec(), grad_in)
}
