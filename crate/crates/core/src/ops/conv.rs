//! Dense 3D cross-correlation, full and depthwise, with reverse-mode
//! gradients.
//!
//! Layouts: input `[C_in, X, Y, Z]`, weights `[C_in, C_out, H, W, D]`
//! (depthwise: `[C, 1, H, W, D]`), output `[C_out, X', Y', Z']`. Kernels are
//! applied without flipping. Summation order per output voxel is fixed
//! (input channel, then kernel h, w, d), so results are deterministic.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// `floor((n + 2·pad − k)/stride) + 1`; errors when no placement fits.
pub fn conv_output_extent(n: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::parameter("stride must be positive"));
    }
    let span = n + 2 * pad;
    if span < k {
        return Err(Error::shape(format!(
            "kernel extent {k} exceeds padded input extent {span}"
        )));
    }
    Ok((span - k) / stride + 1)
}

struct Geometry {
    ci: usize,
    co: usize,
    in_sp: [usize; 3],
    k: [usize; 3],
    out_sp: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
}

fn geometry<E: Element>(
    input: &Tensor<E>,
    weights: &Tensor<E>,
    stride: [usize; 3],
    pad: [usize; 3],
    depthwise: bool,
) -> Result<Geometry> {
    if input.rank() != 4 {
        return Err(Error::shape(format!(
            "conv input must be rank 4 [C,X,Y,Z], got {:?}",
            input.dims()
        )));
    }
    if weights.rank() != 5 {
        return Err(Error::shape(format!(
            "conv weights must be rank 5 [I,O,H,W,D], got {:?}",
            weights.dims()
        )));
    }
    let ci = input.dims()[0];
    if weights.dims()[0] != ci {
        return Err(Error::shape(format!(
            "input channels {} do not match kernel input channels {}",
            ci,
            weights.dims()[0]
        )));
    }
    if depthwise && weights.dims()[1] != 1 {
        return Err(Error::shape(format!(
            "depthwise kernel must have one output per channel, got {:?}",
            weights.dims()
        )));
    }
    let in_sp = [input.dims()[1], input.dims()[2], input.dims()[3]];
    let k = [weights.dims()[2], weights.dims()[3], weights.dims()[4]];
    let mut out_sp = [0usize; 3];
    for a in 0..3 {
        out_sp[a] = conv_output_extent(in_sp[a], k[a], stride[a], pad[a])?;
    }
    Ok(Geometry {
        ci,
        co: if depthwise { ci } else { weights.dims()[1] },
        in_sp,
        k,
        out_sp,
        stride,
        pad,
    })
}

/// Accumulate one (input-channel, output-channel) plane pair.
#[allow(clippy::too_many_arguments)]
fn accumulate_plane<E: Element>(
    input: &[E],
    weights: &[E],
    out: &mut [E],
    g: &Geometry,
    in_base: usize,
    wt_base: usize,
    out_base: usize,
) {
    let [xi, yi, zi] = g.in_sp;
    let [kh, kw, kd] = g.k;
    let [xo, yo, zo] = g.out_sp;
    let [sx, sy, sz] = g.stride;
    let [px, py, pz] = g.pad;
    for h in 0..kh {
        for w in 0..kw {
            let wt_row = &weights[wt_base + (h * kw + w) * kd..][..kd];
            for ox in 0..xo {
                let ix = (ox * sx + h) as isize - px as isize;
                if ix < 0 || ix >= xi as isize {
                    continue;
                }
                for oy in 0..yo {
                    let iy = (oy * sy + w) as isize - py as isize;
                    if iy < 0 || iy >= yi as isize {
                        continue;
                    }
                    let in_row =
                        &input[in_base + ((ix as usize) * yi + iy as usize) * zi..][..zi];
                    let out_row = &mut out[out_base + (ox * yo + oy) * zo..][..zo];
                    for (oz, out_val) in out_row.iter_mut().enumerate() {
                        let iz0 = (oz * sz) as isize - pz as isize;
                        let dlo = (-iz0).max(0) as usize;
                        let dhi = kd.min((zi as isize - iz0).max(0) as usize);
                        let mut acc = E::zero();
                        for d in dlo..dhi {
                            acc += in_row[(iz0 + d as isize) as usize] * wt_row[d];
                        }
                        *out_val += acc;
                    }
                }
            }
        }
    }
}

/// Dense 3D cross-correlation over all input channels.
pub fn conv3d<E: Element>(
    input: &Tensor<E>,
    weights: &Tensor<E>,
    stride: [usize; 3],
    pad: [usize; 3],
) -> Result<Tensor<E>> {
    let g = geometry(input, weights, stride, pad, false)?;
    let [xo, yo, zo] = g.out_sp;
    let mut out = vec![E::zero(); g.co * xo * yo * zo];
    let in_data = input.data();
    let wt = weights.data();
    let in_plane = g.in_sp[0] * g.in_sp[1] * g.in_sp[2];
    let k_vol = g.k[0] * g.k[1] * g.k[2];
    let out_plane = xo * yo * zo;
    for o in 0..g.co {
        for i in 0..g.ci {
            accumulate_plane(
                in_data,
                wt,
                &mut out,
                &g,
                i * in_plane,
                (i * g.co + o) * k_vol,
                o * out_plane,
            );
        }
    }
    Tensor::from_vec(vec![g.co, xo, yo, zo], out)
}

/// Per-channel 3D cross-correlation: channel `c` is convolved only with its
/// own kernel `weights[c, 0, ..]`.
pub fn depthwise_conv3d<E: Element>(
    input: &Tensor<E>,
    weights: &Tensor<E>,
    stride: [usize; 3],
    pad: [usize; 3],
) -> Result<Tensor<E>> {
    let g = geometry(input, weights, stride, pad, true)?;
    let [xo, yo, zo] = g.out_sp;
    let mut out = vec![E::zero(); g.ci * xo * yo * zo];
    let in_data = input.data();
    let wt = weights.data();
    let in_plane = g.in_sp[0] * g.in_sp[1] * g.in_sp[2];
    let k_vol = g.k[0] * g.k[1] * g.k[2];
    let out_plane = xo * yo * zo;
    for c in 0..g.ci {
        accumulate_plane(
            in_data,
            wt,
            &mut out,
            &g,
            c * in_plane,
            c * k_vol,
            c * out_plane,
        );
    }
    Tensor::from_vec(vec![g.ci, xo, yo, zo], out)
}

/// Gradient of one (input-channel, output-channel) plane pair: scatters into
/// `grad_in` and accumulates into `grad_wt`.
#[allow(clippy::too_many_arguments)]
fn backward_plane<E: Element>(
    input: &[E],
    weights: &[E],
    grad_out: &[E],
    grad_in: &mut [E],
    grad_wt: &mut [E],
    g: &Geometry,
    in_base: usize,
    wt_base: usize,
    out_base: usize,
) {
    let [xi, yi, zi] = g.in_sp;
    let [kh, kw, kd] = g.k;
    let [xo, yo, zo] = g.out_sp;
    let [sx, sy, sz] = g.stride;
    let [px, py, pz] = g.pad;
    for h in 0..kh {
        for w in 0..kw {
            let wt_row = &weights[wt_base + (h * kw + w) * kd..][..kd];
            let gw_row_base = wt_base + (h * kw + w) * kd;
            for ox in 0..xo {
                let ix = (ox * sx + h) as isize - px as isize;
                if ix < 0 || ix >= xi as isize {
                    continue;
                }
                for oy in 0..yo {
                    let iy = (oy * sy + w) as isize - py as isize;
                    if iy < 0 || iy >= yi as isize {
                        continue;
                    }
                    let row0 = in_base + ((ix as usize) * yi + iy as usize) * zi;
                    let go_row = &grad_out[out_base + (ox * yo + oy) * zo..][..zo];
                    for (oz, &go) in go_row.iter().enumerate() {
                        let iz0 = (oz * sz) as isize - pz as isize;
                        let dlo = (-iz0).max(0) as usize;
                        let dhi = kd.min((zi as isize - iz0).max(0) as usize);
                        for d in dlo..dhi {
                            let iz = (iz0 + d as isize) as usize;
                            grad_in[row0 + iz] += wt_row[d] * go;
                            grad_wt[gw_row_base + d] += input[row0 + iz] * go;
                        }
                    }
                }
            }
        }
    }
}

/// Gradients of `conv3d` with respect to input and weights.
pub fn conv3d_backward<E: Element>(
    input: &Tensor<E>,
    weights: &Tensor<E>,
    stride: [usize; 3],
    pad: [usize; 3],
    grad_out: &Tensor<E>,
) -> Result<(Tensor<E>, Tensor<E>)> {
    let g = geometry(input, weights, stride, pad, false)?;
    let [xo, yo, zo] = g.out_sp;
    if grad_out.dims() != [g.co, xo, yo, zo] {
        return Err(Error::shape(format!(
            "grad_out dims {:?} do not match conv output [{}, {xo}, {yo}, {zo}]",
            grad_out.dims(),
            g.co
        )));
    }
    let mut grad_in = vec![E::zero(); input.len()];
    let mut grad_wt = vec![E::zero(); weights.len()];
    let in_plane = g.in_sp[0] * g.in_sp[1] * g.in_sp[2];
    let k_vol = g.k[0] * g.k[1] * g.k[2];
    let out_plane = xo * yo * zo;
    for o in 0..g.co {
        for i in 0..g.ci {
            backward_plane(
                input.data(),
                weights.data(),
                grad_out.data(),
                &mut grad_in,
                &mut grad_wt,
                &g,
                i * in_plane,
                (i * g.co + o) * k_vol,
                o * out_plane,
            );
        }
    }
    Ok((
        Tensor::from_vec(input.dims().to_vec(), grad_in)?,
        Tensor::from_vec(weights.dims().to_vec(), grad_wt)?,
    ))
}

/// Gradients of `depthwise_conv3d` with respect to input and weights.
pub fn depthwise_conv3d_backward<E: Element>(
    input: &Tensor<E>,
    weights: &Tensor<E>,
    stride: [usize; 3],
    pad: [usize; 3],
    grad_out: &Tensor<E>,
) -> Result<(Tensor<E>, Tensor<E>)> {
    let g = geometry(input, weights, stride, pad, true)?;
    let [xo, yo, zo] = g.out_sp;
    if grad_out.dims() != [g.ci, xo, yo, zo] {
        return Err(Error::shape(format!(
            "grad_out dims {:?} do not match depthwise output [{}, {xo}, {yo}, {zo}]",
            grad_out.dims(),
            g.ci
        )));
    }
    let mut grad_in = vec![E::zero(); input.len()];
    let mut grad_wt = vec![E::zero(); weights.len()];
    let in_plane = g.in_sp[0] * g.in_sp[1] * g.in_sp[2];
    let k_vol = g.k[0] * g.k[1] * g.k[2];
    let out_plane = xo * yo * zo;
    for c in 0..g.ci {
        backward_plane(
            input.data(),
            weights.data(),
            grad_out.data(),
            &mut grad_in,
            &mut grad_wt,
            &g,
            c * in_plane,
            c * k_vol,
            c * out_plane,
        );
    }
    Ok((
        Tensor::from_vec(input.dims().to_vec(), grad_in)?,
        Tensor::from_vec(weights.dims().to_vec(), grad_wt)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(dims: &[usize]) -> Tensor<f32> {
        Tensor::full(dims, 1.0)
    }

    #[test]
    fn identity_kernel_preserves_input() {
        let input = ones(&[1, 3, 3, 3]);
        let kernel = Tensor::from_vec(vec![1, 1, 1, 1, 1], vec![1.0]).unwrap();
        let out = conv3d(&input, &kernel, [1; 3], [0; 3]).unwrap();
        assert_eq!(out.dims(), &[1, 3, 3, 3]);
        assert!(out.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn all_ones_kernel_sums_window() {
        let input = ones(&[1, 3, 3, 3]);
        let kernel = ones(&[1, 1, 3, 3, 3]);
        let out = conv3d(&input, &kernel, [1; 3], [0; 3]).unwrap();
        assert_eq!(out.dims(), &[1, 1, 1, 1]);
        assert_eq!(out.data()[0], 27.0);
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let input = ones(&[2, 3, 3, 3]);
        let kernel = ones(&[3, 1, 1, 1, 1]);
        assert!(matches!(
            conv3d(&input, &kernel, [1; 3], [0; 3]),
            Err(crate::error::Error::Shape(_))
        ));
    }

    #[test]
    fn kernel_larger_than_padded_input_is_error() {
        let input = ones(&[1, 2, 2, 2]);
        let kernel = ones(&[1, 1, 5, 5, 5]);
        assert!(conv3d(&input, &kernel, [1; 3], [1; 3]).is_err());
    }

    #[test]
    fn depthwise_scalar_kernels_scale_channels() {
        let mut input = Tensor::<f32>::zeros(&[2, 2, 2, 2]);
        for i in 0..8 {
            input.data_mut()[i] = 1.0;
            input.data_mut()[8 + i] = 10.0;
        }
        let kernel = Tensor::from_vec(vec![2, 1, 1, 1, 1], vec![2.0, 3.0]).unwrap();
        let out = depthwise_conv3d(&input, &kernel, [1; 3], [0; 3]).unwrap();
        assert!(out.data()[..8].iter().all(|&v| v == 2.0));
        assert!(out.data()[8..].iter().all(|&v| v == 30.0));
    }

    #[test]
    fn depthwise_identity_kernels_preserve_input() {
        let mut rng_state = 12345u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng_state >> 33) as f32 / (1u64 << 31) as f32
        };
        let data: Vec<f32> = (0..2 * 64).map(|_| next()).collect();
        let input = Tensor::from_vec(vec![2, 4, 4, 4], data).unwrap();
        let mut kernel = Tensor::<f32>::zeros(&[2, 1, 3, 3, 3]);
        for c in 0..2 {
            kernel.set(&[c, 0, 1, 1, 1], 1.0);
        }
        let out = depthwise_conv3d(&input, &kernel, [1; 3], [1; 3]).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn depthwise_channel_mismatch_is_shape_error() {
        let input = ones(&[2, 3, 3, 3]);
        let kernel = ones(&[3, 1, 1, 1, 1]);
        assert!(depthwise_conv3d(&input, &kernel, [1; 3], [0; 3]).is_err());
    }

    // Depthwise with one channel must agree bitwise with full conv (64-bit).
    #[test]
    fn depthwise_single_channel_matches_conv3d_bitwise() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let input = Tensor::<f64>::uniform(&[1, 5, 5, 5], -1.0, 1.0, &mut rng);
        let kernel = Tensor::<f64>::uniform(&[1, 1, 3, 3, 3], -1.0, 1.0, &mut rng);
        let pad = [rng.gen_range(0..2); 3];
        let a = conv3d(&input, &kernel, [1; 3], pad).unwrap();
        let b = depthwise_conv3d(&input, &kernel, [1; 3], pad).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn strided_output_extent_follows_formula() {
        let input = ones(&[1, 7, 7, 7]);
        let kernel = ones(&[1, 2, 3, 3, 3]);
        let out = conv3d(&input, &kernel, [2; 3], [1; 3]).unwrap();
        // floor((7 + 2 - 3)/2) + 1 = 4
        assert_eq!(out.dims(), &[2, 4, 4, 4]);
    }
}
