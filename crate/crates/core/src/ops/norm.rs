//! Layer normalization over the channel axis.
//!
//! Normalization reduces over the leading (channel) axis independently at
//! every spatial location, the ConvNeXt convention. Works for any rank >= 1;
//! a rank-1 input is a single location.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

fn check_affine<E: Element>(input: &Tensor<E>, gamma: &Tensor<E>, beta: &Tensor<E>) -> Result<(usize, usize)> {
    if input.rank() < 1 {
        return Err(Error::shape("layer_norm input must have a channel axis"));
    }
    let c = input.dims()[0];
    let spatial: usize = input.dims()[1..].iter().product::<usize>().max(1);
    if gamma.dims() != [c] || beta.dims() != [c] {
        return Err(Error::shape(format!(
            "layer_norm affine dims {:?}/{:?} do not match {c} channels",
            gamma.dims(),
            beta.dims()
        )));
    }
    Ok((c, spatial))
}

/// `gamma·(x − mean_C)/sqrt(var_C + eps) + beta` at every spatial location.
/// Variance is the population variance (divide by C).
pub fn layer_norm<E: Element>(
    input: &Tensor<E>,
    gamma: &Tensor<E>,
    beta: &Tensor<E>,
    eps: E,
) -> Result<Tensor<E>> {
    let (c, spatial) = check_affine(input, gamma, beta)?;
    let x = input.data();
    let g = gamma.data();
    let b = beta.data();
    let mut out = vec![E::zero(); x.len()];
    let inv_c = E::one() / E::from_f64(c as f64);
    for v in 0..spatial {
        let mut mean = E::zero();
        for ch in 0..c {
            mean += x[ch * spatial + v];
        }
        mean *= inv_c;
        let mut var = E::zero();
        for ch in 0..c {
            let d = x[ch * spatial + v] - mean;
            var += d * d;
        }
        var *= inv_c;
        let inv_std = E::one() / (var + eps).sqrt();
        for ch in 0..c {
            let xhat = (x[ch * spatial + v] - mean) * inv_std;
            out[ch * spatial + v] = g[ch] * xhat + b[ch];
        }
    }
    Tensor::from_vec(input.dims().to_vec(), out)
}

/// Gradients of [`layer_norm`] with respect to input, gamma and beta.
pub fn layer_norm_backward<E: Element>(
    input: &Tensor<E>,
    gamma: &Tensor<E>,
    eps: E,
    grad_out: &Tensor<E>,
) -> Result<(Tensor<E>, Tensor<E>, Tensor<E>)> {
    let c = input.dims()[0];
    let spatial: usize = input.dims()[1..].iter().product::<usize>().max(1);
    if grad_out.dims() != input.dims() {
        return Err(Error::shape("layer_norm grad dims mismatch"));
    }
    let x = input.data();
    let g = gamma.data();
    let go = grad_out.data();
    let mut grad_x = vec![E::zero(); x.len()];
    let mut grad_gamma = vec![E::zero(); c];
    let mut grad_beta = vec![E::zero(); c];
    let inv_c = E::one() / E::from_f64(c as f64);
    for v in 0..spatial {
        let mut mean = E::zero();
        for ch in 0..c {
            mean += x[ch * spatial + v];
        }
        mean *= inv_c;
        let mut var = E::zero();
        for ch in 0..c {
            let d = x[ch * spatial + v] - mean;
            var += d * d;
        }
        var *= inv_c;
        let inv_std = E::one() / (var + eps).sqrt();
        // q = grad_out ⊙ gamma; dx = (q − mean(q) − xhat·mean(q ⊙ xhat))/std
        let mut q_mean = E::zero();
        let mut qx_mean = E::zero();
        for ch in 0..c {
            let xhat = (x[ch * spatial + v] - mean) * inv_std;
            let q = go[ch * spatial + v] * g[ch];
            q_mean += q;
            qx_mean += q * xhat;
            grad_gamma[ch] += go[ch * spatial + v] * xhat;
            grad_beta[ch] += go[ch * spatial + v];
        }
        q_mean *= inv_c;
        qx_mean *= inv_c;
        for ch in 0..c {
            let xhat = (x[ch * spatial + v] - mean) * inv_std;
            let q = go[ch * spatial + v] * g[ch];
            grad_x[ch * spatial + v] = (q - q_mean - xhat * qx_mean) * inv_std;
        }
    }
    Ok((
        Tensor::from_vec(input.dims().to_vec(), grad_x)?,
        Tensor::from_vec(vec![c], grad_gamma)?,
        Tensor::from_vec(vec![c], grad_beta)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_normalizes_to_beta() {
        let input = Tensor::<f64>::full(&[3, 2, 2, 2], 4.2);
        let gamma = Tensor::full(&[3], 1.0);
        let beta = Tensor::zeros(&[3]);
        let out = layer_norm(&input, &gamma, &beta, 1e-6).unwrap();
        assert!(out.data().iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn two_channel_location_normalizes_to_unit() {
        // channels [1, 3]: mean 2, population std 1
        let input = Tensor::<f64>::from_vec(vec![2], vec![1.0, 3.0]).unwrap();
        let gamma = Tensor::full(&[2], 1.0);
        let beta = Tensor::zeros(&[2]);
        let out = layer_norm(&input, &gamma, &beta, 1e-12).unwrap();
        assert!((out.data()[0] + 1.0).abs() < 1e-6);
        assert!((out.data()[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn per_location_moments_are_normalized() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let input = Tensor::<f64>::uniform(&[5, 3, 3, 3], -2.0, 2.0, &mut rng);
        let gamma = Tensor::full(&[5], 1.0);
        let beta = Tensor::zeros(&[5]);
        let out = layer_norm(&input, &gamma, &beta, 1e-10).unwrap();
        let spatial = 27;
        for v in 0..spatial {
            let vals: Vec<f64> = (0..5).map(|c| out.data()[c * spatial + v]).collect();
            let mean: f64 = vals.iter().sum::<f64>() / 5.0;
            let var: f64 = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
            assert!(mean.abs() < 1e-4, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "var {var}");
        }
    }

    #[test]
    fn affine_length_mismatch_is_shape_error() {
        let input = Tensor::<f64>::zeros(&[3, 2]);
        let gamma = Tensor::full(&[2], 1.0);
        let beta = Tensor::zeros(&[3]);
        assert!(layer_norm(&input, &gamma, &beta, 1e-6).is_err());
    }
}
