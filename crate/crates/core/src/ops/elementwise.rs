//! Elementwise activations and the stabilized softmax.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.3989422804014327;

/// Standard normal CDF via the exact erf form.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

/// `x · Φ(x)` elementwise, with Φ the standard normal CDF.
pub fn gelu<E: Element>(input: &Tensor<E>) -> Tensor<E> {
    input.map(|x| {
        let xf = x.to_f64();
        E::from_f64(xf * normal_cdf(xf))
    })
}

/// Gradient of [`gelu`]: `Φ(x) + x·φ(x)`.
pub fn gelu_backward<E: Element>(input: &Tensor<E>, grad_out: &Tensor<E>) -> Result<Tensor<E>> {
    if input.dims() != grad_out.dims() {
        return Err(Error::shape("gelu grad dims mismatch"));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| {
            let xf = x.to_f64();
            let pdf = INV_SQRT_2PI * (-0.5 * xf * xf).exp();
            E::from_f64((normal_cdf(xf) + xf * pdf) * g.to_f64())
        })
        .collect();
    Tensor::from_vec(input.dims().to_vec(), data)
}

/// Max-subtracted softmax over a rank-1 tensor.
pub fn softmax<E: Element>(input: &Tensor<E>) -> Result<Tensor<E>> {
    if input.rank() != 1 {
        return Err(Error::shape(format!(
            "softmax expects a rank-1 tensor, got {:?}",
            input.dims()
        )));
    }
    Ok(softmax_slice(input.data(), input.dims()[0]))
}

fn softmax_slice<E: Element>(x: &[E], k: usize) -> Tensor<E> {
    let max = x.iter().copied().fold(E::neg_infinity(), E::max);
    let mut out: Vec<E> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum = out.iter().fold(E::zero(), |a, &b| a + b);
    for v in out.iter_mut() {
        *v /= sum;
    }
    Tensor::from_vec(vec![k], out).expect("softmax preserves length")
}

/// Gradient of [`softmax`]: `s ⊙ (g − ⟨g, s⟩)`.
pub fn softmax_backward<E: Element>(output: &Tensor<E>, grad_out: &Tensor<E>) -> Result<Tensor<E>> {
    if output.dims() != grad_out.dims() {
        return Err(Error::shape("softmax grad dims mismatch"));
    }
    let s = output.data();
    let g = grad_out.data();
    let dot = s
        .iter()
        .zip(g)
        .fold(E::zero(), |acc, (&si, &gi)| acc + si * gi);
    let data = s.iter().zip(g).map(|(&si, &gi)| si * (gi - dot)).collect();
    Tensor::from_vec(output.dims().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_at_zero_is_zero() {
        let t = Tensor::<f64>::scalar(0.0);
        assert_eq!(gelu(&t).data()[0], 0.0);
    }

    #[test]
    fn gelu_saturates_to_identity() {
        let t = Tensor::<f64>::scalar(10.0);
        assert!((gelu(&t).data()[0] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn gelu_at_one_matches_erf_oracle() {
        // x·Φ(x) at x = 1 evaluated in double precision: 0.8413447460685429
        let t = Tensor::<f64>::scalar(1.0);
        assert!((gelu(&t).data()[0] - 0.841_344_746_068_542_9).abs() < 1e-12);
    }

    #[test]
    fn softmax_uniform_on_equal_inputs() {
        let t = Tensor::<f32>::zeros(&[4]);
        let s = softmax(&t).unwrap();
        for &v in s.data() {
            assert!((v - 0.25).abs() < 1e-7);
        }
    }

    #[test]
    fn softmax_shift_invariant_and_normalized() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let t = Tensor::<f64>::uniform(&[6], -3.0, 3.0, &mut rng);
            let shifted = t.map(|x| x + 17.25);
            let a = softmax(&t).unwrap();
            let b = softmax(&shifted).unwrap();
            let sum: f64 = a.data().iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn softmax_is_stable_for_large_inputs() {
        let t = Tensor::<f32>::from_vec(vec![2], vec![1000.0, 0.0]).unwrap();
        let s = softmax(&t).unwrap();
        assert!(s.all_finite());
        assert!((s.data()[0] - 1.0).abs() < 1e-6);
        assert!(s.data()[1].abs() < 1e-6);
    }
}
