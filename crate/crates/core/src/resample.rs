//! Natural cubic-spline resampling for 1-D signals and volumes.
//!
//! Knots sit at integer positions 0..n−1; boundary condition is the natural
//! spline (zero second derivative at both ends). Output samples are
//! endpoint-aligned: the first and last target positions coincide with the
//! first and last source samples, so same-size resampling is an identity.
//! Volume resampling applies the 1-D pass separably along Z, then Y, then X.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Resampling plan for one axis: the factorized tridiagonal solve (which
/// depends only on the source length) plus precomputed target positions.
pub struct SplineGrid {
    src_len: usize,
    dst_len: usize,
    /// Forward-elimination multipliers of the [1,4,1] natural-spline system.
    elim: Vec<f64>,
    /// Target sample positions in source coordinates.
    positions: Vec<f64>,
}

impl SplineGrid {
    pub fn new(src_len: usize, dst_len: usize) -> Result<Self> {
        if dst_len < 1 {
            return Err(Error::parameter("target length must be >= 1"));
        }
        if src_len < 1 {
            return Err(Error::parameter("source length must be >= 1"));
        }
        // Thomas forward sweep on the interior system
        //   m[i-1] + 4 m[i] + m[i+1] = rhs[i],  i = 1..n-2,  m[0]=m[n-1]=0.
        let interior = src_len.saturating_sub(2);
        let mut elim = Vec::with_capacity(interior);
        let mut diag_prev = 0.0f64;
        for i in 0..interior {
            let diag = if i == 0 { 4.0 } else { 4.0 - 1.0 / diag_prev };
            elim.push(diag);
            diag_prev = diag;
        }
        let positions = if dst_len == 1 {
            vec![(src_len as f64 - 1.0) / 2.0]
        } else {
            let scale = (src_len as f64 - 1.0) / (dst_len as f64 - 1.0);
            (0..dst_len).map(|j| j as f64 * scale).collect()
        };
        Ok(Self { src_len, dst_len, elim, positions })
    }

    /// Second derivatives at the knots for one row of samples.
    fn second_derivatives(&self, y: &[f64], m: &mut Vec<f64>) {
        let n = self.src_len;
        m.clear();
        m.resize(n, 0.0);
        if n < 3 {
            return;
        }
        // rhs[i] = 6 (y[i+1] - 2 y[i] + y[i-1]); solve in place via Thomas.
        let mut rhs: Vec<f64> = (1..n - 1)
            .map(|i| 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]))
            .collect();
        for i in 1..rhs.len() {
            let factor = 1.0 / self.elim[i - 1];
            rhs[i] -= factor * rhs[i - 1];
        }
        m[n - 2] = rhs[rhs.len() - 1] / self.elim[rhs.len() - 1];
        for i in (0..rhs.len() - 1).rev() {
            m[i + 1] = (rhs[i] - m[i + 2]) / self.elim[i];
        }
    }

    /// Resample one row. `src` must have `src_len` samples; `dst` is
    /// overwritten with `dst_len` samples.
    pub fn resample_row(&self, src: &[f64], dst: &mut [f64], scratch: &mut Vec<f64>) {
        debug_assert_eq!(src.len(), self.src_len);
        debug_assert_eq!(dst.len(), self.dst_len);
        if self.src_len == 1 {
            dst.fill(src[0]);
            return;
        }
        self.second_derivatives(src, scratch);
        let m = &scratch[..];
        let n = self.src_len;
        for (j, &t) in self.positions.iter().enumerate() {
            let i = (t.floor() as usize).min(n - 2);
            let u = t - i as f64;
            let a = 1.0 - u;
            let c = (a * a * a - a) / 6.0;
            let d = (u * u * u - u) / 6.0;
            dst[j] = a * src[i] + u * src[i + 1] + c * m[i] + d * m[i + 1];
        }
    }

    /// Residual of the tridiagonal system for a solved row; the solver keeps
    /// this below 1e-8 for well-scaled data.
    pub fn system_residual(&self, y: &[f64]) -> f64 {
        let n = self.src_len;
        if n < 3 {
            return 0.0;
        }
        let mut m = Vec::new();
        self.second_derivatives(y, &mut m);
        let mut worst = (m[0]).abs().max(m[n - 1].abs());
        for i in 1..n - 1 {
            let rhs = 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]);
            let lhs = m[i - 1] + 4.0 * m[i] + m[i + 1];
            worst = worst.max((lhs - rhs).abs());
        }
        worst
    }
}

/// Resample a 1-D signal to `target_len` samples.
pub fn spline_resample_1d<E: Element>(signal: &[E], target_len: usize) -> Result<Vec<E>> {
    let grid = SplineGrid::new(signal.len(), target_len)?;
    let src: Vec<f64> = signal.iter().map(|&v| v.to_f64()).collect();
    let mut dst = vec![0.0f64; target_len];
    let mut scratch = Vec::new();
    grid.resample_row(&src, &mut dst, &mut scratch);
    Ok(dst.into_iter().map(E::from_f64).collect())
}

/// Separable volume resampling: Z pass, then Y, then X.
pub fn spline_resample_volume<E: Element>(vol: &Tensor<E>, target: [usize; 3]) -> Result<Tensor<E>> {
    if vol.rank() != 3 {
        return Err(Error::shape(format!(
            "spline_resample_volume expects [X,Y,Z], got {:?}",
            vol.dims()
        )));
    }
    let src_dims = [vol.dims()[0], vol.dims()[1], vol.dims()[2]];
    let mut data: Vec<f64> = vol.data().iter().map(|&v| v.to_f64()).collect();
    let mut dims = src_dims;
    // axis order fixed: z (2), then y (1), then x (0)
    for axis in [2usize, 1, 0] {
        data = resample_axis(&data, dims, axis, target[axis])?;
        dims[axis] = target[axis];
    }
    Tensor::from_vec(
        target.to_vec(),
        data.into_iter().map(E::from_f64).collect(),
    )
}

fn resample_axis(data: &[f64], dims: [usize; 3], axis: usize, target: usize) -> Result<Vec<f64>> {
    let grid = SplineGrid::new(dims[axis], target)?;
    let mut out_dims = dims;
    out_dims[axis] = target;
    let mut out = vec![0.0f64; out_dims.iter().product()];
    let mut src_row = vec![0.0f64; dims[axis]];
    let mut dst_row = vec![0.0f64; target];
    let mut scratch = Vec::new();
    // iterate over all lines along `axis`
    let outer: [usize; 2] = match axis {
        0 => [dims[1], dims[2]],
        1 => [dims[0], dims[2]],
        _ => [dims[0], dims[1]],
    };
    for a in 0..outer[0] {
        for b in 0..outer[1] {
            for (k, v) in src_row.iter_mut().enumerate() {
                *v = data[line_offset(dims, axis, a, b, k)];
            }
            grid.resample_row(&src_row, &mut dst_row, &mut scratch);
            for (k, &v) in dst_row.iter().enumerate() {
                out[line_offset(out_dims, axis, a, b, k)] = v;
            }
        }
    }
    Ok(out)
}

#[inline]
fn line_offset(dims: [usize; 3], axis: usize, a: usize, b: usize, k: usize) -> usize {
    let (x, y, z) = match axis {
        0 => (k, a, b),
        1 => (a, k, b),
        _ => (a, b, k),
    };
    (x * dims[1] + y) * dims[2] + z
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_signal_reproduced_at_any_length() {
        let sig = [5.0f64; 4];
        for m in [1usize, 3, 4, 9] {
            let out = spline_resample_1d(&sig, m).unwrap();
            assert_eq!(out.len(), m);
            assert!(out.iter().all(|&v| (v - 5.0).abs() < 1e-12));
        }
    }

    #[test]
    fn linear_ramp_is_reproduced_exactly() {
        let sig = [0.0f64, 1.0, 2.0, 3.0];
        let out = spline_resample_1d(&sig, 7).unwrap();
        let expected = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
        for (got, want) in out.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn same_length_is_identity_at_knots() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sig = Tensor::<f64>::uniform(&[9], -3.0, 3.0, &mut rng);
        let out = spline_resample_1d(sig.data(), 9).unwrap();
        for (got, want) in out.iter().zip(sig.data()) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn length_one_signal_extends_constant() {
        let out = spline_resample_1d(&[2.5f64], 4).unwrap();
        assert_eq!(out, vec![2.5; 4]);
    }

    #[test]
    fn target_length_one_returns_midpoint_value() {
        // midpoint of linear data: exact mean of the ends
        let out = spline_resample_1d(&[1.0f64, 2.0, 3.0, 4.0], 1).unwrap();
        assert!((out[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn zero_target_is_parameter_error() {
        assert!(spline_resample_1d(&[1.0f64, 2.0], 0).is_err());
    }

    #[test]
    fn tridiagonal_residual_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sig = Tensor::<f64>::uniform(&[17], -5.0, 5.0, &mut rng);
        let grid = SplineGrid::new(17, 23).unwrap();
        assert!(grid.system_residual(sig.data()) < 1e-8);
    }

    #[test]
    fn volume_same_size_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let vol = Tensor::<f32>::uniform(&[8, 8, 8], -1.0, 1.0, &mut rng);
        let out = spline_resample_volume(&vol, [8, 8, 8]).unwrap();
        for (got, want) in out.data().iter().zip(vol.data()) {
            assert!((got - want).abs() < 1e-6);
        }
    }

    #[test]
    fn trilinear_polynomial_is_resampled_exactly() {
        // f(x,y,z) = 2x + 3y − z on a 5×6×4 grid, target 9×5×7
        let dims = [5usize, 6, 4];
        let mut vol = Tensor::<f64>::zeros(&dims);
        for x in 0..dims[0] {
            for y in 0..dims[1] {
                for z in 0..dims[2] {
                    vol.set(&[x, y, z], 2.0 * x as f64 + 3.0 * y as f64 - z as f64);
                }
            }
        }
        let target = [9usize, 5, 7];
        let out = spline_resample_volume(&vol, target).unwrap();
        for x in 0..target[0] {
            let fx = x as f64 * (dims[0] as f64 - 1.0) / (target[0] as f64 - 1.0);
            for y in 0..target[1] {
                let fy = y as f64 * (dims[1] as f64 - 1.0) / (target[1] as f64 - 1.0);
                for z in 0..target[2] {
                    let fz = z as f64 * (dims[2] as f64 - 1.0) / (target[2] as f64 - 1.0);
                    let want = 2.0 * fx + 3.0 * fy - fz;
                    let got = out.at(&[x, y, z]);
                    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn output_extents_match_request() {
        let vol = Tensor::<f32>::zeros(&[3, 4, 5]);
        let out = spline_resample_volume(&vol, [7, 2, 1]).unwrap();
        assert_eq!(out.dims(), &[7, 2, 1]);
    }

    #[test]
    fn axis_order_is_interchangeable_on_cubic_data() {
        // per-axis cubic polynomial; separable passes commute
        let dims = [6usize, 5, 7];
        let mut vol = Tensor::<f64>::zeros(&dims);
        for x in 0..dims[0] {
            for y in 0..dims[1] {
                for z in 0..dims[2] {
                    let (xf, yf, zf) = (x as f64, y as f64, z as f64);
                    let v = (xf.powi(3) - 2.0 * xf) * (yf * yf + 1.0) * (0.5 * zf.powi(3) + zf);
                    vol.set(&[x, y, z], v);
                }
            }
        }
        let target = [4usize, 9, 5];
        let fwd = spline_resample_volume(&vol, target).unwrap();
        // reversed axis order, composed through the public 1-D routine
        let mut data: Vec<f64> = vol.data().to_vec();
        let mut cur = dims;
        for axis in [0usize, 1, 2] {
            data = super::resample_axis(&data, cur, axis, target[axis]).unwrap();
            cur[axis] = target[axis];
        }
        for (a, b) in fwd.data().iter().zip(&data) {
            let denom = a.abs().max(1.0);
            assert!((a - b).abs() / denom < 1e-5, "{a} vs {b}");
        }
    }
}
