//! Central finite-difference gradient verification.
//!
//! The checker re-evaluates the scalar objective with one coordinate
//! perturbed at a time, so it is independent of the tape: any systematic
//! backward-pass error shows up as an order-unity relative error.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tape::GradMap;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct FdReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
}

/// Compare analytic gradients against central differences.
///
/// `params` are the function's free variables; `eval` recomputes the scalar
/// objective from perturbed parameters; `analytic` holds the gradients under
/// test (a missing entry is treated as all zeros). Relative error per
/// coordinate is `|analytic − fd| / max(|analytic|, |fd|, 1e-8)`; the report
/// carries the maximum. `sample = Some((count, seed))` restricts the check
/// to `count` randomly chosen coordinates.
pub fn finite_diff_check(
    params: &[(String, Tensor<f64>)],
    eval: &mut dyn FnMut(&[(String, Tensor<f64>)]) -> Result<f64>,
    analytic: &GradMap<f64>,
    step: f64,
    sample: Option<(usize, u64)>,
) -> Result<FdReport> {
    if step <= 0.0 {
        return Err(Error::parameter("finite difference step must be positive"));
    }
    let mut coords: Vec<(usize, usize)> = Vec::new();
    for (pi, (_, t)) in params.iter().enumerate() {
        for ci in 0..t.len() {
            coords.push((pi, ci));
        }
    }
    if let Some((count, seed)) = sample {
        if count < coords.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let picked = rand::seq::index::sample(&mut rng, coords.len(), count);
            coords = picked.into_iter().map(|i| coords[i]).collect();
        }
    }

    let mut work: Vec<(String, Tensor<f64>)> = params.to_vec();
    let mut max_rel_err = 0.0f64;
    for &(pi, ci) in &coords {
        let orig = work[pi].1.data()[ci];
        work[pi].1.data_mut()[ci] = orig + step;
        let f_plus = eval(&work)?;
        work[pi].1.data_mut()[ci] = orig - step;
        let f_minus = eval(&work)?;
        work[pi].1.data_mut()[ci] = orig;
        let fd = (f_plus - f_minus) / (2.0 * step);
        let a = analytic
            .get(&params[pi].0)
            .map(|g| g.data()[ci])
            .unwrap_or(0.0);
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
        if rel > max_rel_err {
            max_rel_err = rel;
        }
    }
    Ok(FdReport {
        max_rel_err,
        coords_checked: coords.len(),
    })
}
