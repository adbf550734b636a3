//! 2D-to-3D convolution kernel inflation.
//!
//! A 2D kernel `[I, O, H, W]` grows a trailing depth axis of extent `D`
//! under one of three schemes: plain replication, replication shaped by a
//! Gaussian depth profile, or the sum of a depth-axis and a width-axis
//! Gaussian weighting. Every scheme rescales the result so its L2 norm
//! equals the 2D kernel's norm.
//!
//! Conventions (kept as printed in the defining equations): depth and width
//! indices are 0-based, the Gaussian is the unnormalized `exp` form with
//! mean `D/2` and deviation `D/8` (`W/2`, `W/8` for the width term), so for
//! odd extents the peak sits half a step past the middle index.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Inflation scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InflationMode {
    /// Copy the 2D weights along the depth axis.
    Full,
    /// Weight the copies by a Gaussian over the depth index.
    OneG,
    /// Sum of Gaussian weightings over the depth and width indices.
    TwoG,
}

impl fmt::Display for InflationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            InflationMode::Full => "full",
            InflationMode::OneG => "1g",
            InflationMode::TwoG => "2g",
        };
        f.write_str(s)
    }
}

impl FromStr for InflationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(InflationMode::Full),
            "1g" => Ok(InflationMode::OneG),
            "2g" => Ok(InflationMode::TwoG),
            other => Err(Error::parameter(format!(
                "unknown inflation mode `{other}` (expected full|1g|2g)"
            ))),
        }
    }
}

/// Mode plus target depth for one inflation.
#[derive(Debug, Clone, Copy)]
pub struct InflationSpec {
    pub mode: InflationMode,
    pub target_depth: usize,
}

impl InflationSpec {
    pub fn new(mode: InflationMode, target_depth: usize) -> Result<Self> {
        if target_depth == 0 {
            return Err(Error::parameter("inflation target depth must be >= 1"));
        }
        Ok(Self { mode, target_depth })
    }
}

/// Unnormalized Gaussian weight `exp(−(x−mu)²/(2σ²))`.
pub fn gaussian_weight(x: f64, mu: f64, sigma: f64) -> Result<f64> {
    if sigma <= 0.0 {
        return Err(Error::parameter(format!(
            "gaussian sigma must be positive, got {sigma}"
        )));
    }
    let z = (x - mu) / sigma;
    Ok((-0.5 * z * z).exp())
}

/// Result of the norm-matching rescale.
#[derive(Debug, Clone, Copy)]
pub struct GammaResult {
    pub gamma: f64,
    /// Set when the pre-normalization tensor has zero norm (all-zero
    /// kernel); gamma is then 1 instead of a division by zero.
    pub zero_kernel: bool,
}

/// `γ = ‖reference‖₂ / ‖pre_norm‖₂`, with γ = 1 flagged for all-zero input.
pub fn compute_gamma<E: Element>(pre_norm: &Tensor<E>, reference: &Tensor<E>) -> GammaResult {
    let pre = pre_norm.l2_norm();
    if pre == 0.0 {
        return GammaResult { gamma: 1.0, zero_kernel: true };
    }
    GammaResult { gamma: reference.l2_norm() / pre, zero_kernel: false }
}

fn check_kernel2d<E: Element>(k: &Tensor<E>) -> Result<[usize; 4]> {
    if k.rank() != 4 {
        return Err(Error::shape(format!(
            "2D kernel must be rank 4 [I,O,H,W], got {:?}",
            k.dims()
        )));
    }
    Ok([k.dims()[0], k.dims()[1], k.dims()[2], k.dims()[3]])
}

/// Gaussian depth profile `N(d, D/2, D/8)` for d in 0..D.
fn depth_profile(d_extent: usize) -> Vec<f64> {
    let mu = d_extent as f64 / 2.0;
    let sigma = d_extent as f64 / 8.0;
    (0..d_extent)
        .map(|d| gaussian_weight(d as f64, mu, sigma).expect("sigma > 0"))
        .collect()
}

/// Normalize a depth profile so the replicated kernel keeps its L2 norm.
/// For a profile `s` applied uniformly over all 2D entries,
/// ‖K†‖² = Σ_d s_d² · ‖K‖², so dividing by sqrt(Σ s_d²) is exactly the
/// global γ rescale. A single-slice profile reduces to [1], making D = 1 an
/// exact identity.
fn normalize_profile(mut profile: Vec<f64>) -> Vec<f64> {
    if profile.len() == 1 {
        profile[0] = 1.0;
        return profile;
    }
    let norm = profile.iter().map(|g| g * g).sum::<f64>().sqrt();
    for g in profile.iter_mut() {
        *g /= norm;
    }
    profile
}

fn replicate_with_profile<E: Element>(k2: &Tensor<E>, profile: &[f64]) -> Result<Tensor<E>> {
    let [i, o, h, w] = check_kernel2d(k2)?;
    let d = profile.len();
    let src = k2.data();
    let mut out = Vec::with_capacity(src.len() * d);
    for &v in src {
        for &s in profile {
            out.push(E::from_f64(v.to_f64() * s));
        }
    }
    Tensor::from_vec(vec![i, o, h, w, d], out)
}

/// Copy the 2D weights along the new depth axis, rescaled by γ = 1/√D.
pub fn inflate_full<E: Element>(k2: &Tensor<E>, d: usize) -> Result<Tensor<E>> {
    if d == 0 {
        return Err(Error::parameter("inflation depth must be >= 1"));
    }
    let profile = normalize_profile(vec![1.0; d]);
    // Compute each scaled entry once and replicate it, so depth slices are
    // identical bitwise.
    replicate_with_profile(k2, &profile)
}

/// Gaussian-weighted copies along the depth axis, globally rescaled back to
/// the 2D kernel's norm.
pub fn inflate_1g<E: Element>(k2: &Tensor<E>, d: usize) -> Result<Tensor<E>> {
    if d == 0 {
        return Err(Error::parameter("inflation depth must be >= 1"));
    }
    let profile = normalize_profile(depth_profile(d));
    replicate_with_profile(k2, &profile)
}

/// Sum of a depth-axis and a width-axis Gaussian weighting. The width term
/// couples the profile to the kernel's own w index, so γ here is computed
/// from the realized pre-normalization tensor.
pub fn inflate_2g<E: Element>(k2: &Tensor<E>, d_extent: usize) -> Result<Tensor<E>> {
    if d_extent == 0 {
        return Err(Error::parameter("inflation depth must be >= 1"));
    }
    let [i, o, h, w_extent] = check_kernel2d(k2)?;
    let depth = depth_profile(d_extent);
    let width: Vec<f64> = {
        let mu = w_extent as f64 / 2.0;
        let sigma = w_extent as f64 / 8.0;
        (0..w_extent)
            .map(|w| gaussian_weight(w as f64, mu, sigma).expect("sigma > 0"))
            .collect()
    };
    let src = k2.data();
    let mut pre = Vec::with_capacity(src.len() * d_extent);
    for (flat, &v) in src.iter().enumerate() {
        let w = flat % w_extent;
        for g in &depth {
            pre.push(E::from_f64(v.to_f64() * (g + width[w])));
        }
    }
    let pre = Tensor::from_vec(vec![i, o, h, w_extent, d_extent], pre)?;
    let gamma = compute_gamma(&pre, k2);
    Ok(pre.map(|x| E::from_f64(x.to_f64() * gamma.gamma)))
}

/// Dispatch over the three schemes.
pub fn inflate<E: Element>(k2: &Tensor<E>, spec: InflationSpec) -> Result<Tensor<E>> {
    match spec.mode {
        InflationMode::Full => inflate_full(k2, spec.target_depth),
        InflationMode::OneG => inflate_1g(k2, spec.target_depth),
        InflationMode::TwoG => inflate_2g(k2, spec.target_depth),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_kernel(v: f64) -> Tensor<f64> {
        Tensor::from_vec(vec![1, 1, 1, 1], vec![v]).unwrap()
    }

    #[test]
    fn gaussian_peak_is_one() {
        assert_eq!(gaussian_weight(2.5, 2.5, 0.7).unwrap(), 1.0);
    }

    #[test]
    fn gaussian_one_sigma_out() {
        let v = gaussian_weight(3.2, 2.5, 0.7).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-12);
        assert!((v - 0.606531).abs() < 1e-6);
    }

    #[test]
    fn gaussian_frozen_value() {
        // exp(−8) evaluated in double precision
        let v = gaussian_weight(0.0, 1.0, 0.25).unwrap();
        assert!((v - 3.354_626_279_025_118_5e-4).abs() < 1e-16);
    }

    #[test]
    fn gaussian_rejects_nonpositive_sigma() {
        assert!(gaussian_weight(0.0, 0.0, 0.0).is_err());
        assert!(gaussian_weight(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn full_scalar_depth3_is_inv_sqrt3() {
        let k3 = inflate_full(&scalar_kernel(1.0), 3).unwrap();
        for &v in k3.data() {
            assert!((v - 1.0 / 3.0f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn full_depth1_is_exact_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = Tensor::<f64>::uniform(&[2, 3, 3, 3], -1.0, 1.0, &mut rng);
        let k3 = inflate_full(&k, 1).unwrap();
        assert_eq!(k3.data(), k.data());
        let k1g = inflate_1g(&k, 1).unwrap();
        assert_eq!(k1g.data(), k.data());
    }

    #[test]
    fn full_depth_slices_are_identical_and_norm_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = Tensor::<f64>::uniform(&[2, 2, 3, 3], -1.0, 1.0, &mut rng);
        let k3 = inflate_full(&k, 5).unwrap();
        for base in 0..k.len() {
            let first = k3.data()[base * 5];
            for d in 1..5 {
                assert_eq!(k3.data()[base * 5 + d], first);
            }
        }
        assert!((k3.l2_norm() - k.l2_norm()).abs() < 1e-6);
    }

    #[test]
    fn one_g_scalar_depth2_matches_direct_evaluation() {
        // Pre-normalization profile (exp(−8), 1); after the global rescale
        // the entries are exp(−8)/sqrt(1+exp(−16)) and 1/sqrt(1+exp(−16)).
        let k3 = inflate_1g(&scalar_kernel(1.0), 2).unwrap();
        let g0 = (-8.0f64).exp();
        let norm = (1.0 + g0 * g0).sqrt();
        assert!((k3.data()[0] - g0 / norm).abs() < 1e-15);
        assert!((k3.data()[1] - 1.0 / norm).abs() < 1e-15);
        assert!((k3.data()[0] - 3.354_626e-4).abs() < 1e-9);
        assert!((k3.data()[1] - 0.999_999_94).abs() < 1e-7);
    }

    #[test]
    fn one_g_profile_ratio_matches_gaussian_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = Tensor::<f64>::uniform(&[2, 2, 3, 3], 0.1, 1.0, &mut rng);
        for d_extent in [2usize, 4, 7] {
            let k3 = inflate_1g(&k, d_extent).unwrap();
            let mu = d_extent as f64 / 2.0;
            let sigma = d_extent as f64 / 8.0;
            for base in 0..k.len() {
                for d in 1..d_extent {
                    let got = k3.data()[base * d_extent + d] / k3.data()[base * d_extent];
                    let want = gaussian_weight(d as f64, mu, sigma).unwrap()
                        / gaussian_weight(0.0, mu, sigma).unwrap();
                    assert!((got - want).abs() < 1e-9, "d={d} got {got} want {want}");
                }
            }
        }
    }

    #[test]
    fn one_g_argmax_is_nearest_to_half_depth() {
        let k = scalar_kernel(2.0);
        for d_extent in [3usize, 5, 7, 8] {
            let k3 = inflate_1g(&k, d_extent).unwrap();
            let argmax = (0..d_extent)
                .max_by(|&a, &b| k3.data()[a].partial_cmp(&k3.data()[b]).unwrap())
                .unwrap();
            // mu = D/2 with 0-based d: nearest index is D/2 (even) or one of
            // the two straddling indices (odd); the exp form peaks at ceil.
            let mu = d_extent as f64 / 2.0;
            assert!((argmax as f64 - mu).abs() <= 0.5, "D={d_extent} argmax={argmax}");
        }
    }

    #[test]
    fn two_g_scalar_depth1_normalizes_to_one() {
        let k3 = inflate_2g(&scalar_kernel(1.0), 1).unwrap();
        assert_eq!(k3.dims(), &[1, 1, 1, 1, 1]);
        assert!((k3.data()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_g_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = Tensor::<f64>::uniform(&[2, 2, 3, 4], -1.0, 1.0, &mut rng);
        let d_extent = 5;
        let k3 = inflate_2g(&k, d_extent).unwrap();
        // independent evaluation: raw two-term weights, then norm-matching
        let mut pre = vec![0.0f64; k.len() * d_extent];
        let w_extent = 4;
        for (flat, &v) in k.data().iter().enumerate() {
            let w = flat % w_extent;
            for d in 0..d_extent {
                let gd = gaussian_weight(d as f64, d_extent as f64 / 2.0, d_extent as f64 / 8.0).unwrap();
                let gw = gaussian_weight(w as f64, w_extent as f64 / 2.0, w_extent as f64 / 8.0).unwrap();
                pre[flat * d_extent + d] = v * (gd + gw);
            }
        }
        let pre_norm = pre.iter().map(|x| x * x).sum::<f64>().sqrt();
        let gamma = k.l2_norm() / pre_norm;
        for (got, want) in k3.data().iter().zip(pre.iter().map(|x| x * gamma)) {
            assert!((got - want).abs() < 1e-10);
        }
        assert!((k3.l2_norm() - k.l2_norm()).abs() < 1e-9);
    }

    #[test]
    fn gamma_for_replicated_kernel_is_half() {
        let k = Tensor::<f64>::from_vec(vec![1, 1, 2, 2], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let mut rep = Vec::new();
        for &v in k.data() {
            rep.extend([v; 4]);
        }
        let pre = Tensor::from_vec(vec![1, 1, 2, 2, 4], rep).unwrap();
        let g = compute_gamma(&pre, &k);
        assert!(!g.zero_kernel);
        assert!((g.gamma - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gamma_for_zero_kernel_is_flagged_one() {
        let z = Tensor::<f64>::zeros(&[1, 1, 3, 3]);
        let pre = Tensor::<f64>::zeros(&[1, 1, 3, 3, 3]);
        let g = compute_gamma(&pre, &z);
        assert!(g.zero_kernel);
        assert_eq!(g.gamma, 1.0);
    }

    #[test]
    fn gamma_definition_recheck_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let k = Tensor::<f64>::uniform(&[2, 3, 3, 3], -2.0, 2.0, &mut rng);
            let pre = Tensor::<f64>::uniform(&[2, 3, 3, 3, 4], -2.0, 2.0, &mut rng);
            let g = compute_gamma(&pre, &k);
            assert!((g.gamma * pre.l2_norm() - k.l2_norm()).abs() < 1e-7);
        }
    }

    #[test]
    fn all_modes_commute_with_positive_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let k = Tensor::<f64>::uniform(&[1, 2, 3, 3], -1.0, 1.0, &mut rng);
        let c = 2.75;
        let scaled = k.scale(c);
        for mode in [InflationMode::Full, InflationMode::OneG, InflationMode::TwoG] {
            let spec = InflationSpec::new(mode, 4).unwrap();
            let a = inflate(&scaled, spec).unwrap();
            let b = inflate(&k, spec).unwrap().scale(c);
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-10, "{mode}");
            }
        }
    }

    #[test]
    fn norm_preserved_for_all_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for mode in [InflationMode::Full, InflationMode::OneG, InflationMode::TwoG] {
            for _ in 0..20 {
                use rand::Rng;
                let dims = [
                    rng.gen_range(1..3usize),
                    rng.gen_range(1..4usize),
                    rng.gen_range(1..6usize),
                    rng.gen_range(1..6usize),
                ];
                let d = rng.gen_range(1..8usize);
                let k = Tensor::<f64>::uniform(&dims, -1.0, 1.0, &mut rng);
                let k3 = inflate(&k, InflationSpec::new(mode, d).unwrap()).unwrap();
                assert!(
                    (k3.l2_norm() - k.l2_norm()).abs() < 1e-10,
                    "{mode} dims {dims:?} D={d}"
                );
            }
        }
    }

    #[test]
    fn mode_parses_from_cli_strings() {
        assert_eq!("full".parse::<InflationMode>().unwrap(), InflationMode::Full);
        assert_eq!("1G".parse::<InflationMode>().unwrap(), InflationMode::OneG);
        assert_eq!("2g".parse::<InflationMode>().unwrap(), InflationMode::TwoG);
        assert!("3g".parse::<InflationMode>().is_err());
    }
}
