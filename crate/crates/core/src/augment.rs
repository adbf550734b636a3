//! Stochastic CT augmentation pipeline on rank-3 volumes.
//!
//! Volumes arriving here are already windowed and normalized to [0, 1] (see
//! [`crate::ingest`]), which is what makes the noise sigma range meaningful.
//! Every random decision is drawn from its own counter-derived stream keyed
//! by (seed, case id, op index), so a volume's augmentation is a pure
//! function of those inputs and independent of scheduling order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::resample::spline_resample_volume;
use crate::tensor::{Element, Tensor};

/// Probabilities and parameter ranges of the augmentation pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPlan {
    /// Per-axis probability of reversing that axis.
    pub flip_prob: f64,
    /// Additive Gaussian noise; sigma drawn uniformly from this range.
    pub noise_sigma_range: (f64, f64),
    pub blur_prob: f64,
    pub blur_sigma_range: (f64, f64),
    /// In-plane rotation angle drawn from (−rotate_degrees, rotate_degrees).
    pub rotate_degrees: f64,
    pub elastic_prob: f64,
    pub elastic_alpha_range: (f64, f64),
    /// Smoothing deviation of the elastic displacement field, in voxels of
    /// the augmented grid.
    pub elastic_sigma: f64,
    /// Probability of applying the 90°-multiple orientation augmentation.
    pub orientation_prob: f64,
    /// Probability of the crop branch (resample to `pre_size`, crop to
    /// `crop_size`) over the direct `crop_size` branch.
    pub crop_prob: f64,
    pub pre_size: usize,
    pub crop_size: usize,
    pub seed: u64,
}

impl Default for AugmentPlan {
    fn default() -> Self {
        Self {
            flip_prob: 0.5,
            noise_sigma_range: (0.6, 0.8),
            blur_prob: 0.5,
            blur_sigma_range: (0.5, 1.5),
            rotate_degrees: 30.0,
            elastic_prob: 0.5,
            elastic_alpha_range: (1.0, 7.0),
            elastic_sigma: 35.0,
            orientation_prob: 0.25,
            crop_prob: 0.5,
            pre_size: 256,
            crop_size: 224,
            seed: 0,
        }
    }
}

impl AugmentPlan {
    /// A plan whose draws all resolve to the identity transform.
    pub fn identity(pre_size: usize, crop_size: usize) -> Self {
        Self {
            flip_prob: 0.0,
            noise_sigma_range: (0.0, 0.0),
            blur_prob: 0.0,
            blur_sigma_range: (0.5, 1.5),
            rotate_degrees: 0.0,
            elastic_prob: 0.0,
            elastic_alpha_range: (0.0, 0.0),
            elastic_sigma: 35.0,
            orientation_prob: 0.0,
            crop_prob: 0.0,
            pre_size,
            crop_size,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("flip_prob", self.flip_prob),
            ("blur_prob", self.blur_prob),
            ("elastic_prob", self.elastic_prob),
            ("orientation_prob", self.orientation_prob),
            ("crop_prob", self.crop_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::parameter(format!("{name} must be in [0,1], got {p}")));
            }
        }
        for (name, (lo, hi)) in [
            ("noise_sigma_range", self.noise_sigma_range),
            ("blur_sigma_range", self.blur_sigma_range),
            ("elastic_alpha_range", self.elastic_alpha_range),
        ] {
            if lo < 0.0 || hi < lo {
                return Err(Error::parameter(format!("{name} ({lo}, {hi}) is not a valid range")));
            }
        }
        if self.elastic_sigma <= 0.0 {
            return Err(Error::parameter("elastic_sigma must be positive"));
        }
        if self.crop_size > self.pre_size || self.crop_size == 0 {
            return Err(Error::parameter(format!(
                "crop_size {} must be in 1..=pre_size {}",
                self.crop_size, self.pre_size
            )));
        }
        Ok(())
    }
}

/// Which random stream an op draws from. The indices are part of the
/// reproducibility contract: adding ops must not renumber existing ones.
#[derive(Debug, Clone, Copy)]
pub enum AugmentOp {
    CropBranch = 0,
    Flip = 1,
    Orient = 2,
    Rotate = 3,
    Elastic = 4,
    Blur = 5,
    Noise = 6,
}

/// Independent RNG stream for one (seed, case, op) triple.
pub fn op_rng(seed: u64, case_id: &str, op: AugmentOp) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((case_id.len() as u64).to_le_bytes());
    h.update(case_id.as_bytes());
    h.update((op as u32).to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn check_rank3<E: Element>(vol: &Tensor<E>) -> Result<[usize; 3]> {
    if vol.rank() != 3 {
        return Err(Error::shape(format!(
            "augmentation expects [X,Y,Z] volumes, got {:?}",
            vol.dims()
        )));
    }
    Ok([vol.dims()[0], vol.dims()[1], vol.dims()[2]])
}

// ---------------------------------------------------------------------------
// flips and 90°-multiple orientation
// ---------------------------------------------------------------------------

/// Reverse the selected axes.
pub fn flip<E: Element>(vol: &Tensor<E>, axes: [bool; 3]) -> Result<Tensor<E>> {
    let [nx, ny, nz] = check_rank3(vol)?;
    if axes == [false; 3] {
        return Ok(vol.clone());
    }
    let src = vol.data();
    let mut out = vec![E::zero(); src.len()];
    for x in 0..nx {
        let sx = if axes[0] { nx - 1 - x } else { x };
        for y in 0..ny {
            let sy = if axes[1] { ny - 1 - y } else { y };
            for z in 0..nz {
                let sz = if axes[2] { nz - 1 - z } else { z };
                out[(x * ny + y) * nz + z] = src[(sx * ny + sy) * nz + sz];
            }
        }
    }
    Tensor::from_vec(vol.dims().to_vec(), out)
}

/// Each axis independently reversed with probability `prob`.
pub fn random_flip<E: Element>(vol: &Tensor<E>, prob: f64, rng: &mut impl Rng) -> Result<Tensor<E>> {
    let axes = [
        rng.gen::<f64>() < prob,
        rng.gen::<f64>() < prob,
        rng.gen::<f64>() < prob,
    ];
    flip(vol, axes)
}

/// One 90° rotation about the given axis: an axis transposition plus one
/// axis reversal, exact (no interpolation). Requires a cubic volume.
fn rot90_once<E: Element>(vol: &Tensor<E>, axis: usize) -> Result<Tensor<E>> {
    let [nx, ny, nz] = check_rank3(vol)?;
    if nx != ny || ny != nz {
        return Err(Error::shape(format!(
            "90° rotation requires a cubic volume, got {:?}",
            vol.dims()
        )));
    }
    let n = nx;
    let src = vol.data();
    let mut out = vec![E::zero(); src.len()];
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                let s = match axis {
                    0 => ((x * n + z) * n) + (n - 1 - y), // (y,z) <- (z, n-1-y)
                    1 => (((n - 1 - z) * n + y) * n) + x, // (x,z) <- (n-1-z, x)
                    _ => ((y * n + (n - 1 - x)) * n) + z, // (x,y) <- (y, n-1-x)
                };
                out[(x * n + y) * n + z] = src[s];
            }
        }
    }
    Tensor::from_vec(vol.dims().to_vec(), out)
}

/// Compose per-axis quarter-turn rotations (x, then y, then z axis).
pub fn orient90<E: Element>(vol: &Tensor<E>, quarter_turns: [u8; 3]) -> Result<Tensor<E>> {
    let mut out = vol.clone();
    for (axis, &turns) in quarter_turns.iter().enumerate() {
        for _ in 0..(turns % 4) {
            out = rot90_once(&out, axis)?;
        }
    }
    Ok(out)
}

/// With probability `prob`, rotate by a random multiple of 90° about each
/// axis; otherwise return the volume unchanged.
pub fn random_orient90<E: Element>(
    vol: &Tensor<E>,
    prob: f64,
    rng: &mut impl Rng,
) -> Result<(Tensor<E>, bool)> {
    if rng.gen::<f64>() >= prob {
        return Ok((vol.clone(), false));
    }
    let turns = [
        rng.gen_range(0..4u8),
        rng.gen_range(0..4u8),
        rng.gen_range(0..4u8),
    ];
    Ok((orient90(vol, turns)?, true))
}

// ---------------------------------------------------------------------------
// photometric ops
// ---------------------------------------------------------------------------

/// Add i.i.d. normal noise of the given deviation. `sigma = 0` returns the
/// volume unchanged.
pub fn add_noise_with_sigma<E: Element>(
    vol: &Tensor<E>,
    sigma: f64,
    rng: &mut impl Rng,
) -> Result<Tensor<E>> {
    check_rank3(vol)?;
    if sigma == 0.0 {
        return Ok(vol.clone());
    }
    let mut out = vol.clone();
    for v in out.data_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *v += E::from_f64(sigma * n);
    }
    Ok(out)
}

/// Noise with sigma drawn uniformly from `sigma_range`.
pub fn add_noise<E: Element>(
    vol: &Tensor<E>,
    sigma_range: (f64, f64),
    rng: &mut impl Rng,
) -> Result<(Tensor<E>, f64)> {
    let (lo, hi) = sigma_range;
    let sigma = lo + (hi - lo) * rng.gen::<f64>();
    Ok((add_noise_with_sigma(vol, sigma, rng)?, sigma))
}

/// Fold an out-of-range index back into 0..n by mirror reflection with edge
/// repetition; handles kernels wider than the signal.
#[inline]
fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Normalized Gaussian taps truncated at radius ⌈3σ⌉.
fn gaussian_taps(sigma: f64) -> (usize, Vec<f64>) {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut taps: Vec<f64> = (0..=2 * radius)
        .map(|j| {
            let d = j as f64 - radius as f64;
            (-0.5 * d * d / (sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in taps.iter_mut() {
        *t /= sum;
    }
    (radius, taps)
}

/// Separable Gaussian smoothing with reflect padding. When the kernel is
/// wider than an axis, the reflected taps are folded per source index once
/// instead of walking every tap per sample.
pub fn gaussian_blur<E: Element>(vol: &Tensor<E>, sigma: f64) -> Result<Tensor<E>> {
    if sigma <= 0.0 {
        return Err(Error::parameter(format!("blur sigma must be positive, got {sigma}")));
    }
    let dims = check_rank3(vol)?;
    let (radius, taps) = gaussian_taps(sigma);
    let mut data: Vec<f64> = vol.data().iter().map(|&v| v.to_f64()).collect();
    for axis in [2usize, 1, 0] {
        data = blur_axis(&data, dims, axis, radius, &taps);
    }
    Tensor::from_vec(
        vol.dims().to_vec(),
        data.into_iter().map(E::from_f64).collect(),
    )
}

fn blur_axis(data: &[f64], dims: [usize; 3], axis: usize, radius: usize, taps: &[f64]) -> Vec<f64> {
    let n = dims[axis];
    let folded: Option<Vec<f64>> = if taps.len() > n {
        // weight of each source index after reflection folding, per output
        let mut matrix = vec![0.0f64; n * n];
        for i in 0..n {
            for (j, &t) in taps.iter().enumerate() {
                let s = reflect(i as isize + j as isize - radius as isize, n);
                matrix[i * n + s] += t;
            }
        }
        Some(matrix)
    } else {
        None
    };
    let mut out = vec![0.0f64; data.len()];
    let outer: [usize; 2] = match axis {
        0 => [dims[1], dims[2]],
        1 => [dims[0], dims[2]],
        _ => [dims[0], dims[1]],
    };
    let mut line = vec![0.0f64; n];
    for a in 0..outer[0] {
        for b in 0..outer[1] {
            for (k, v) in line.iter_mut().enumerate() {
                *v = data[axis_offset(dims, axis, a, b, k)];
            }
            for i in 0..n {
                let acc = match &folded {
                    Some(matrix) => {
                        let row = &matrix[i * n..][..n];
                        line.iter().zip(row).map(|(x, w)| x * w).sum()
                    }
                    None => {
                        let mut acc = 0.0;
                        for (j, &t) in taps.iter().enumerate() {
                            let s = reflect(i as isize + j as isize - radius as isize, n);
                            acc += line[s] * t;
                        }
                        acc
                    }
                };
                out[axis_offset(dims, axis, a, b, i)] = acc;
            }
        }
    }
    out
}

#[inline]
fn axis_offset(dims: [usize; 3], axis: usize, a: usize, b: usize, k: usize) -> usize {
    let (x, y, z) = match axis {
        0 => (k, a, b),
        1 => (a, k, b),
        _ => (a, b, k),
    };
    (x * dims[1] + y) * dims[2] + z
}

// ---------------------------------------------------------------------------
// geometric resampling ops
// ---------------------------------------------------------------------------

/// In-plane rotation about the volume center, perpendicular to the
/// transversal (z) axis. Sampling is trilinear (the z coordinate is
/// unchanged, so it reduces to bilinear per slice); out-of-bounds samples
/// take the volume minimum, which approximates air.
pub fn rotate_transversal<E: Element>(vol: &Tensor<E>, angle_degrees: f64) -> Result<Tensor<E>> {
    let [nx, ny, nz] = check_rank3(vol)?;
    let theta = angle_degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cx = (nx as f64 - 1.0) / 2.0;
    let cy = (ny as f64 - 1.0) / 2.0;
    let fill = vol.min_value();
    let src = vol.data();
    let mut out = vec![fill; src.len()];
    for x in 0..nx {
        let dx = x as f64 - cx;
        for y in 0..ny {
            let dy = y as f64 - cy;
            // inverse mapping: sample source at R(−θ)·(p − c) + c
            let sx = cos * dx + sin * dy + cx;
            let sy = -sin * dx + cos * dy + cy;
            let row = (x * ny + y) * nz;
            if sx < 0.0 || sx > nx as f64 - 1.0 || sy < 0.0 || sy > ny as f64 - 1.0 {
                continue; // already filled
            }
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let x1 = (x0 + 1).min(nx - 1);
            let y1 = (y0 + 1).min(ny - 1);
            let tx = sx - x0 as f64;
            let ty = sy - y0 as f64;
            let r00 = (x0 * ny + y0) * nz;
            let r01 = (x0 * ny + y1) * nz;
            let r10 = (x1 * ny + y0) * nz;
            let r11 = (x1 * ny + y1) * nz;
            for z in 0..nz {
                let v = (1.0 - tx) * (1.0 - ty) * src[r00 + z].to_f64()
                    + (1.0 - tx) * ty * src[r01 + z].to_f64()
                    + tx * (1.0 - ty) * src[r10 + z].to_f64()
                    + tx * ty * src[r11 + z].to_f64();
                out[row + z] = E::from_f64(v);
            }
        }
    }
    Tensor::from_vec(vol.dims().to_vec(), out)
}

/// Displacement field of a volume, one grid per component, in voxel units.
pub struct DeformField {
    pub dx: Tensor<f32>,
    pub dy: Tensor<f32>,
    pub dz: Tensor<f32>,
}

impl DeformField {
    /// Raw i.i.d. uniform(−1, 1) field per voxel per component.
    pub fn raw(dims: [usize; 3], rng: &mut impl Rng) -> Self {
        let mut component = || {
            let n: usize = dims.iter().product();
            let data = (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            Tensor::from_vec(dims.to_vec(), data).expect("field extents valid")
        };
        Self { dx: component(), dy: component(), dz: component() }
    }

    /// Smooth every component with the separable Gaussian.
    pub fn smoothed(&self, sigma: f64) -> Result<Self> {
        Ok(Self {
            dx: gaussian_blur(&self.dx, sigma)?,
            dy: gaussian_blur(&self.dy, sigma)?,
            dz: gaussian_blur(&self.dz, sigma)?,
        })
    }
}

/// Warp a volume by `p → p + alpha·field(p)` with trilinear sampling and
/// edge clamping.
pub fn warp<E: Element>(vol: &Tensor<E>, field: &DeformField, alpha: f64) -> Result<Tensor<E>> {
    let [nx, ny, nz] = check_rank3(vol)?;
    if field.dx.dims() != vol.dims() {
        return Err(Error::shape("deformation field extents differ from volume"));
    }
    if alpha == 0.0 {
        return Ok(vol.clone());
    }
    let src = vol.data();
    let mut out = vec![E::zero(); src.len()];
    let mut idx = 0usize;
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                let sx = (x as f64 + alpha * field.dx.data()[idx] as f64)
                    .clamp(0.0, nx as f64 - 1.0);
                let sy = (y as f64 + alpha * field.dy.data()[idx] as f64)
                    .clamp(0.0, ny as f64 - 1.0);
                let sz = (z as f64 + alpha * field.dz.data()[idx] as f64)
                    .clamp(0.0, nz as f64 - 1.0);
                let (x0, y0, z0) = (sx.floor() as usize, sy.floor() as usize, sz.floor() as usize);
                let (x1, y1, z1) = ((x0 + 1).min(nx - 1), (y0 + 1).min(ny - 1), (z0 + 1).min(nz - 1));
                let (tx, ty, tz) = (sx - x0 as f64, sy - y0 as f64, sz - z0 as f64);
                let mut acc = 0.0f64;
                for (xi, wx) in [(x0, 1.0 - tx), (x1, tx)] {
                    for (yi, wy) in [(y0, 1.0 - ty), (y1, ty)] {
                        let base = (xi * ny + yi) * nz;
                        acc += wx
                            * wy
                            * ((1.0 - tz) * src[base + z0].to_f64()
                                + tz * src[base + z1].to_f64());
                    }
                }
                out[idx] = E::from_f64(acc);
                idx += 1;
            }
        }
    }
    Tensor::from_vec(vol.dims().to_vec(), out)
}

/// Full elastic deformation: raw field, smoothing, scaling by alpha, warp.
pub fn elastic_deform<E: Element>(
    vol: &Tensor<E>,
    alpha: f64,
    smoothing_sigma: f64,
    rng: &mut impl Rng,
) -> Result<Tensor<E>> {
    let dims = check_rank3(vol)?;
    let field = DeformField::raw(dims, rng).smoothed(smoothing_sigma)?;
    warp(vol, &field, alpha)
}

/// Contiguous sub-volume at the given low-corner offsets.
pub fn crop_at<E: Element>(vol: &Tensor<E>, offsets: [usize; 3], size: usize) -> Result<Tensor<E>> {
    let [nx, ny, nz] = check_rank3(vol)?;
    for (axis, (&off, n)) in offsets.iter().zip([nx, ny, nz]).enumerate() {
        if off + size > n {
            return Err(Error::shape(format!(
                "crop offset {off}+{size} exceeds extent {n} on axis {axis}"
            )));
        }
    }
    let src = vol.data();
    let mut out = Vec::with_capacity(size * size * size);
    for x in 0..size {
        for y in 0..size {
            let base = ((offsets[0] + x) * ny + offsets[1] + y) * nz + offsets[2];
            out.extend_from_slice(&src[base..base + size]);
        }
    }
    Tensor::from_vec(vec![size, size, size], out)
}

/// Random crop of `crop_size`³ from a `pre_size`³ volume, offsets uniform in
/// `{0..pre_size−crop_size}` per axis.
pub fn random_crop<E: Element>(
    vol: &Tensor<E>,
    pre_size: usize,
    crop_size: usize,
    rng: &mut impl Rng,
) -> Result<Tensor<E>> {
    let dims = check_rank3(vol)?;
    if dims != [pre_size; 3] {
        return Err(Error::shape(format!(
            "random_crop expects a {pre_size}³ volume, got {dims:?}"
        )));
    }
    let hi = pre_size - crop_size;
    let offsets = [
        rng.gen_range(0..=hi),
        rng.gen_range(0..=hi),
        rng.gen_range(0..=hi),
    ];
    crop_at(vol, offsets, crop_size)
}

// ---------------------------------------------------------------------------
// the pipeline
// ---------------------------------------------------------------------------

/// The precomputed resampled pair a case trains from: the `pre_size`³ tensor
/// feeding the crop branch and the directly rescaled `crop_size`³ tensor.
#[derive(Clone)]
pub struct PrecomputedPair<E: Element> {
    pub large: Tensor<E>,
    pub small: Tensor<E>,
}

impl<E: Element> PrecomputedPair<E> {
    pub fn from_volume(vol: &Tensor<E>, pre_size: usize, crop_size: usize) -> Result<Self> {
        Ok(Self {
            large: spline_resample_volume(vol, [pre_size; 3])?,
            small: spline_resample_volume(vol, [crop_size; 3])?,
        })
    }
}

/// Binary mask counterpart of a [`PrecomputedPair`], resized with trilinear
/// interpolation and re-thresholded at 0.5.
#[derive(Clone)]
pub struct MaskPair<E: Element> {
    pub large: Tensor<E>,
    pub small: Tensor<E>,
}

impl<E: Element> MaskPair<E> {
    pub fn from_mask(mask: &Tensor<E>, pre_size: usize, crop_size: usize) -> Result<Self> {
        Ok(Self {
            large: resize_mask(mask, pre_size)?,
            small: resize_mask(mask, crop_size)?,
        })
    }
}

fn threshold_binary<E: Element>(t: &Tensor<E>) -> Tensor<E> {
    t.map(|v| if v.to_f64() > 0.5 { E::one() } else { E::zero() })
}

fn resize_mask<E: Element>(mask: &Tensor<E>, size: usize) -> Result<Tensor<E>> {
    let dims = mask.dims();
    if dims.len() != 3 {
        return Err(Error::shape("mask must be rank 3"));
    }
    let as4 = mask.reshape(vec![1, dims[0], dims[1], dims[2]])?;
    let resized = crate::ops::trilinear_resize(&as4, [size; 3])?;
    Ok(threshold_binary(&resized.reshape(vec![size, size, size])?))
}

/// Which branches an [`apply_pipeline`] call took; used by frequency tests
/// and debugging output.
#[derive(Debug, Clone, Default)]
pub struct AugmentReport {
    pub crop_taken: bool,
    pub flips: [bool; 3],
    pub orientation_applied: bool,
    pub rotate_degrees: f64,
    pub elastic_applied: bool,
    pub elastic_alpha: f64,
    pub blur_applied: bool,
    pub blur_sigma: f64,
    pub noise_sigma: f64,
}

/// Run the full pipeline for one case: crop branch, flips, orientation,
/// rotation, elastic deformation, blur, noise — geometric before
/// photometric, noise last.
pub fn apply_pipeline<E: Element>(
    pair: &PrecomputedPair<E>,
    plan: &AugmentPlan,
    case_id: &str,
) -> Result<(Tensor<E>, AugmentReport)> {
    let (vol, _, report) = run_pipeline(pair, None, plan, case_id)?;
    Ok((vol, report))
}

/// Pipeline variant that carries a segmentation mask through every
/// geometric stage (same draws, same transforms; interpolated masks are
/// re-thresholded) while photometric stages touch only the volume. The
/// volume output is identical to [`apply_pipeline`]'s.
pub fn apply_pipeline_masked<E: Element>(
    pair: &PrecomputedPair<E>,
    masks: &MaskPair<E>,
    plan: &AugmentPlan,
    case_id: &str,
) -> Result<(Tensor<E>, Tensor<E>, AugmentReport)> {
    let (vol, mask, report) = run_pipeline(pair, Some(masks), plan, case_id)?;
    Ok((vol, mask.expect("mask requested"), report))
}

fn run_pipeline<E: Element>(
    pair: &PrecomputedPair<E>,
    masks: Option<&MaskPair<E>>,
    plan: &AugmentPlan,
    case_id: &str,
) -> Result<(Tensor<E>, Option<Tensor<E>>, AugmentReport)> {
    plan.validate()?;
    let mut report = AugmentReport::default();

    let mut rng = op_rng(plan.seed, case_id, AugmentOp::CropBranch);
    let (mut vol, mut mask) = if rng.gen::<f64>() < plan.crop_prob {
        report.crop_taken = true;
        if pair.large.dims() != [plan.pre_size; 3] {
            return Err(Error::shape(format!(
                "crop branch expects a {}³ volume, got {:?}",
                plan.pre_size,
                pair.large.dims()
            )));
        }
        let hi = plan.pre_size - plan.crop_size;
        let offsets = [
            rng.gen_range(0..=hi),
            rng.gen_range(0..=hi),
            rng.gen_range(0..=hi),
        ];
        (
            crop_at(&pair.large, offsets, plan.crop_size)?,
            masks
                .map(|m| crop_at(&m.large, offsets, plan.crop_size))
                .transpose()?,
        )
    } else {
        (pair.small.clone(), masks.map(|m| m.small.clone()))
    };

    let mut rng = op_rng(plan.seed, case_id, AugmentOp::Flip);
    report.flips = [
        rng.gen::<f64>() < plan.flip_prob,
        rng.gen::<f64>() < plan.flip_prob,
        rng.gen::<f64>() < plan.flip_prob,
    ];
    vol = flip(&vol, report.flips)?;
    mask = mask.map(|m| flip(&m, report.flips)).transpose()?;

    let mut rng = op_rng(plan.seed, case_id, AugmentOp::Orient);
    if rng.gen::<f64>() < plan.orientation_prob {
        report.orientation_applied = true;
        let turns = [
            rng.gen_range(0..4u8),
            rng.gen_range(0..4u8),
            rng.gen_range(0..4u8),
        ];
        vol = orient90(&vol, turns)?;
        mask = mask.map(|m| orient90(&m, turns)).transpose()?;
    }

    let mut rng = op_rng(plan.seed, case_id, AugmentOp::Rotate);
    report.rotate_degrees = plan.rotate_degrees * (2.0 * rng.gen::<f64>() - 1.0);
    vol = rotate_transversal(&vol, report.rotate_degrees)?;
    mask = mask
        .map(|m| rotate_transversal(&m, report.rotate_degrees).map(|r| threshold_binary(&r)))
        .transpose()?;

    let mut rng = op_rng(plan.seed, case_id, AugmentOp::Elastic);
    if rng.gen::<f64>() < plan.elastic_prob {
        report.elastic_applied = true;
        let (lo, hi) = plan.elastic_alpha_range;
        report.elastic_alpha = lo + (hi - lo) * rng.gen::<f64>();
        let dims = [vol.dims()[0], vol.dims()[1], vol.dims()[2]];
        let field = DeformField::raw(dims, &mut rng).smoothed(plan.elastic_sigma)?;
        vol = warp(&vol, &field, report.elastic_alpha)?;
        mask = mask
            .map(|m| warp(&m, &field, report.elastic_alpha).map(|w| threshold_binary(&w)))
            .transpose()?;
    }

    let mut rng = op_rng(plan.seed, case_id, AugmentOp::Blur);
    if rng.gen::<f64>() < plan.blur_prob {
        report.blur_applied = true;
        let (lo, hi) = plan.blur_sigma_range;
        report.blur_sigma = lo + (hi - lo) * rng.gen::<f64>();
        vol = gaussian_blur(&vol, report.blur_sigma)?;
    }

    let mut rng = op_rng(plan.seed, case_id, AugmentOp::Noise);
    let (noised, sigma) = add_noise(&vol, plan.noise_sigma_range, &mut rng)?;
    vol = noised;
    report.noise_sigma = sigma;

    Ok((vol, mask, report))
}
