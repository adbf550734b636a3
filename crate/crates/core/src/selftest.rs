//! Built-in invariant and oracle suite behind the `selftest` CLI command.
//!
//! Each check re-derives expected values through an independent route
//! (brute-force convolution, dense Gaussian kernels, dense linear solves,
//! finite differences) and compares against the production path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{self, AugmentPlan, PrecomputedPair};
use crate::autodiff::{finite_diff_check, Eager, GradMap, Tape};
use crate::inflate::{self, InflationMode, InflationSpec};
use crate::model::{import_2d_checkpoint, reference_2d_checkpoint, Checkpoint, Model, ModelConfig};
use crate::ops;
use crate::resample;
use crate::tensor::Tensor;
use crate::train;
use crate::vox;

pub struct CheckOutcome {
    pub name: &'static str,
    pub result: Result<(), String>,
}

type Check = fn() -> Result<(), String>;

/// Run every check; failures carry a one-line diagnosis.
pub fn run_all() -> Vec<CheckOutcome> {
    let checks: &[(&'static str, Check)] = &[
        ("inflation.norms", check_inflation),
        ("conv.oracle", check_conv_oracle),
        ("conv.depthwise_oracle", check_depthwise_oracle),
        ("blur.oracle", check_blur_oracle),
        ("spline.oracle", check_spline_oracle),
        ("resize.frozen", check_resize),
        ("activation.frozen", check_activations),
        ("augment.determinism", check_augment_determinism),
        ("augment.frequencies", check_augment_frequencies),
        ("folds.properties", check_folds),
        ("train.reductions", check_train_reductions),
        ("gradients.small", check_gradients_small),
        ("formats.roundtrip", check_formats),
        ("model.schedule", check_schedule),
        ("checkpoint.import", check_import),
    ];
    checks
        .iter()
        .map(|&(name, f)| CheckOutcome { name, result: f() })
        .collect()
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err_str<T>(r: crate::error::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// --- independent oracles -------------------------------------------------

/// Nested-loop cross-correlation, one sum per output voxel.
pub(crate) fn brute_conv3d(
    input: &Tensor<f32>,
    weights: &Tensor<f32>,
    stride: [usize; 3],
    pad: [usize; 3],
    depthwise: bool,
) -> Tensor<f32> {
    let (ci, xi, yi, zi) = (input.dims()[0], input.dims()[1], input.dims()[2], input.dims()[3]);
    let (kh, kw, kd) = (weights.dims()[2], weights.dims()[3], weights.dims()[4]);
    let co = if depthwise { ci } else { weights.dims()[1] };
    let ext = |n: usize, k: usize, s: usize, p: usize| (n + 2 * p - k) / s + 1;
    let (xo, yo, zo) = (
        ext(xi, kh, stride[0], pad[0]),
        ext(yi, kw, stride[1], pad[1]),
        ext(zi, kd, stride[2], pad[2]),
    );
    let mut out = Tensor::<f32>::zeros(&[co, xo, yo, zo]);
    for o in 0..co {
        for ox in 0..xo {
            for oy in 0..yo {
                for oz in 0..zo {
                    let mut acc = 0.0f64;
                    let in_channels: Vec<usize> = if depthwise { vec![o] } else { (0..ci).collect() };
                    for &i in &in_channels {
                        for h in 0..kh {
                            for w in 0..kw {
                                for d in 0..kd {
                                    let ix = (ox * stride[0] + h) as isize - pad[0] as isize;
                                    let iy = (oy * stride[1] + w) as isize - pad[1] as isize;
                                    let iz = (oz * stride[2] + d) as isize - pad[2] as isize;
                                    if ix < 0 || iy < 0 || iz < 0 {
                                        continue;
                                    }
                                    let (ix, iy, iz) = (ix as usize, iy as usize, iz as usize);
                                    if ix >= xi || iy >= yi || iz >= zi {
                                        continue;
                                    }
                                    let wv = if depthwise {
                                        weights.at(&[o, 0, h, w, d])
                                    } else {
                                        weights.at(&[i, o, h, w, d])
                                    };
                                    acc += input.at(&[i, ix, iy, iz]) as f64 * wv as f64;
                                }
                            }
                        }
                    }
                    out.set(&[o, ox, oy, oz], acc as f32);
                }
            }
        }
    }
    out
}

/// Full 3D Gaussian kernel applied without separation, reflect padding.
pub(crate) fn dense_gaussian_blur(vol: &Tensor<f32>, sigma: f64) -> Tensor<f32> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut taps = Vec::new();
    for j in -radius..=radius {
        taps.push((-0.5 * (j as f64) * (j as f64) / (sigma * sigma)).exp());
    }
    let sum: f64 = taps.iter().sum();
    let taps: Vec<f64> = taps.iter().map(|t| t / sum).collect();
    let reflect = |mut i: isize, n: usize| -> usize {
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
    };
    let [nx, ny, nz] = [vol.dims()[0], vol.dims()[1], vol.dims()[2]];
    let mut out = Tensor::<f32>::zeros(&[nx, ny, nz]);
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                let mut acc = 0.0f64;
                for (a, ta) in taps.iter().enumerate() {
                    let sx = reflect(x as isize + a as isize - radius, nx);
                    for (b, tb) in taps.iter().enumerate() {
                        let sy = reflect(y as isize + b as isize - radius, ny);
                        for (c, tc) in taps.iter().enumerate() {
                            let sz = reflect(z as isize + c as isize - radius, nz);
                            acc += ta * tb * tc * vol.at(&[sx, sy, sz]) as f64;
                        }
                    }
                }
                out.set(&[x, y, z], acc as f32);
            }
        }
    }
    out
}

/// Natural-spline second derivatives via dense Gaussian elimination, then
/// piecewise Horner evaluation.
pub(crate) fn dense_spline_resample(signal: &[f64], target: usize) -> Vec<f64> {
    let n = signal.len();
    let mut m = vec![0.0f64; n];
    if n >= 3 {
        let dim = n - 2;
        let mut a = vec![0.0f64; dim * dim];
        let mut rhs = vec![0.0f64; dim];
        for i in 0..dim {
            a[i * dim + i] = 4.0;
            if i > 0 {
                a[i * dim + i - 1] = 1.0;
            }
            if i + 1 < dim {
                a[i * dim + i + 1] = 1.0;
            }
            rhs[i] = 6.0 * (signal[i + 2] - 2.0 * signal[i + 1] + signal[i]);
        }
        // dense Gaussian elimination with partial pivoting
        for col in 0..dim {
            let mut pivot = col;
            for r in col + 1..dim {
                if a[r * dim + col].abs() > a[pivot * dim + col].abs() {
                    pivot = r;
                }
            }
            for c in 0..dim {
                a.swap(col * dim + c, pivot * dim + c);
            }
            rhs.swap(col, pivot);
            for r in col + 1..dim {
                let f = a[r * dim + col] / a[col * dim + col];
                for c in col..dim {
                    a[r * dim + c] -= f * a[col * dim + c];
                }
                rhs[r] -= f * rhs[col];
            }
        }
        for r in (0..dim).rev() {
            let mut acc = rhs[r];
            for c in r + 1..dim {
                acc -= a[r * dim + c] * m[c + 1];
            }
            m[r + 1] = acc / a[r * dim + r];
        }
    }
    let positions: Vec<f64> = if target == 1 {
        vec![(n as f64 - 1.0) / 2.0]
    } else {
        (0..target)
            .map(|j| j as f64 * (n as f64 - 1.0) / (target as f64 - 1.0))
            .collect()
    };
    positions
        .iter()
        .map(|&t| {
            if n == 1 {
                return signal[0];
            }
            let i = (t.floor() as usize).min(n - 2);
            let u = t - i as f64;
            let b = (signal[i + 1] - signal[i]) - (2.0 * m[i] + m[i + 1]) / 6.0;
            let c = m[i] / 2.0;
            let d = (m[i + 1] - m[i]) / 6.0;
            signal[i] + u * (b + u * (c + u * d))
        })
        .collect()
}

// --- checks ---------------------------------------------------------------

fn check_inflation() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for mode in [InflationMode::Full, InflationMode::OneG, InflationMode::TwoG] {
        for _ in 0..30 {
            let dims = [
                rng.gen_range(1..3usize),
                rng.gen_range(1..4usize),
                rng.gen_range(1..6usize),
                rng.gen_range(1..6usize),
            ];
            let d = rng.gen_range(1..8usize);
            let k = Tensor::<f32>::uniform(&dims, -1.0, 1.0, &mut rng);
            let spec = err_str(InflationSpec::new(mode, d))?;
            let k3 = err_str(inflate::inflate(&k, spec))?;
            let (n2, n3) = (k.l2_norm(), k3.l2_norm());
            ensure(
                (n2 - n3).abs() < 1e-5 * n2.max(1.0),
                format!("{mode} norm {n3} vs {n2}"),
            )?;
        }
    }
    // full inflation slices identical bitwise
    let k = Tensor::<f32>::uniform(&[2, 2, 3, 3], -1.0, 1.0, &mut rng);
    let k3 = err_str(inflate::inflate_full(&k, 4))?;
    for base in 0..k.len() {
        for d in 1..4 {
            ensure(
                k3.data()[base * 4 + d].to_bits() == k3.data()[base * 4].to_bits(),
                "full-inflation slices differ",
            )?;
        }
    }
    // D = 1 identity for full and 1G
    let id_full = err_str(inflate::inflate_full(&k, 1))?;
    let id_1g = err_str(inflate::inflate_1g(&k, 1))?;
    ensure(id_full.data() == k.data() && id_1g.data() == k.data(), "D=1 is not identity")?;
    Ok(())
}

fn check_conv_oracle() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..6 {
        let ci = rng.gen_range(1..3usize);
        let co = rng.gen_range(1..4usize);
        let n = rng.gen_range(4..7usize);
        let k = rng.gen_range(1..4usize);
        let stride = [rng.gen_range(1..3usize); 3];
        let pad = [rng.gen_range(0..2usize); 3];
        let input = Tensor::<f32>::uniform(&[ci, n, n, n], -1.0, 1.0, &mut rng);
        let weights = Tensor::<f32>::uniform(&[ci, co, k, k, k], -1.0, 1.0, &mut rng);
        let got = err_str(ops::conv3d(&input, &weights, stride, pad))?;
        let want = brute_conv3d(&input, &weights, stride, pad, false);
        for (g, w) in got.data().iter().zip(want.data()) {
            ensure((g - w).abs() < 1e-5, format!("conv3d {g} vs {w}"))?;
        }
    }
    Ok(())
}

fn check_depthwise_oracle() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..6 {
        let c = rng.gen_range(1..4usize);
        let n = rng.gen_range(4..7usize);
        let k = rng.gen_range(1..4usize);
        let pad = [rng.gen_range(0..3usize); 3];
        let input = Tensor::<f32>::uniform(&[c, n, n, n], -1.0, 1.0, &mut rng);
        let weights = Tensor::<f32>::uniform(&[c, 1, k, k, k], -1.0, 1.0, &mut rng);
        let got = err_str(ops::depthwise_conv3d(&input, &weights, [1; 3], pad))?;
        let want = brute_conv3d(&input, &weights, [1; 3], pad, true);
        for (g, w) in got.data().iter().zip(want.data()) {
            ensure((g - w).abs() < 1e-5, format!("depthwise {g} vs {w}"))?;
        }
    }
    Ok(())
}

fn check_blur_oracle() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for sigma in [0.8f64, 1.4] {
        let vol = Tensor::<f32>::uniform(&[10, 10, 10], 0.0, 1.0, &mut rng);
        let got = err_str(augment::gaussian_blur(&vol, sigma))?;
        let want = dense_gaussian_blur(&vol, sigma);
        for (g, w) in got.data().iter().zip(want.data()) {
            ensure((g - w).abs() < 1e-5, format!("blur sigma {sigma}: {g} vs {w}"))?;
        }
    }
    Ok(())
}

fn check_spline_oracle() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for _ in 0..10 {
        let n = rng.gen_range(2..12usize);
        let m = rng.gen_range(1..15usize);
        let signal: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let got = err_str(resample::spline_resample_1d(&signal, m))?;
        let want = dense_spline_resample(&signal, m);
        for (g, w) in got.iter().zip(&want) {
            ensure((g - w).abs() < 1e-6, format!("spline {g} vs {w}"))?;
        }
    }
    // constant, linear and identity
    let constant = err_str(resample::spline_resample_1d(&[2.0f64; 5], 9))?;
    ensure(constant.iter().all(|&v| (v - 2.0).abs() < 1e-12), "constant reproduction")?;
    let linear = err_str(resample::spline_resample_1d(&[0.0f64, 1.0, 2.0, 3.0], 7))?;
    for (j, v) in linear.iter().enumerate() {
        ensure((v - 0.5 * j as f64).abs() < 1e-9, "linear reproduction")?;
    }
    let sig: Vec<f64> = (0..9).map(|i| ((i * 37) % 11) as f64).collect();
    let same = err_str(resample::spline_resample_1d(&sig, 9))?;
    for (a, b) in same.iter().zip(&sig) {
        ensure((a - b).abs() < 1e-6, "same-size identity")?;
    }
    Ok(())
}

fn check_resize() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let t = Tensor::<f32>::uniform(&[2, 4, 4, 4], -1.0, 1.0, &mut rng);
    let same = err_str(ops::trilinear_resize(&t, [4, 4, 4]))?;
    ensure(same.data() == t.data(), "same-size resize is not identity")?;
    let c = Tensor::<f32>::full(&[1, 3, 3, 3], 1.5);
    let big = err_str(ops::trilinear_resize(&c, [7, 5, 6]))?;
    ensure(big.data().iter().all(|&v| (v - 1.5).abs() < 1e-6), "constant resize")?;
    let ramp = Tensor::<f64>::from_vec(vec![1, 1, 1, 4], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    let up = err_str(ops::trilinear_resize(&ramp, [1, 1, 8]))?;
    let expect = [0.0, 0.25, 0.75, 1.25, 1.75, 2.25, 2.75, 3.0];
    for (g, w) in up.data().iter().zip(expect) {
        ensure((g - w).abs() < 1e-12, "ramp resize")?;
    }
    Ok(())
}

fn check_activations() -> Result<(), String> {
    let one = ops::gelu(&Tensor::<f64>::scalar(1.0));
    ensure((one.data()[0] - 0.841_344_746_068_542_9).abs() < 1e-12, "gelu(1)")?;
    let sat = ops::gelu(&Tensor::<f64>::scalar(10.0));
    ensure((sat.data()[0] - 10.0).abs() < 1e-9, "gelu saturation")?;
    let s = err_str(ops::softmax(&Tensor::<f64>::zeros(&[4])))?;
    ensure(s.data().iter().all(|&v| (v - 0.25).abs() < 1e-9), "uniform softmax")?;
    let big = err_str(ops::softmax(&Tensor::<f32>::from_vec(vec![2], vec![1000.0, 0.0]).unwrap()))?;
    ensure(big.all_finite() && (big.data()[0] - 1.0).abs() < 1e-6, "softmax stability")?;
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    for _ in 0..10 {
        let x = Tensor::<f64>::uniform(&[5], -3.0, 3.0, &mut rng);
        let a = err_str(ops::softmax(&x))?;
        let b = err_str(ops::softmax(&x.map(|v| v + 11.5)))?;
        let sum: f64 = a.data().iter().sum();
        ensure((sum - 1.0).abs() < 1e-6, "softmax sum")?;
        for (u, v) in a.data().iter().zip(b.data()) {
            ensure((u - v).abs() < 1e-6, "softmax shift invariance")?;
        }
    }
    Ok(())
}

fn small_plan() -> AugmentPlan {
    AugmentPlan {
        pre_size: 10,
        crop_size: 8,
        elastic_sigma: 2.0,
        seed: 7,
        ..AugmentPlan::default()
    }
}

fn check_augment_determinism() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let vol = Tensor::<f32>::uniform(&[9, 9, 9], 0.0, 1.0, &mut rng);
    let pair = err_str(PrecomputedPair::from_volume(&vol, 10, 8))?;
    let plan = small_plan();
    let (a, _) = err_str(augment::apply_pipeline(&pair, &plan, "case"))?;
    let (b, _) = err_str(augment::apply_pipeline(&pair, &plan, "case"))?;
    ensure(a.data() == b.data(), "pipeline is not deterministic")?;
    ensure(a.all_finite(), "pipeline produced non-finite values")?;
    // multiset preservation of flips and orientation
    let axes = [true, false, true];
    let flipped = err_str(augment::flip(&vol, axes))?;
    let mut xs: Vec<u32> = vol.data().iter().map(|v| v.to_bits()).collect();
    let mut ys: Vec<u32> = flipped.data().iter().map(|v| v.to_bits()).collect();
    xs.sort_unstable();
    ys.sort_unstable();
    ensure(xs == ys, "flip changed the voxel multiset")?;
    let turned = err_str(augment::orient90(&vol, [1, 2, 3]))?;
    let mut zs: Vec<u32> = turned.data().iter().map(|v| v.to_bits()).collect();
    zs.sort_unstable();
    ensure(xs == zs, "orient90 changed the voxel multiset")?;
    // zero-alpha elastic identity
    let mut rng2 = ChaCha8Rng::seed_from_u64(0);
    let same = err_str(augment::elastic_deform(&vol, 0.0, 2.0, &mut rng2))?;
    ensure(same.data() == vol.data(), "alpha=0 elastic is not identity")?;
    Ok(())
}

fn check_augment_frequencies() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let vol = Tensor::<f32>::uniform(&[9, 9, 9], 0.0, 1.0, &mut rng);
    let pair = err_str(PrecomputedPair::from_volume(&vol, 10, 8))?;
    let plan = small_plan();
    let draws = 400usize;
    let (mut crops, mut orients, mut elastics) = (0usize, 0usize, 0usize);
    for i in 0..draws {
        let (_, report) = err_str(augment::apply_pipeline(&pair, &plan, &format!("freq{i}")))?;
        crops += report.crop_taken as usize;
        orients += report.orientation_applied as usize;
        elastics += report.elastic_applied as usize;
    }
    let bound = |p: f64| 3.0 * (draws as f64 * p * (1.0 - p)).sqrt();
    for (name, count, p) in [
        ("crop", crops, 0.5),
        ("orientation", orients, 0.25),
        ("elastic", elastics, 0.5),
    ] {
        let expect = draws as f64 * p;
        ensure(
            (count as f64 - expect).abs() <= bound(p),
            format!("{name} branch count {count} outside 3 sigma of {expect}"),
        )?;
    }
    Ok(())
}

fn check_folds() -> Result<(), String> {
    let cases: Vec<train::LabeledCase> = (0..62)
        .map(|i| train::LabeledCase::new(format!("m{i:03}"), "x.vox", 1))
        .collect();
    let folds = err_str(train::stratified_kfold(&cases, 5, 9))?;
    let mut sizes = folds.fold_sizes();
    sizes.sort_unstable();
    ensure(sizes == vec![12, 12, 12, 13, 13], format!("fold sizes {sizes:?}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    for trial in 0..5 {
        let mut cases = Vec::new();
        for c in 0..3usize {
            for i in 0..rng.gen_range(2..30usize) {
                cases.push(train::LabeledCase::new(format!("t{trial}c{c}i{i}"), "x.vox", c));
            }
        }
        let folds = err_str(train::stratified_kfold(&cases, 4, trial))?;
        ensure(folds.len() == cases.len(), "folds do not partition the cases")?;
        for c in 0..3usize {
            let mut per = vec![0usize; 4];
            for case in cases.iter().filter(|x| x.label == c) {
                per[folds.fold_of(&case.case_id).unwrap()] += 1;
            }
            let (lo, hi) = (per.iter().min().unwrap(), per.iter().max().unwrap());
            ensure(hi - lo <= 1, format!("class {c} spread {per:?}"))?;
        }
    }
    Ok(())
}

fn check_train_reductions() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let logits = Tensor::<f64>::uniform(&[5, 3], -2.0, 2.0, &mut rng);
    let labels = [0usize, 2, 1, 0, 2];
    let balanced = err_str(train::balanced_ce(&logits, &labels, &train::ClassWeights::uniform(3)))?;
    let plain = err_str(train::plain_ce(&logits, &labels))?;
    ensure(balanced.to_bits() == plain.to_bits(), "uniform balanced CE != plain CE")?;
    // ensemble of identical rows
    let row = Tensor::<f64>::uniform(&[4], -1.0, 1.0, &mut rng);
    let one = err_str(train::average_softmax(&[row.clone()]))?;
    let many = err_str(train::average_softmax(&[row.clone(), row.clone(), row]))?;
    for (a, b) in one.probabilities.iter().zip(&many.probabilities) {
        ensure((a - b).abs() < 1e-12, "ensemble of identical models drifted")?;
    }
    // EMA geometric contraction on a scalar recurrence
    let beta: f64 = 0.9;
    let (w, s0) = (0.3f64, 1.7f64);
    let mut s = s0;
    for _ in 0..10 {
        s = beta * s + (1.0 - beta) * w;
    }
    ensure(
        ((s - w) - beta.powi(10) * (s0 - w)).abs() < 1e-6,
        "EMA contraction law violated",
    )?;
    // frozen macro-F1 cases
    let m = err_str(train::macro_f1(&[0, 0, 0, 0], &[0, 1, 2, 3], 4))?;
    ensure((m.macro_f1 - 0.1).abs() < 1e-12, format!("macro F1 {}", m.macro_f1))?;
    let perfect = err_str(train::macro_f1(&[0, 1, 2], &[0, 1, 2], 3))?;
    ensure(perfect.macro_f1 == 1.0, "perfect predictions must score 1")?;
    Ok(())
}

fn check_gradients_small() -> Result<(), String> {
    // channel widths stay >= 4: layer norm over 2 channels saturates to a
    // sign function, leaving gradients too small for finite differences to
    // resolve
    let cfg = ModelConfig {
        stage_depths: vec![1, 1],
        stage_channels: vec![4, 8],
        seg_channels: 4,
        ..ModelConfig::toy(2)
    };
    let model = err_str(Model::<f64>::build(cfg.clone(), 11))?;
    let mut rng = ChaCha8Rng::seed_from_u64(112);
    let input = Tensor::<f64>::uniform(&[1, 16, 16, 16], 0.0, 1.0, &mut rng);
    let mask = Tensor::<f64>::uniform(&[16, 16, 16], 0.0, 1.0, &mut rng)
        .map(|v| if v > 0.5 { 1.0 } else { 0.0 });

    let params: Vec<(String, Tensor<f64>)> = model
        .params()
        .iter()
        .map(|(n, t)| (n.to_string(), t.clone()))
        .collect();
    let loss_of = |p: &[(String, Tensor<f64>)]| -> crate::error::Result<f64> {
        let mut m = Model::<f64>::build(cfg.clone(), 0)?;
        for (name, t) in p {
            m.set_param(name, t.clone())?;
        }
        let mut ctx = Eager;
        let feats = m.forward_features(&mut ctx, &input)?;
        let logits = m.classify(&mut ctx, &feats)?;
        let cls = ops::cross_entropy(&logits, 1, 1.3)?;
        let seg_logits = m.segment(&mut ctx, &feats, [16; 3])?;
        let seg = ops::seg_cross_entropy(&seg_logits, &mask)?;
        Ok(cls + 0.5 * seg)
    };
    let analytic: GradMap<f64> = {
        let mut tape = Tape::new();
        let x = tape.constant_leaf(input.clone());
        let feats = model.forward_features(&mut tape, &x).map_err(|e| e.to_string())?;
        let logits = model.classify(&mut tape, &feats).map_err(|e| e.to_string())?;
        let cls = Tape::cross_entropy(&mut tape, logits, 1, 1.3).map_err(|e| e.to_string())?;
        let seg_logits = model.segment(&mut tape, &feats, [16; 3]).map_err(|e| e.to_string())?;
        let seg = Tape::seg_cross_entropy(&mut tape, seg_logits, &mask).map_err(|e| e.to_string())?;
        let total = tape.add_scaled(cls, seg, 0.5).map_err(|e| e.to_string())?;
        tape.backward(total).map_err(|e| e.to_string())?;
        tape.trainable_gradients()
    };
    let mut eval = |p: &[(String, Tensor<f64>)]| loss_of(p);
    let report = err_str(finite_diff_check(&params, &mut eval, &analytic, 1e-4, Some((40, 13))))?;
    ensure(
        report.max_rel_err < 1e-4,
        format!("max relative error {}", report.max_rel_err),
    )
}

fn check_formats() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(113);
    for _ in 0..5 {
        let dims = [
            rng.gen_range(1..6usize),
            rng.gen_range(1..6usize),
            rng.gen_range(1..6usize),
        ];
        let t = Tensor::<f32>::uniform(&dims, -5.0, 5.0, &mut rng);
        let bytes = vox::to_bytes(&t);
        let back = err_str(vox::from_bytes(&bytes))?;
        ensure(vox::to_bytes(&back) == bytes, "VOX1 round trip not byte-identical")?;
    }
    let model = err_str(Model::<f32>::build(
        ModelConfig { stage_depths: vec![1], stage_channels: vec![2], seg_channels: 2, ..ModelConfig::toy(2) },
        3,
    ))?;
    let bytes = model.save_checkpoint().to_bytes();
    let ckpt = err_str(Checkpoint::from_bytes(&bytes))?;
    ensure(ckpt.to_bytes() == bytes, "NTC1 round trip not byte-identical")?;
    Ok(())
}

fn check_schedule() -> Result<(), String> {
    let cfg = ModelConfig::default();
    let extents = err_str(cfg.stage_extents(224))?;
    ensure(extents == vec![56, 28, 14, 7], format!("default schedule {extents:?}"))?;
    // the schedule function matches a real forward pass at a feasible size
    let toy = err_str(Model::<f32>::build(ModelConfig::toy(2), 0))?;
    let mut ctx = Eager;
    let input = Tensor::<f32>::zeros(&[1, 32, 32, 32]);
    let feats = err_str(toy.forward_features(&mut ctx, &input))?;
    let got: Vec<usize> = feats.stages.iter().map(|t| t.dims()[1]).collect();
    let want = err_str(toy.config().stage_extents(32))?;
    ensure(got == want, format!("toy forward extents {got:?} vs schedule {want:?}"))
}

fn check_import() -> Result<(), String> {
    let cfg = ModelConfig::toy(2);
    let ckpt2d = err_str(reference_2d_checkpoint(&cfg, 14))?;
    let (ckpt3d, report) = err_str(import_2d_checkpoint(&ckpt2d, InflationMode::OneG, &cfg))?;
    let mut model = err_str(Model::<f32>::build(cfg, 0))?;
    err_str(model.load_checkpoint(&ckpt3d))?;
    for layer in &report {
        if let crate::model::MigrationAction::Inflated { .. } = layer.action {
            ensure(
                (layer.norm_2d - layer.norm_3d).abs() < 1e-5 * layer.norm_2d.max(1.0),
                format!("{} norm drift", layer.name),
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_selftest_checks_pass() {
        let outcomes = run_all();
        for outcome in &outcomes {
            assert!(
                outcome.result.is_ok(),
                "{}: {}",
                outcome.name,
                outcome.result.as_ref().unwrap_err()
            );
        }
        assert!(outcomes.len() >= 15);
    }
}
