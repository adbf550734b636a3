// temporary: hyperparameter probe for the smoke training path
use ct3d_core::augment::{AugmentPlan, PrecomputedPair};
use ct3d_core::model::{Model, ModelConfig};
use ct3d_core::train::synthetic::spheres_vs_cubes;
use ct3d_core::train::{train_toy, training_accuracy, Hyper, TrainSample};

fn samples(count: usize, seed: u64, pre: usize, crop: usize) -> Vec<TrainSample<f32>> {
    spheres_vs_cubes::<f32>(count, crop, seed)
        .into_iter()
        .map(|c| TrainSample {
            case_id: c.case_id,
            pair: PrecomputedPair::from_volume(&c.volume, pre, crop).unwrap(),
            label: c.label,
            masks: None,
        })
        .collect()
}

#[test]
#[ignore]
fn probe_learning_rates() {
    let train = samples(16, 7, 36, 32);
    for (lr, steps, aug) in [
        (0.01f64, 200usize, false),
        (0.03, 200, false),
        (0.1, 200, false),
        (0.03, 200, true),
        (0.1, 200, true),
    ] {
        let plan = if aug {
            AugmentPlan { pre_size: 36, crop_size: 32, seed: 1, ..AugmentPlan::default() }
        } else {
            AugmentPlan::identity(36, 32)
        };
        let hyper = Hyper { lr, steps, batch: 4, ema_decay: 0.95, ..Hyper::default() };
        let model = Model::<f32>::build(ModelConfig::toy(2), 11).unwrap();
        let t0 = std::time::Instant::now();
        match train_toy(model, &train, &plan, &hyper) {
            Ok(out) => {
                let acc = training_accuracy(&out.model, &train).unwrap();
                let ema_model = out.ema.shadow_model(&out.model).unwrap();
                let ema_acc = training_accuracy(&ema_model, &train).unwrap();
                println!(
                    "lr={lr} aug={aug}: loss {:.3} -> {:.3}, acc {acc:.2}, ema_acc {ema_acc:.2}, {:.1}s",
                    out.loss_trace[0],
                    out.loss_trace.last().unwrap(),
                    t0.elapsed().as_secs_f64()
                );
            }
            Err(e) => println!("lr={lr} aug={aug}: DIVERGED: {e}"),
        }
    }
}

#[test]
#[ignore]
fn probe_scales() {
    use ct3d_core::autodiff::{Eager, Tape};
    use ct3d_core::tensor::Tensor;
    let model = Model::<f64>::build(ModelConfig::toy(2), 11).unwrap();
    let cases = spheres_vs_cubes::<f64>(2, 32, 7);
    let input = cases[0].volume.reshape(vec![1, 32, 32, 32]).unwrap();
    let mut ctx = Eager;
    let feats = model.forward_features(&mut ctx, &input).unwrap();
    for (i, f) in feats.stages.iter().enumerate() {
        let rms = (f.sq_norm() / f.len() as f64).sqrt();
        println!("stage {i}: dims {:?} rms {rms:.4e}", f.dims());
    }
    let logits = model.classify(&mut ctx, &feats).unwrap();
    println!("logits: {:?}", logits.data());
    let mut tape = Tape::new();
    let x = tape.constant_leaf(input);
    let feats = model.forward_features(&mut tape, &x).unwrap();
    let logits = model.classify(&mut tape, &feats).unwrap();
    let loss = Tape::cross_entropy(&mut tape, logits, 0, 1.0).unwrap();
    tape.backward(loss).unwrap();
    for (name, g) in tape.trainable_gradients() {
        let rms = (g.sq_norm() / g.len() as f64).sqrt();
        if rms > 0.0 {
            println!("{name}: grad rms {rms:.3e}");
        }
    }
    let _ = Tensor::<f64>::zeros(&[1]);
}

#[test]
#[ignore]
fn probe_feature_separation() {
    use ct3d_core::autodiff::Eager;
    let model = Model::<f32>::build(ModelConfig::toy(2), 11).unwrap();
    let cases = spheres_vs_cubes::<f32>(8, 32, 7);
    let mut ctx = Eager;
    for case in &cases {
        let input = case.volume.reshape(vec![1, 32, 32, 32]).unwrap();
        let feats = model.forward_features(&mut ctx, &input).unwrap();
        let pooled = ct3d_core::ops::global_avg_pool(feats.stages.last().unwrap()).unwrap();
        let logits = model.classify(&mut ctx, &feats).unwrap();
        let mass: f32 = case.volume.data().iter().sum::<f32>() / case.volume.len() as f32;
        println!(
            "label {} mass {:.3}: pooled[0..4] {:?} logits {:?}",
            case.label,
            mass,
            &pooled.data()[..4],
            logits.data()
        );
    }
}

#[test]
#[ignore]
fn probe_overfit_two_samples() {
    let all = samples(2, 7, 36, 32);
    for (lr, momentum) in [(0.01f64, 0.9f64), (0.05, 0.9), (0.2, 0.9), (0.05, 0.0), (0.5, 0.0)] {
        let hyper = Hyper { lr, momentum, steps: 100, batch: 2, ema_decay: 0.9, ..Hyper::default() };
        let model = Model::<f32>::build(ModelConfig::toy(2), 11).unwrap();
        match train_toy(model, &all, &AugmentPlan::identity(36, 32), &hyper) {
            Ok(out) => {
                let acc = training_accuracy(&out.model, &all).unwrap();
                let first = out.loss_trace[0];
                let mid = out.loss_trace[50];
                let last = out.loss_trace.last().unwrap();
                println!("lr={lr} m={momentum}: loss {first:.4} -> {mid:.4} -> {last:.4}, acc {acc}");
            }
            Err(e) => println!("lr={lr} m={momentum}: DIVERGED {e}"),
        }
    }
}

#[test]
#[ignore]
fn probe_post_training_state() {
    use ct3d_core::autodiff::Eager;
    let all = samples(2, 7, 36, 32);
    let hyper = Hyper { lr: 0.05, momentum: 0.9, steps: 60, batch: 2, ema_decay: 0.9, ..Hyper::default() };
    let model = Model::<f32>::build(ModelConfig::toy(2), 11).unwrap();
    let before: Vec<(String, f64)> = model.params().iter().map(|(n, t)| (n.to_string(), t.l2_norm())).collect();
    let out = train_toy(model, &all, &AugmentPlan::identity(36, 32), &hyper).unwrap();
    println!("param norm changes (before -> after):");
    for ((name, b), (_, t)) in before.iter().zip(out.model.params().iter()) {
        let a = t.l2_norm();
        if (a - b).abs() > 0.2 * b.max(0.01) {
            println!("  {name}: {b:.4} -> {a:.4}");
        }
    }
    let mut ctx = Eager;
    for case in &all {
        let input = case.pair.small.reshape(vec![1, 32, 32, 32]).unwrap();
        let feats = out.model.forward_features(&mut ctx, &input).unwrap();
        let last = feats.stages.last().unwrap();
        let pooled = ct3d_core::ops::global_avg_pool(last).unwrap();
        let logits = out.model.classify(&mut ctx, &feats).unwrap();
        let ch_mean: f32 = pooled.data().iter().sum::<f32>() / 32.0;
        let ch_var: f32 = pooled.data().iter().map(|v| (v - ch_mean).powi(2)).sum::<f32>() / 32.0;
        println!(
            "label {}: pooled var {ch_var:.3e} mean {ch_mean:.3e} logits {:?}",
            case.label,
            logits.data()
        );
    }
}

#[test]
#[ignore]
fn probe_smoke_criterion() {
    use ct3d_core::train::{ensemble_predict, macro_f1, stratified_kfold, LabeledCase};
    let train_cases = spheres_vs_cubes::<f32>(40, 32, 100);
    let held_out = spheres_vs_cubes::<f32>(20, 32, 200);
    let labeled: Vec<LabeledCase> = train_cases
        .iter()
        .map(|c| LabeledCase::new(c.case_id.clone(), "x", c.label))
        .collect();
    let folds = stratified_kfold(&labeled, 5, 1).unwrap();
    let all_samples: Vec<TrainSample<f32>> = train_cases
        .iter()
        .map(|c| TrainSample {
            case_id: c.case_id.clone(),
            pair: PrecomputedPair::from_volume(&c.volume, 36, 32).unwrap(),
            label: c.label,
            masks: None,
        })
        .collect();

    for (name, depths, channels, lr, batch) in [
        ("2stage lr2e-3 b8", vec![1usize, 1], vec![8usize, 16], 0.002f64, 8usize),
        ("2stage lr5e-3 b8", vec![1, 1], vec![8, 16], 0.005, 8),
    ] {
        let t0 = std::time::Instant::now();
        let mut cfg = ModelConfig::toy(2);
        cfg.stage_depths = depths;
        cfg.stage_channels = channels;
        let plan = AugmentPlan {
            pre_size: 36,
            crop_size: 32,
            seed: 5,
            noise_sigma_range: (0.0, 0.2),
            ..AugmentPlan::default()
        };
        let hyper = Hyper { lr, batch, steps: 200, ema_decay: 0.9, seed: 9, ..Hyper::default() };
        let mut ema_models = Vec::new();
        let mut fold_f1 = Vec::new();
        for fold in 0..5 {
            let train_set: Vec<TrainSample<f32>> = all_samples
                .iter()
                .zip(&train_cases)
                .filter(|(_, c)| folds.fold_of(&c.case_id).unwrap() != fold)
                .map(|(s, _)| TrainSample {
                    case_id: s.case_id.clone(),
                    pair: s.pair.clone(),
                    label: s.label,
                    masks: None,
                })
                .collect();
            let model = Model::<f32>::build(cfg.clone(), 11 + fold as u64).unwrap();
            let out = train_toy(model, &train_set, &plan, &hyper).unwrap();
            let ema = out.ema.shadow_model(&out.model).unwrap();
            // per-fold single-model held-out score for dispersion visibility
            let mut p = Vec::new();
            let mut l = Vec::new();
            for case in &held_out {
                p.push(ensemble_predict(&[&ema], &case.volume).unwrap().class);
                l.push(case.label);
            }
            fold_f1.push(macro_f1(&p, &l, 2).unwrap().macro_f1);
            ema_models.push(ema);
        }
        println!("per-fold heldout F1: {fold_f1:?}");
        let refs: Vec<&Model<f32>> = ema_models.iter().collect();
        let mut preds = Vec::new();
        let mut labels = Vec::new();
        for case in &held_out {
            preds.push(ensemble_predict(&refs, &case.volume).unwrap().class);
            labels.push(case.label);
        }
        let m = macro_f1(&preds, &labels, 2).unwrap();
        println!("{name}: ensemble macro F1 {:.3} ({:.0}s)", m.macro_f1, t0.elapsed().as_secs_f64());
    }
}

#[test]
#[ignore]
fn probe_augmentation_ablation() {
    use ct3d_core::train::{ensemble_predict, macro_f1};
    let train_cases = samples(32, 100, 36, 32);
    let held_out = spheres_vs_cubes::<f32>(20, 32, 200);
    let identity = AugmentPlan::identity(36, 32);
    let noise_only = AugmentPlan {
        noise_sigma_range: (0.6, 0.8),
        ..AugmentPlan::identity(36, 32)
    };
    let geo_only = AugmentPlan {
        noise_sigma_range: (0.0, 0.0),
        blur_prob: 0.0,
        ..AugmentPlan { pre_size: 36, crop_size: 32, seed: 5, ..AugmentPlan::default() }
    };
    let full = AugmentPlan { pre_size: 36, crop_size: 32, seed: 5, ..AugmentPlan::default() };
    for (name, plan) in [
        ("identity", identity),
        ("noise-only", noise_only),
        ("geometric-only", geo_only),
        ("full", full),
    ] {
        let hyper = Hyper { lr: 0.02, batch: 6, steps: 200, ema_decay: 0.9, seed: 9, ..Hyper::default() };
        let model = Model::<f32>::build(ModelConfig::toy(2), 11).unwrap();
        let out = train_toy(model, &train_cases, &plan, &hyper).unwrap();
        let ema = out.ema.shadow_model(&out.model).unwrap();
        let mut preds = Vec::new();
        let mut labels = Vec::new();
        for case in &held_out {
            let small = ct3d_core::resample::spline_resample_volume(&case.volume, [32; 3]).unwrap();
            preds.push(ensemble_predict(&[&ema], &small).unwrap().class);
            labels.push(case.label);
        }
        let m = macro_f1(&preds, &labels, 2).unwrap();
        let train_acc = training_accuracy(&out.model, &train_cases).unwrap();
        println!(
            "{name}: loss {:.3}->{:.3}, train acc {train_acc:.2}, heldout F1 {:.3}",
            out.loss_trace[0],
            out.loss_trace.last().unwrap(),
            m.macro_f1
        );
    }
}

#[test]
#[ignore]
fn probe_noise_distribution_gap() {
    use ct3d_core::train::{ensemble_predict, macro_f1};
    use rand::SeedableRng;
    let train_cases = samples(32, 100, 36, 32);
    let held_out = spheres_vs_cubes::<f32>(20, 32, 200);
    let full = AugmentPlan { pre_size: 36, crop_size: 32, seed: 5, ..AugmentPlan::default() };
    let hyper = Hyper { lr: 0.02, batch: 6, steps: 200, ema_decay: 0.9, seed: 9, ..Hyper::default() };
    let model = Model::<f32>::build(ModelConfig::toy(2), 11).unwrap();
    let out = train_toy(model, &train_cases, &full, &hyper).unwrap();
    let ema = out.ema.shadow_model(&out.model).unwrap();
    for noise in [0.0f64, 0.7] {
        let mut preds = Vec::new();
        let mut labels = Vec::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for case in &held_out {
            let mut vol = case.volume.clone();
            if noise > 0.0 {
                vol = ct3d_core::augment::add_noise_with_sigma(&vol, noise, &mut rng).unwrap();
            }
            preds.push(ensemble_predict(&[&ema], &vol).unwrap().class);
            labels.push(case.label);
        }
        let m = macro_f1(&preds, &labels, 2).unwrap();
        println!("eval noise {noise}: heldout F1 {:.3}", m.macro_f1);
    }
}

#[test]
#[ignore]
fn probe_underfit_vs_shortcut() {
    use ct3d_core::train::{ensemble_predict, macro_f1};
    let train_cases = samples(32, 100, 36, 32);
    let held_out = spheres_vs_cubes::<f32>(20, 32, 200);
    let full = AugmentPlan { pre_size: 36, crop_size: 32, seed: 5, ..AugmentPlan::default() };
    for (steps, lr, batch) in [(600usize, 0.02f64, 6usize), (200, 0.05, 6), (200, 0.1, 6), (200, 0.05, 12)] {
        let hyper = Hyper { lr, batch, steps, ema_decay: 0.9, seed: 9, ..Hyper::default() };
        let model = Model::<f32>::build(ModelConfig::toy(2), 11).unwrap();
        let t0 = std::time::Instant::now();
        let out = train_toy(model, &train_cases, &full, &hyper).unwrap();
        let ema = out.ema.shadow_model(&out.model).unwrap();
        let acc = training_accuracy(&out.model, &train_cases).unwrap();
        let ema_acc = training_accuracy(&ema, &train_cases).unwrap();
        let mut preds = Vec::new();
        let mut labels = Vec::new();
        for case in &held_out {
            preds.push(ensemble_predict(&[&ema], &case.volume).unwrap().class);
            labels.push(case.label);
        }
        let m = macro_f1(&preds, &labels, 2).unwrap();
        println!(
            "steps={steps} lr={lr} b={batch}: loss {:.3}, clean train acc {acc:.2}/{ema_acc:.2}, heldout F1 {:.3} ({:.0}s)",
            out.loss_trace.last().unwrap(),
            m.macro_f1,
            t0.elapsed().as_secs_f64()
        );
    }
}

#[test]
#[ignore]
fn probe_grid() {
    use ct3d_core::train::{ensemble_predict, macro_f1};
    let train_cases = samples(32, 100, 36, 32);
    let held_out = spheres_vs_cubes::<f32>(20, 32, 200);
    let full = AugmentPlan { pre_size: 36, crop_size: 32, seed: 5, ..AugmentPlan::default() };
    for (wname, channels) in [("toy", vec![4usize, 8, 16, 32])] {
        for lr in [0.001f64, 0.002, 0.005, 0.01] {
            let mut cfg = ModelConfig::toy(2);
            cfg.stage_channels = channels.clone();
            let hyper = Hyper { lr, batch: 10, steps: 200, ema_decay: 0.9, seed: 9, ..Hyper::default() };
            let model = Model::<f32>::build(cfg, 11).unwrap();
            let t0 = std::time::Instant::now();
            let out = train_toy(model, &train_cases, &full, &hyper).unwrap();
            let ema = out.ema.shadow_model(&out.model).unwrap();
            let ema_acc = training_accuracy(&ema, &train_cases).unwrap();
            let mut preds = Vec::new();
            let mut labels = Vec::new();
            for case in &held_out {
                preds.push(ensemble_predict(&[&ema], &case.volume).unwrap().class);
                labels.push(case.label);
            }
            let m = macro_f1(&preds, &labels, 2).unwrap();
            println!(
                "{wname} lr={lr}: loss {:.3}, ema clean acc {ema_acc:.2}, heldout F1 {:.3} ({:.0}s)",
                out.loss_trace.last().unwrap(),
                m.macro_f1,
                t0.elapsed().as_secs_f64()
            );
        }
    }
}

#[test]
#[ignore]
fn probe_collapse_anatomy() {
    use ct3d_core::augment::apply_pipeline;
    use ct3d_core::train::ensemble_predict;
    let train_cases = samples(32, 100, 36, 32);
    let held_out = spheres_vs_cubes::<f32>(20, 32, 200);
    let plan = AugmentPlan {
        pre_size: 36,
        crop_size: 32,
        seed: 5,
        noise_sigma_range: (0.0, 0.2),
        ..AugmentPlan::default()
    };
    let hyper = Hyper { lr: 0.002, batch: 8, steps: 200, ema_decay: 0.9, seed: 9, ..Hyper::default() };
    let model = Model::<f32>::build(ModelConfig::toy(2), 11).unwrap();
    let out = train_toy(model, &train_cases, &plan, &hyper).unwrap();
    let ema = out.ema.shadow_model(&out.model).unwrap();
    println!("final loss {:.4}", out.loss_trace.last().unwrap());

    let mut report = |name: &str, inputs: Vec<(ct3d_core::tensor::Tensor<f32>, usize)>| {
        let mut counts = [0usize; 2];
        let mut correct = 0usize;
        let mut margin_sum = 0.0f64;
        let n = inputs.len();
        for (vol, label) in &inputs {
            let o = ensemble_predict(&[&ema], vol).unwrap();
            counts[o.class] += 1;
            if o.class == *label {
                correct += 1;
            }
            margin_sum += (o.probabilities[0] - o.probabilities[1]).abs();
        }
        println!(
            "{name}: pred counts {counts:?}, acc {:.2}, mean |p0-p1| {:.3}",
            correct as f64 / n as f64,
            margin_sum / n as f64
        );
    };

    report(
        "clean train   ",
        train_cases.iter().map(|s| (s.pair.small.clone(), s.label)).collect(),
    );
    report(
        "augmented train",
        train_cases
            .iter()
            .map(|s| (apply_pipeline(&s.pair, &plan, &format!("{}@7", s.case_id)).unwrap().0, s.label))
            .collect(),
    );
    report(
        "clean heldout ",
        held_out.iter().map(|c| (c.volume.clone(), c.label)).collect(),
    );
}

#[test]
#[ignore]
fn probe_augmented_signal_integrity() {
    use ct3d_core::augment::apply_pipeline;
    let train_cases = samples(8, 100, 36, 32);
    let plan = AugmentPlan {
        pre_size: 36,
        crop_size: 32,
        seed: 5,
        noise_sigma_range: (0.0, 0.2),
        ..AugmentPlan::default()
    };
    let mut stats: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for s in &train_cases {
        for step in 0..10 {
            let (vol, report) = apply_pipeline(&s.pair, &plan, &format!("{}@{step}", s.case_id)).unwrap();
            let mean: f64 = vol.data().iter().map(|&v| v as f64).sum::<f64>() / vol.len() as f64;
            stats[s.label].push(mean);
            if s.case_id == "syn000" && step < 3 {
                println!(
                    "syn000@{step}: mean {mean:.4} crop={} orient={} rot={:.1} elastic={} blur={} noise={:.2}",
                    report.crop_taken,
                    report.orientation_applied,
                    report.rotate_degrees,
                    report.elastic_applied,
                    report.blur_applied,
                    report.noise_sigma
                );
            }
        }
    }
    for (label, xs) in stats.iter().enumerate() {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let (lo, hi) = xs.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
        println!("label {label}: mean-intensity {mean:.4} ± {sd:.4} range [{lo:.4}, {hi:.4}]");
    }
}

#[test]
#[ignore]
fn probe_trajectory() {
    use ct3d_core::train::ensemble_predict;
    let train_cases = samples(32, 100, 36, 32);
    let plan = AugmentPlan {
        pre_size: 36,
        crop_size: 32,
        seed: 5,
        noise_sigma_range: (0.0, 0.2),
        ..AugmentPlan::default()
    };
    // chunked training: 10 segments of 20 steps, inspecting between
    let mut model = Model::<f32>::build(ModelConfig::toy(2), 11).unwrap();
    for seg in 0..10 {
        let hyper = Hyper {
            lr: 0.002,
            batch: 8,
            steps: 20,
            ema_decay: 0.9,
            seed: 9 + seg as u64 * 1000,
            ..Hyper::default()
        };
        let out = train_toy(model, &train_cases, &plan, &hyper).unwrap();
        model = out.model;
        // logit spread over 8 clean inputs
        let mut logits0 = Vec::new();
        let mut correct = 0;
        for s in train_cases.iter().take(8) {
            let o = ensemble_predict(&[&model], &s.pair.small).unwrap();
            logits0.push(o.probabilities[0]);
            if o.class == s.label {
                correct += 1;
            }
        }
        let mean: f64 = logits0.iter().sum::<f64>() / 8.0;
        let spread: f64 =
            (logits0.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 8.0).sqrt();
        let stem_bias = model.params().get("stem.conv.bias").unwrap().l2_norm();
        let head_w = model.params().get("head.fc.weight").unwrap().l2_norm();
        println!(
            "step {:3}: loss {:.4}, clean p0 spread {spread:.4}, acc {}/8, |stem.bias| {stem_bias:.2} |head.w| {head_w:.3}",
            (seg + 1) * 20,
            out.loss_trace.last().unwrap(),
            correct
        );
    }
}

#[test]
#[ignore]
fn probe_feature_variation_across_inputs() {
    use ct3d_core::autodiff::Eager;
    let model = Model::<f32>::build(ModelConfig::toy(2), 11).unwrap();
    let cases = samples(8, 100, 36, 32);
    let mut per_stage: Vec<Vec<Vec<f32>>> = vec![Vec::new(); 4];
    let mut normed_all: Vec<Vec<f32>> = Vec::new();
    let mut ctx = Eager;
    for s in &cases {
        let input = s.pair.small.reshape(vec![1, 32, 32, 32]).unwrap();
        let feats = model.forward_features(&mut ctx, &input).unwrap();
        for (i, f) in feats.stages.iter().enumerate() {
            per_stage[i].push(f.data().to_vec());
        }
        let pooled = ct3d_core::ops::global_avg_pool(feats.stages.last().unwrap()).unwrap();
        let normed = ct3d_core::ops::layer_norm(
            &pooled,
            model.params().get("head.norm.weight").unwrap(),
            model.params().get("head.norm.bias").unwrap(),
            1e-6,
        )
        .unwrap();
        normed_all.push(normed.data().to_vec());
    }
    // across-input std vs overall rms, per stage
    for (i, stack) in per_stage.iter().enumerate() {
        let n = stack.len() as f64;
        let len = stack[0].len();
        let mut var_sum = 0.0f64;
        let mut rms_sum = 0.0f64;
        for j in 0..len {
            let mean: f64 = stack.iter().map(|v| v[j] as f64).sum::<f64>() / n;
            let var: f64 = stack.iter().map(|v| (v[j] as f64 - mean).powi(2)).sum::<f64>() / n;
            var_sum += var;
            rms_sum += stack.iter().map(|v| (v[j] as f64).powi(2)).sum::<f64>() / n;
        }
        println!(
            "stage {i}: across-input std {:.4e}, rms {:.4e}, ratio {:.4}",
            (var_sum / len as f64).sqrt(),
            (rms_sum / len as f64).sqrt(),
            (var_sum / rms_sum).sqrt()
        );
    }
    let len = normed_all[0].len();
    let n = normed_all.len() as f64;
    let mut var_sum = 0.0;
    for j in 0..len {
        let mean: f64 = normed_all.iter().map(|v| v[j] as f64).sum::<f64>() / n;
        var_sum += normed_all.iter().map(|v| (v[j] as f64 - mean).powi(2)).sum::<f64>() / n;
    }
    println!("head-normed vector: across-input std {:.4e}", (var_sum / len as f64).sqrt());
}
