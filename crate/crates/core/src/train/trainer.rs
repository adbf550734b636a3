//! Desk-scale training loop: SGD with momentum on the balanced
//! cross-entropy (optionally plus a weighted segmentation term), EMA
//! tracking and a per-step loss trace.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ema::EmaState;
use super::losses::{class_weights, ClassWeights};
use crate::augment::{apply_pipeline, apply_pipeline_masked, AugmentPlan, MaskPair, PrecomputedPair};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Hyper {
    pub lr: f64,
    /// First-moment decay of the Adam update.
    pub momentum: f64,
    pub steps: usize,
    pub batch: usize,
    /// Weight of the segmentation term for samples that carry masks.
    pub lambda: f64,
    pub ema_decay: f64,
    /// Global gradient-norm clip applied before the update. Layer norm over
    /// low-variance activations produces occasional huge bias gradients;
    /// clipping keeps single steps bounded. 0 disables.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            lr: 2e-3,
            momentum: 0.9,
            steps: 200,
            batch: 4,
            lambda: 1.0,
            ema_decay: 0.999,
            clip_norm: 1.0,
            seed: 0,
        }
    }
}

const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// One training case: precomputed resample pair, class label, optional
/// segmentation masks.
pub struct TrainSample<E: Element> {
    pub case_id: String,
    pub pair: PrecomputedPair<E>,
    pub label: usize,
    pub masks: Option<MaskPair<E>>,
}

pub struct TrainOutcome<E: Element> {
    pub model: Model<E>,
    pub ema: EmaState<E>,
    pub loss_trace: Vec<f64>,
}

/// Train `model` on the samples with Adam. Deterministic given (model,
/// samples, plan, hyper): batch order, augmentation and updates all derive
/// from seeds.
pub fn train_toy<E: Element>(
    mut model: Model<E>,
    samples: &[TrainSample<E>],
    plan: &AugmentPlan,
    hyper: &Hyper,
) -> Result<TrainOutcome<E>> {
    if samples.is_empty() {
        return Err(Error::parameter("training set is empty"));
    }
    if hyper.batch == 0 {
        return Err(Error::parameter("batch size must be positive"));
    }
    plan.validate()?;
    let num_classes = model.config().num_classes;
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let weights = class_weights(&labels, num_classes)?;

    let mut ema = EmaState::new(&model, hyper.ema_decay)?;
    let mut first_moment: BTreeMap<String, Tensor<E>> = BTreeMap::new();
    let mut second_moment: BTreeMap<String, Tensor<E>> = BTreeMap::new();
    let mut trace = Vec::with_capacity(hyper.steps);

    let mut order: Vec<usize> = Vec::new();
    let mut epoch = 0u64;
    let beta1 = hyper.momentum;

    for step in 0..hyper.steps {
        let mut batch = Vec::with_capacity(hyper.batch);
        while batch.len() < hyper.batch {
            if order.is_empty() {
                order = (0..samples.len()).collect();
                let mut rng =
                    ChaCha8Rng::seed_from_u64(hyper.seed.wrapping_add(epoch.wrapping_mul(0x9e37)));
                order.shuffle(&mut rng);
                epoch += 1;
            }
            batch.push(order.pop().expect("refilled above"));
        }

        let (loss_value, mut grads) = batch_pass(&model, samples, &batch, plan, hyper, &weights, step)?;
        if !loss_value.is_finite() {
            return Err(Error::Diverged { step, loss: loss_value });
        }
        trace.push(loss_value);

        if hyper.clip_norm > 0.0 {
            let total: f64 = grads.values().map(|g| g.sq_norm()).sum();
            let norm = total.sqrt();
            if norm > hyper.clip_norm {
                let scale = E::from_f64(hyper.clip_norm / norm);
                for g in grads.values_mut() {
                    *g = g.scale(scale);
                }
            }
        }

        // bias-corrected Adam; moments kept in f64 so f32 training does not
        // lose the tiny second-moment accumulations
        let t = (step + 1) as i32;
        let corr1 = 1.0 - beta1.powi(t);
        let corr2 = 1.0 - ADAM_BETA2.powi(t);
        for (name, grad) in grads {
            let m = first_moment
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.dims()));
            let v = second_moment
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.dims()));
            let mut m_new = Vec::with_capacity(grad.len());
            let mut v_new = Vec::with_capacity(grad.len());
            for ((&mm, &vv), &g) in m.data().iter().zip(v.data()).zip(grad.data()) {
                let g = g.to_f64();
                m_new.push(E::from_f64(beta1 * mm.to_f64() + (1.0 - beta1) * g));
                v_new.push(E::from_f64(ADAM_BETA2 * vv.to_f64() + (1.0 - ADAM_BETA2) * g * g));
            }
            *m = Tensor::from_vec(grad.dims().to_vec(), m_new)?;
            *v = Tensor::from_vec(grad.dims().to_vec(), v_new)?;
            if hyper.lr == 0.0 {
                continue;
            }
            let param = model.params().get(&name)?;
            let updated: Vec<E> = param
                .data()
                .iter()
                .zip(m.data().iter().zip(v.data()))
                .map(|(&p, (&mm, &vv))| {
                    let m_hat = mm.to_f64() / corr1;
                    let v_hat = vv.to_f64() / corr2;
                    E::from_f64(p.to_f64() - hyper.lr * m_hat / (v_hat.sqrt() + ADAM_EPS))
                })
                .collect();
            model.set_param(&name, Tensor::from_vec(param.dims().to_vec(), updated)?)?;
        }
        ema.update(&model)?;
    }
    Ok(TrainOutcome { model, ema, loss_trace: trace })
}

/// Forward/backward over one batch; returns the mean loss and gradients.
fn batch_pass<E: Element>(
    model: &Model<E>,
    samples: &[TrainSample<E>],
    batch: &[usize],
    plan: &AugmentPlan,
    hyper: &Hyper,
    weights: &ClassWeights,
    step: usize,
) -> Result<(f64, crate::autodiff::GradMap<E>)> {
    let mut tape = Tape::new();
    let mut total: Option<crate::autodiff::NodeId> = None;
    for &idx in batch {
        let sample = &samples[idx];
        // each (case, step) is a fresh draw from the augmentation streams
        let stream_id = format!("{}@{step}", sample.case_id);
        let (vol, mask) = match (&sample.masks, hyper.lambda > 0.0) {
            (Some(masks), true) => {
                let (v, m, _) = apply_pipeline_masked(&sample.pair, masks, plan, &stream_id)?;
                (v, Some(m))
            }
            _ => {
                let (v, _) = apply_pipeline(&sample.pair, plan, &stream_id)?;
                (v, None)
            }
        };
        let s = vol.dims()[0];
        let input = tape.constant_leaf(vol.reshape(vec![1, s, s, s])?);
        let feats = model.forward_features(&mut tape, &input)?;
        let logits = model.classify(&mut tape, &feats)?;
        let mut loss =
            Tape::cross_entropy(&mut tape, logits, sample.label, E::from_f64(weights.get(sample.label)))?;
        if let Some(mask) = mask {
            let seg_logits = model.segment(&mut tape, &feats, [s, s, s])?;
            let seg = Tape::seg_cross_entropy(&mut tape, seg_logits, &mask)?;
            loss = tape.add_scaled(loss, seg, E::from_f64(hyper.lambda))?;
        }
        total = Some(match total {
            Some(t) => Tape::add(&mut tape, t, loss)?,
            None => loss,
        });
    }
    let total = total.expect("batch nonempty");
    let mean = tape.scale(total, E::from_f64(1.0 / batch.len() as f64))?;
    let loss_value = tape.value(mean).as_scalar()?.to_f64();
    tape.backward(mean)?;
    Ok((loss_value, tape.trainable_gradients()))
}

/// Unaugmented accuracy on the direct (crop-size) tensors.
pub fn training_accuracy<E: Element>(
    model: &Model<E>,
    samples: &[TrainSample<E>],
) -> Result<f64> {
    let mut correct = 0usize;
    for sample in samples {
        let out = super::ensemble::ensemble_predict(&[model], &sample.pair.small)?;
        if out.class == sample.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}
