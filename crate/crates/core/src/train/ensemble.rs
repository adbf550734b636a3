//! Softmax-mean ensembling over fold models.

use crate::autodiff::Eager;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::ops::softmax;
use crate::tensor::{Element, Tensor};

/// Averaged class probabilities and the argmax decision.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutput {
    pub probabilities: Vec<f64>,
    pub class: usize,
}

/// Classification logits of one model on a rank-3 volume.
pub fn model_logits<E: Element>(model: &Model<E>, volume: &Tensor<E>) -> Result<Tensor<E>> {
    let dims = volume.dims();
    if dims.len() != 3 {
        return Err(Error::shape(format!("expected [X,Y,Z] volume, got {dims:?}")));
    }
    let input = volume.reshape(vec![1, dims[0], dims[1], dims[2]])?;
    let mut ctx = Eager;
    let feats = model.forward_features(&mut ctx, &input)?;
    model.classify(&mut ctx, &feats)
}

/// Mean of per-model softmax vectors (softmax first, then the average),
/// argmax with lowest-index tie-break.
pub fn average_softmax<E: Element>(logit_rows: &[Tensor<E>]) -> Result<EnsembleOutput> {
    if logit_rows.is_empty() {
        return Err(Error::parameter("ensemble requires at least one model"));
    }
    let k = logit_rows[0].dims()[0];
    let mut mean = vec![0.0f64; k];
    for row in logit_rows {
        if row.dims() != [k] {
            return Err(Error::shape(format!(
                "heterogeneous class counts: {:?} vs {k}",
                row.dims()
            )));
        }
        let s = softmax(row)?;
        for (m, &p) in mean.iter_mut().zip(s.data()) {
            *m += p.to_f64();
        }
    }
    for m in mean.iter_mut() {
        *m /= logit_rows.len() as f64;
    }
    let class = argmax_lowest(&mean);
    Ok(EnsembleOutput { probabilities: mean, class })
}

fn argmax_lowest(xs: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Predict one volume with every model and average the softmax outputs.
pub fn ensemble_predict<E: Element>(
    models: &[&Model<E>],
    volume: &Tensor<E>,
) -> Result<EnsembleOutput> {
    if models.is_empty() {
        return Err(Error::parameter("ensemble requires at least one model"));
    }
    let k = models[0].config().num_classes;
    if models.iter().any(|m| m.config().num_classes != k) {
        return Err(Error::Config("ensemble members disagree on class count".into()));
    }
    let mut rows = Vec::with_capacity(models.len());
    for model in models {
        rows.push(model_logits(model, volume)?);
    }
    average_softmax(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mean_of_identical_rows_is_that_softmax() {
        let row = Tensor::<f64>::from_vec(vec![3], vec![0.2, 1.1, -0.4]).unwrap();
        let single = average_softmax(&[row.clone()]).unwrap();
        let five = average_softmax(&[row.clone(), row.clone(), row.clone(), row.clone(), row]).unwrap();
        for (a, b) in single.probabilities.iter().zip(&five.probabilities) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(single.class, five.class);
    }

    #[test]
    fn opposite_certainty_ties_break_to_lowest_index() {
        let a = Tensor::<f64>::from_vec(vec![2], vec![50.0, -50.0]).unwrap();
        let b = Tensor::<f64>::from_vec(vec![2], vec![-50.0, 50.0]).unwrap();
        let out = average_softmax(&[a, b]).unwrap();
        assert!((out.probabilities[0] - 0.5).abs() < 1e-9);
        assert!((out.probabilities[1] - 0.5).abs() < 1e-9);
        assert_eq!(out.class, 0);
    }

    #[test]
    fn mean_of_softmax_differs_from_softmax_of_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Tensor::<f64>::uniform(&[4], -4.0, 4.0, &mut rng);
        let b = Tensor::<f64>::uniform(&[4], -4.0, 4.0, &mut rng);
        let got = average_softmax(&[a.clone(), b.clone()]).unwrap();
        // the other order: softmax of averaged logits
        let mean_logits = a.add(&b).unwrap().scale(0.5);
        let other = softmax(&mean_logits).unwrap();
        let diff: f64 = got
            .probabilities
            .iter()
            .zip(other.data())
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(diff > 1e-4, "orders coincided unexpectedly: {diff}");
        // and the implementation computes softmax-then-mean: each row's
        // softmax contributes exactly half
        let sa = softmax(&a).unwrap();
        let sb = softmax(&b).unwrap();
        for i in 0..4 {
            let want = 0.5 * (sa.data()[i] + sb.data()[i]);
            assert!((got.probabilities[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn heterogeneous_class_counts_are_rejected() {
        let a = Tensor::<f64>::zeros(&[3]);
        let b = Tensor::<f64>::zeros(&[4]);
        assert!(average_softmax(&[a, b]).is_err());
    }

    #[test]
    fn empty_ensemble_is_rejected() {
        assert!(average_softmax::<f64>(&[]).is_err());
    }
}
