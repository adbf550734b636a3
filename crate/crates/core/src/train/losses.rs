//! Class balancing and loss reductions.

use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::{Element, Tensor};

/// Per-class loss weights, normalized to mean 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    weights: Vec<f64>,
}

impl ClassWeights {
    pub fn uniform(num_classes: usize) -> Self {
        Self { weights: vec![1.0; num_classes] }
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::parameter("class weights must be positive"));
        }
        let mean: f64 = weights.iter().sum::<f64>() / weights.len() as f64;
        if (mean - 1.0).abs() > 1e-6 {
            return Err(Error::parameter(format!(
                "class weights must have mean 1, got {mean}"
            )));
        }
        Ok(Self { weights })
    }

    pub fn get(&self, class: usize) -> f64 {
        self.weights[class]
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }
}

/// Inverse-frequency weights `N/(K·n_c)`, renormalized to mean 1 so the
/// loss scale stays comparable to the unweighted case. Every class must be
/// present at least once.
pub fn class_weights(labels: &[usize], num_classes: usize) -> Result<ClassWeights> {
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        if l >= num_classes {
            return Err(Error::Contract(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        counts[l] += 1;
    }
    if let Some(absent) = counts.iter().position(|&c| c == 0) {
        return Err(Error::parameter(format!(
            "class {absent} has no examples; cannot derive a finite weight"
        )));
    }
    let n = labels.len() as f64;
    let k = num_classes as f64;
    let mut weights: Vec<f64> = counts.iter().map(|&c| n / (k * c as f64)).collect();
    let mean: f64 = weights.iter().sum::<f64>() / k;
    for w in weights.iter_mut() {
        *w /= mean;
    }
    ClassWeights::from_weights(weights)
}

/// Mean over samples of `w_{y_i} · (−log softmax(logits_i)[y_i])` for a
/// `[N, K]` logits tensor.
pub fn balanced_ce<E: Element>(
    logits: &Tensor<E>,
    labels: &[usize],
    weights: &ClassWeights,
) -> Result<E> {
    if logits.rank() != 2 || logits.dims()[0] != labels.len() {
        return Err(Error::shape(format!(
            "balanced_ce: logits {:?} vs {} labels",
            logits.dims(),
            labels.len()
        )));
    }
    let k = logits.dims()[1];
    if weights.len() != k {
        return Err(Error::shape("weight count does not match class count"));
    }
    let mut total = E::zero();
    for (i, &label) in labels.iter().enumerate() {
        let row = Tensor::from_vec(vec![k], logits.data()[i * k..][..k].to_vec())?;
        total += ops::cross_entropy(&row, label, E::from_f64(weights.get(label)))?;
    }
    Ok(total / E::from_f64(labels.len() as f64))
}

/// Ordinary (unweighted) mean cross-entropy over a batch.
pub fn plain_ce<E: Element>(logits: &Tensor<E>, labels: &[usize]) -> Result<E> {
    balanced_ce(logits, labels, &ClassWeights::uniform(logits.dims()[1]))
}

/// Voxel-mean two-class cross-entropy of segmentation logits against a
/// binary mask.
pub fn seg_loss<E: Element>(mask_logits: &Tensor<E>, mask: &Tensor<E>) -> Result<E> {
    ops::seg_cross_entropy(mask_logits, mask)
}

/// `cls + λ·seg` with λ ≥ 0.
pub fn multitask_loss(cls: f64, seg: f64, lambda: f64) -> Result<f64> {
    if lambda < 0.0 {
        return Err(Error::parameter(format!(
            "multitask lambda must be nonnegative, got {lambda}"
        )));
    }
    Ok(cls + lambda * seg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_counts_give_unit_weights() {
        let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let w = class_weights(&labels, 4).unwrap();
        for c in 0..4 {
            assert!((w.get(c) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn imbalanced_counts_renormalize_to_mean_one() {
        // counts [30, 10]: raw [2/3, 2], mean 4/3, renormalized [0.5, 1.5]
        let mut labels = vec![0usize; 30];
        labels.extend(vec![1usize; 10]);
        let w = class_weights(&labels, 2).unwrap();
        assert!((w.get(0) - 0.5).abs() < 1e-12);
        assert!((w.get(1) - 1.5).abs() < 1e-12);
        let mean = (w.get(0) + w.get(1)) / 2.0;
        assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rare_class_outweighs_frequent() {
        let mut labels = vec![0usize; 1];
        labels.extend(vec![1usize; 1000]);
        let w = class_weights(&labels, 2).unwrap();
        assert!(w.get(0) > w.get(1));
    }

    #[test]
    fn absent_class_is_an_explicit_error() {
        let labels = vec![0usize, 0, 0];
        assert!(class_weights(&labels, 2).is_err());
    }

    #[test]
    fn uniform_weights_reduce_to_plain_ce_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let logits = Tensor::<f64>::uniform(&[6, 4], -2.0, 2.0, &mut rng);
        let labels = [0usize, 3, 1, 2, 2, 0];
        let balanced = balanced_ce(&logits, &labels, &ClassWeights::uniform(4)).unwrap();
        let plain = plain_ce(&logits, &labels).unwrap();
        assert_eq!(balanced.to_bits(), plain.to_bits());
    }

    #[test]
    fn single_sample_weighted_tie_is_twice_ln2() {
        let logits = Tensor::<f64>::zeros(&[2]);
        let loss = crate::ops::cross_entropy(&logits, 0, 2.0).unwrap();
        assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn non_mean_one_weights_are_rejected() {
        assert!(ClassWeights::from_weights(vec![2.0, 2.0]).is_err());
        assert!(ClassWeights::from_weights(vec![0.5, 1.5]).is_ok());
        assert!(ClassWeights::from_weights(vec![-1.0, 3.0]).is_err());
    }

    #[test]
    fn batch_matches_per_sample_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let logits = Tensor::<f64>::uniform(&[8, 3], -3.0, 3.0, &mut rng);
        let labels = [2usize, 0, 1, 1, 2, 0, 0, 1];
        let mut counts = vec![0usize; 3];
        for &l in &labels {
            counts[l] += 1;
        }
        let w = class_weights(&labels, 3).unwrap();
        let got = balanced_ce(&logits, &labels, &w).unwrap();
        // independent scalar loop: explicit softmax and log per sample
        let mut total = 0.0f64;
        for (i, &label) in labels.iter().enumerate() {
            let row = &logits.data()[i * 3..][..3];
            let denom: f64 = row.iter().map(|v| v.exp()).sum();
            total += w.get(label) * (-(row[label].exp() / denom).ln());
        }
        assert!((got - total / 8.0).abs() < 1e-6);
    }

    #[test]
    fn multitask_combines_linearly() {
        assert_eq!(multitask_loss(0.5, 0.25, 0.0).unwrap(), 0.5);
        assert_eq!(multitask_loss(0.5, 0.25, 1.0).unwrap(), 0.75);
        assert!(multitask_loss(0.5, 0.25, -1.0).is_err());
    }
}
