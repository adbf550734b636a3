//! Macro F1 with per-class breakdown.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct MacroF1 {
    pub macro_f1: f64,
    pub per_class: Vec<f64>,
}

/// Unweighted mean of per-class F1 = 2PR/(P+R). A class with no true and no
/// predicted positives contributes 0.
pub fn macro_f1(predictions: &[usize], labels: &[usize], num_classes: usize) -> Result<MacroF1> {
    if predictions.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.iter().chain(labels).any(|&c| c >= num_classes) {
        return Err(Error::Contract("class index out of range".into()));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fnn = vec![0usize; num_classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        if p == l {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fnn[l] += 1;
        }
    }
    let per_class: Vec<f64> = (0..num_classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fnn[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .collect();
    let macro_f1 = per_class.iter().sum::<f64>() / num_classes as f64;
    Ok(MacroF1 { macro_f1, per_class })
}
