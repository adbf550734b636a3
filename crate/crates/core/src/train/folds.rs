//! Stratified k-fold assignment with line-oriented serialization.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One labeled training case. `label` is a class index (severity:
/// 0=mild..3=critical; detection: 0=non-covid, 1=covid).
#[derive(Debug, Clone)]
pub struct LabeledCase {
    pub case_id: String,
    pub volume_ref: PathBuf,
    pub label: usize,
    pub mask_ref: Option<PathBuf>,
}

impl LabeledCase {
    pub fn new(case_id: impl Into<String>, volume_ref: impl Into<PathBuf>, label: usize) -> Self {
        Self { case_id: case_id.into(), volume_ref: volume_ref.into(), label, mask_ref: None }
    }
}

/// Fold membership: a partition of the case set into `k` folds.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldAssignment {
    pub k: usize,
    assignment: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, case_id: &str) -> Option<usize> {
        self.assignment.get(case_id).copied()
    }

    pub fn cases_in_fold(&self, fold: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(c, _)| c.as_str())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// `case_id<TAB>fold` lines, one per case, sorted by case id.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (case, fold) in &self.assignment {
            out.push_str(case);
            out.push('\t');
            out.push_str(&fold.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut assignment = BTreeMap::new();
        let mut k = 0usize;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (case, fold) = line
                .split_once('\t')
                .ok_or_else(|| Error::Format(format!("fold file line {} lacks a tab", lineno + 1)))?;
            let fold: usize = fold
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad fold index on line {}", lineno + 1)))?;
            k = k.max(fold + 1);
            if assignment.insert(case.to_string(), fold).is_some() {
                return Err(Error::Format(format!("duplicate case `{case}` in fold file")));
            }
        }
        Ok(Self { k, assignment })
    }
}

/// Split cases into `k` folds so that per-class counts across folds differ
/// by at most one. Shuffling is seeded; which folds receive a class's
/// remainder rotates with the running total so overall fold sizes stay
/// balanced too.
pub fn stratified_kfold(cases: &[LabeledCase], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::parameter(format!("k must be at least 2, got {k}")));
    }
    let mut by_class: BTreeMap<usize, Vec<&LabeledCase>> = BTreeMap::new();
    for case in cases {
        by_class.entry(case.label).or_default().push(case);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    let mut offset = 0usize;
    for members in by_class.values_mut() {
        members.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        members.shuffle(&mut rng);
        for (j, case) in members.iter().enumerate() {
            if assignment
                .insert(case.case_id.clone(), (j + offset) % k)
                .is_some()
            {
                return Err(Error::Contract(format!(
                    "duplicate case id `{}`",
                    case.case_id
                )));
            }
        }
        offset = (offset + members.len()) % k;
    }
    Ok(FoldAssignment { k, assignment })
}
