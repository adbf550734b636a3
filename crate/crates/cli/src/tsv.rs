//! Line-oriented TSV files: labels, predictions and metrics.

use std::path::Path;

use anyhow::{bail, Context};

/// `case_id<TAB>label` lines.
pub fn read_labels(path: &Path) -> anyhow::Result<Vec<(String, usize)>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read labels file {}", path.display()))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let Some((case, label)) = line.split_once('\t') else {
            bail!("labels file line {} lacks a tab", lineno + 1);
        };
        let label: usize = label
            .trim()
            .parse()
            .with_context(|| format!("bad label on line {}", lineno + 1))?;
        out.push((case.to_string(), label));
    }
    if out.is_empty() {
        bail!("labels file {} is empty", path.display());
    }
    Ok(out)
}

/// `case_id<TAB>class<TAB>p0,p1,…` lines.
pub struct PredictionRow {
    pub case_id: String,
    pub class: usize,
    pub probabilities: Vec<f64>,
}

pub fn format_prediction(row: &PredictionRow) -> String {
    let probs: Vec<String> = row.probabilities.iter().map(|p| format!("{p:.6}")).collect();
    format!("{}\t{}\t{}", row.case_id, row.class, probs.join(","))
}

pub fn read_predictions(path: &Path) -> anyhow::Result<Vec<PredictionRow>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read predictions file {}", path.display()))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() < 2 {
            bail!("predictions file line {} lacks fields", lineno + 1);
        }
        let class: usize = parts[1]
            .trim()
            .parse()
            .with_context(|| format!("bad class on line {}", lineno + 1))?;
        let probabilities = if parts.len() > 2 {
            parts[2]
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .with_context(|| format!("bad probabilities on line {}", lineno + 1))?
        } else {
            Vec::new()
        };
        out.push(PredictionRow { case_id: parts[0].to_string(), class, probabilities });
    }
    Ok(out)
}
