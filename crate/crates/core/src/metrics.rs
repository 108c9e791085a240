//! Binary classification metrics.
//!
//! Ratios with a zero denominator are `None` and serialise as `null`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub specificity: Option<f64>,
    pub npv: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    /// `None` when only one class is present.
    pub roc_auc: Option<f64>,
    /// `None` without positives.
    pub pr_auc: Option<f64>,
    #[serde(flatten)]
    pub confusion: Confusion,
}

impl MetricsReport {
    /// Scores are thresholded at 0.5 (ties positive) for the confusion table.
    pub fn from_scores(labels: &[u8], scores: &[f64]) -> Result<Self> {
        let preds: Vec<u8> = scores.iter().map(|&s| u8::from(s >= 0.5)).collect();
        let confusion = confusion_metrics(labels, &preds)?;
        let roc_auc = match roc_auc(labels, scores) {
            Ok(v) => Some(v),
            Err(Error::SingleClass) => None,
            Err(e) => return Err(e),
        };
        let pr_auc = match pr_auc(labels, scores) {
            Ok(v) => Some(v),
            Err(Error::NoPositives) => None,
            Err(e) => return Err(e),
        };
        Ok(MetricsReport {
            n: labels.len(),
            roc_auc,
            pr_auc,
            confusion,
        })
    }

    /// Fixed-order `name value` lines.
    pub fn table(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"));
        let c = &self.confusion;
        let rows = [
            ("roc_auc", f(self.roc_auc)),
            ("pr_auc", f(self.pr_auc)),
            ("accuracy", f(c.accuracy)),
            ("precision", f(c.precision)),
            ("specificity", f(c.specificity)),
            ("npv", f(c.npv)),
            ("tp", c.tp.to_string()),
            ("fp", c.fp.to_string()),
            ("tn", c.tn.to_string()),
            ("fn", c.fn_.to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k:<12}{v}\n")).collect()
    }
}

fn check_labels(labels: &[u8], other: usize) -> Result<()> {
    if labels.len() != other {
        return Err(Error::LengthMismatch(labels.len(), other));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidValue(format!("label {bad} is not 0/1")));
    }
    Ok(())
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn confusion_metrics(labels: &[u8], preds: &[u8]) -> Result<Confusion> {
    check_labels(labels, preds.len())?;
    check_labels(preds, labels.len())?;
    let mut c = Confusion::default();
    for (&y, &p) in labels.iter().zip(preds) {
        match (y, p) {
            (1, 1) => c.tp += 1,
            (0, 1) => c.fp += 1,
            (0, 0) => c.tn += 1,
            _ => c.fn_ += 1,
        }
    }
    c.accuracy = ratio(c.tp + c.tn, labels.len());
    c.precision = ratio(c.tp, c.tp + c.fp);
    c.specificity = ratio(c.tn, c.tn + c.fp);
    c.npv = ratio(c.tn, c.tn + c.fn_);
    Ok(c)
}

fn check_scores(labels: &[u8], scores: &[f64]) -> Result<()> {
    check_labels(labels, scores.len())?;
    if let Some(&bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFiniteInput(bad));
    }
    Ok(())
}

/// Indices sorted by descending score, grouped into blocks of equal score.
fn tie_blocks(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match blocks.last_mut() {
            Some(b) if scores[b[0]] == scores[i] => b.push(i),
            _ => blocks.push(vec![i]),
        }
    }
    blocks
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from the rank sum with average ranks.
pub fn roc_auc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    check_scores(labels, scores)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    // ascending ranks, doubled so average ranks stay integral
    let mut blocks = tie_blocks(scores);
    blocks.reverse();
    let mut start = 0u64;
    let mut rank2_sum = 0u64;
    for b in &blocks {
        let len = b.len() as u64;
        let avg2 = 2 * start + len + 1;
        rank2_sum += avg2 * b.iter().filter(|&&i| labels[i] == 1).count() as u64;
        start += len;
    }
    let u2 = rank2_sum - n_pos * (n_pos + 1);
    Ok(u2 as f64 / (2 * n_pos * n_neg) as f64)
}

/// Average precision: `Σ_k (R_k − R_{k−1}) · P_k` over distinct score
/// thresholds in descending order.
pub fn pr_auc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    check_scores(labels, scores)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 {
        return Err(Error::NoPositives);
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    for b in tie_blocks(scores) {
        let prev_recall = tp as f64 / n_pos as f64;
        for &i in &b {
            if labels[i] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / n_pos as f64;
        ap += (recall - prev_recall) * (tp as f64 / (tp + fp) as f64);
    }
    Ok(ap)
}
