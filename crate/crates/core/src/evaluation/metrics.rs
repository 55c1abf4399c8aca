//! Patient-level scoring: probability averaging, confusion counts, the
//! four threshold metrics and ROC analysis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Arithmetic mean of the per-cough probabilities of one patient.
pub fn aggregate_patient_probability(cough_probs: &[f64]) -> Result<f64> {
    if cough_probs.is_empty() {
        return Err(Error::invalid("patient has no cough probabilities"));
    }
    Ok(cough_probs.iter().sum::<f64>() / cough_probs.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Counts with "abnormal" predicted iff `prob >= threshold`.
pub fn confusion_at_threshold(labels: &[u8], probs: &[f64], threshold: f64) -> Result<ConfusionCounts> {
    if labels.len() != probs.len() {
        return Err(Error::invalid(format!(
            "{} labels but {} probabilities",
            labels.len(),
            probs.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&l, &p) in labels.iter().zip(probs) {
        match (l == 1, p >= threshold) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Which metrics hit a 0/0 and were reported as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degeneracy {
    pub sensitivity: bool,
    pub specificity: bool,
    pub precision: bool,
    pub f1: bool,
}

impl Degeneracy {
    pub fn any(&self) -> bool {
        self.sensitivity || self.specificity || self.precision || self.f1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub f1: f64,
    pub degenerate: Degeneracy,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn metrics_from_confusion(c: &ConfusionCounts) -> ThresholdMetrics {
    let (sensitivity, ds) = ratio(c.tp, c.tp + c.fn_);
    let (specificity, dsp) = ratio(c.tn, c.tn + c.fp);
    let (precision, dp) = ratio(c.tp, c.tp + c.fp);
    // 2PR/(P+R) in count form, which rounds correctly
    let (f1, df) = if c.tp == 0 {
        (0.0, true)
    } else {
        ((2 * c.tp) as f64 / (2 * c.tp + c.fp + c.fn_) as f64, false)
    };
    ThresholdMetrics {
        sensitivity,
        specificity,
        precision,
        f1,
        degenerate: Degeneracy {
            sensitivity: ds,
            specificity: dsp,
            precision: dp,
            f1: df,
        },
    }
}

fn class_counts(labels: &[u8]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    (pos, labels.len() - pos)
}

/// Mann-Whitney AUC: the probability that a random abnormal patient scores
/// above a random normal one, ties counting one half.
pub fn roc_auc(labels: &[u8], probs: &[f64]) -> Result<f64> {
    if labels.len() != probs.len() {
        return Err(Error::invalid("labels and probabilities differ in length"));
    }
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    // Sum of mid-ranks (1-based) of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && probs[order[j + 1]] == probs[order[i]] {
            j += 1;
        }
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid_rank * order[i..=j].iter().filter(|&&t| labels[t] == 1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores at or above this value are called abnormal.
    pub threshold: f64,
}

/// ROC polygon from (0, 0) to (1, 1), one vertex per distinct score.
///
/// The first vertex uses threshold 1.0, above every clamped probability.
pub fn roc_curve(labels: &[u8], probs: &[f64]) -> Result<Vec<RocPoint>> {
    if labels.len() != probs.len() {
        return Err(Error::invalid("labels and probabilities differ in length"));
    }
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: 1.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let score = probs[order[i]];
        while i < order.len() && probs[order[i]] == score {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold: score,
        });
    }
    Ok(points)
}

/// Trapezoidal area under an ROC polygon.
pub fn trapezoid_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}
