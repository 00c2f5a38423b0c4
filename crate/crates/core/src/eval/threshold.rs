//! Confusion-matrix metrics and the equal-error threshold.
//!
//! A comment is predicted to be an attack iff its score is strictly greater
//! than the threshold.

use serde::{Deserialize, Serialize};

use super::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    /// `None` when nothing is predicted positive.
    pub precision: Option<f64>,
    /// `None` when there are no positives.
    pub recall: Option<f64>,
    /// `None` when there are no negatives.
    pub false_positive_rate: Option<f64>,
    /// `None` unless both precision and recall are defined.
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ClassificationMetrics {
    fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(_), Some(_)) => ratio(2 * tp, 2 * tp + fp + fn_),
            _ => None,
        };
        ClassificationMetrics {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            false_positive_rate: ratio(fp, fp + tn),
            f1,
        }
    }

    pub fn predicted_positive(&self) -> u64 {
        self.tp + self.fp
    }

    pub fn actual_positive(&self) -> u64 {
        self.tp + self.fn_
    }
}

pub fn classification_metrics(scores: &[f64], labels: &[bool], t: f64) -> ClassificationMetrics {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s > t, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    ClassificationMetrics::from_counts(tp, fp, fn_, tn)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub t: f64,
    #[serde(flatten)]
    pub metrics: ClassificationMetrics,
    /// Name of the split(s) the threshold was calibrated on.
    #[serde(default)]
    pub calibration_split: String,
}

/// Candidate thresholds: 0, 1 and the midpoints between adjacent distinct
/// scores, ascending and deduplicated.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut out = vec![0.0, 1.0];
    out.extend(distinct.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Threshold minimizing `|FP - FN|`; ties go to the larger F1, then the
/// smaller threshold.
pub fn equal_error_threshold(scores: &[f64], labels: &[bool]) -> Result<ThresholdReport, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let n_pos = labels.iter().filter(|l| **l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }

    // Distinct scores ascending with suffix counts of positives / negatives
    // strictly above each position.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    let mut values: Vec<f64> = Vec::new();
    let mut pos_at: Vec<u64> = Vec::new();
    let mut neg_at: Vec<u64> = Vec::new();
    for &i in &order {
        if values.last() != Some(&scores[i]) {
            values.push(scores[i]);
            pos_at.push(0);
            neg_at.push(0);
        }
        let k = values.len() - 1;
        if labels[i] {
            pos_at[k] += 1;
        } else {
            neg_at[k] += 1;
        }
    }
    let mut pos_above = vec![0u64; values.len() + 1];
    let mut neg_above = vec![0u64; values.len() + 1];
    for k in (0..values.len()).rev() {
        pos_above[k] = pos_above[k + 1] + pos_at[k];
        neg_above[k] = neg_above[k + 1] + neg_at[k];
    }

    let mut best: Option<(f64, ClassificationMetrics)> = None;
    for t in candidate_thresholds(scores) {
        let k = values.partition_point(|v| *v <= t);
        let tp = pos_above[k];
        let fp = neg_above[k];
        let m = ClassificationMetrics::from_counts(tp, fp, n_pos - tp, n_neg - fp);
        let better = match &best {
            None => true,
            Some((_, b)) => {
                let (gap, best_gap) = (m.fp.abs_diff(m.fn_), b.fp.abs_diff(b.fn_));
                gap < best_gap || (gap == best_gap && f1_greater(&m, b))
            }
        };
        if better {
            best = Some((t, m));
        }
    }
    let (t, metrics) = best.expect("at least two candidates");
    Ok(ThresholdReport {
        t,
        metrics,
        calibration_split: String::new(),
    })
}

/// Exact comparison of `2TP / (2TP + FP + FN)`; undefined F1 ranks lowest.
fn f1_greater(a: &ClassificationMetrics, b: &ClassificationMetrics) -> bool {
    let key = |m: &ClassificationMetrics| m.f1.map(|_| (2 * m.tp as u128, (2 * m.tp + m.fp + m.fn_) as u128));
    match (key(a), key(b)) {
        (Some((an, ad)), Some((bn, bd))) => an * bd > bn * ad,
        (Some(_), None) => true,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    #[test]
    fn metrics_examples() {
        let m = classification_metrics(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false], 0.5);
        assert_eq!((m.precision, m.recall, m.false_positive_rate), (Some(1.0), Some(1.0), Some(0.0)));

        let m = classification_metrics(&[0.1, 0.2, 0.3], &[true, false, false], 0.5);
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, Some(0.0));
        assert_eq!(m.f1, None);

        // TP 2, FP 1, FN 1, TN 2
        let scores = [0.9, 0.8, 0.7, 0.2, 0.1, 0.05];
        let labels = [true, true, false, true, false, false];
        let m = classification_metrics(&scores, &labels, 0.5);
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (2, 1, 1, 2));
        assert!((m.precision.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.false_positive_rate.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.f1.unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn score_equal_to_threshold_is_negative() {
        let m = classification_metrics(&[0.5], &[true], 0.5);
        assert_eq!(m.fn_, 1);
    }

    #[test]
    fn separated_scores() {
        let r = equal_error_threshold(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap();
        assert_eq!((r.metrics.fp, r.metrics.fn_), (0, 0));
        assert_eq!(r.metrics.precision, Some(1.0));
        assert_eq!(r.metrics.recall, Some(1.0));
        assert!(r.t > 0.2 && r.t < 0.8);
    }

    #[test]
    fn one_unavoidable_error_each_side() {
        let scores = [0.05, 0.1, 0.2, 0.6, 0.3, 0.7, 0.8, 0.9];
        let labels = [false, false, false, false, true, true, true, true];
        let r = equal_error_threshold(&scores, &labels).unwrap();
        assert_eq!((r.metrics.fp, r.metrics.fn_), (1, 1));
        assert!((r.t - 0.45).abs() < 1e-12);
    }

    #[test]
    fn single_class_rejected() {
        assert_eq!(equal_error_threshold(&[0.1, 0.2], &[true, true]), Err(MetricError::SingleClass));
    }

    #[test]
    fn exhaustive_scan_agrees() {
        let mut rng = seed::rng(8);
        for _ in 0..30 {
            let n = rng.gen_range(2..200);
            let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..50) as f64) / 50.0).collect();
            let labels: Vec<bool> = scores.iter().map(|s| rng.gen_bool(0.3 + 0.4 * s)).collect();
            if labels.iter().all(|l| *l) || labels.iter().all(|l| !*l) {
                continue;
            }
            let r = equal_error_threshold(&scores, &labels).unwrap();
            let gap = r.metrics.fp.abs_diff(r.metrics.fn_);
            for t in candidate_thresholds(&scores) {
                let m = classification_metrics(&scores, &labels, t);
                assert!(gap <= m.fp.abs_diff(m.fn_));
            }
            assert_eq!(classification_metrics(&scores, &labels, r.t), r.metrics);
            if r.metrics.fp == r.metrics.fn_ {
                assert_eq!(r.metrics.predicted_positive(), r.metrics.actual_positive());
            }
        }
    }
}
