//! Evaluation metrics, annotator-ensemble baselines and threshold calibration.

mod baseline;
mod threshold;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use baseline::{
    ensemble_baseline, BaselineError, BaselineRow, EnsembleBaselineConfig, EnsembleBaselineReport, RunMetrics,
};
pub use threshold::{classification_metrics, equal_error_threshold, ClassificationMetrics, ThresholdReport};

use crate::features::Vocabulary;
use crate::model::{AttackModel, LabeledText, ModelError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("metric undefined: only one class present")]
    SingleClass,
    #[error("metric undefined: constant input")]
    Constant,
    #[error("metric needs at least {0} points")]
    TooFew(usize),
    #[error("non-finite score")]
    NonFinite,
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end
        let r = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

fn check_finite(values: &[f64]) -> Result<(), MetricError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(MetricError::NonFinite)
    }
}

/// Area under the ROC curve: the probability that a random positive outscores
/// a random negative, ties counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    check_finite(scores)?;
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, l)| **l).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(MetricError::Constant);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(MetricError::TooFew(2));
    }
    check_finite(a)?;
    check_finite(b)?;
    pearson(&average_ranks(a), &average_ranks(b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub n_comments: usize,
    pub auc: f64,
    pub spearman: f64,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Attack scores for `texts`, in order.
pub fn score_texts(model: &AttackModel, vocab: &Vocabulary, texts: &[LabeledText]) -> Result<Vec<f64>, ModelError> {
    use rayon::prelude::*;
    model.check_vocabulary(vocab)?;
    texts.par_iter().map(|t| model.score(&vocab.vectorize(&t.text))).collect()
}

/// AUC against majority labels and Spearman against annotator fractions.
pub fn evaluate(
    model: &AttackModel,
    vocab: &Vocabulary,
    data: &[LabeledText],
    split: &str,
) -> Result<EvalReport, EvalError> {
    let scores = score_texts(model, vocab, data)?;
    let oh: Vec<bool> = data.iter().map(|d| d.label.oh_label()).collect();
    let ed: Vec<f64> = data.iter().map(|d| d.label.attack_fraction()).collect();
    Ok(EvalReport {
        split: split.to_string(),
        n_comments: data.len(),
        auc: auc(&scores, &oh)?,
        spearman: spearman(&scores, &ed)?,
    })
}

/// One labelled row of the model comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub model: String,
    pub label_type: String,
    pub ngram: String,
    pub report: EvalReport,
}

/// Aligned text table with AUC and Spearman in percent.
pub fn model_table(rows: &[ModelRow]) -> String {
    let mut lines = vec![vec![
        "Model".to_string(),
        "Type".to_string(),
        "N-gram".to_string(),
        "AUC".to_string(),
        "Spearman".to_string(),
    ]];
    for r in rows {
        lines.push(vec![
            r.model.clone(),
            r.label_type.clone(),
            r.ngram.clone(),
            format!("{:.2}", 100.0 * r.report.auc),
            format!("{:.2}", 100.0 * r.report.spearman),
        ]);
    }
    align(&lines, &[false, false, false, true, true])
}

/// Mean and (standard error) per row, in percent.
pub fn baseline_table(report: &EnsembleBaselineReport) -> String {
    let mut lines = vec![vec!["Predictor".to_string(), "AUC".to_string(), "Spearman".to_string()]];
    for r in &report.rows {
        lines.push(vec![
            r.label.clone(),
            format!("{:.2} ({:.2})", 100.0 * r.auc_mean, 100.0 * r.auc_se),
            format!("{:.2} ({:.2})", 100.0 * r.spearman_mean, 100.0 * r.spearman_se),
        ]);
    }
    align(&lines, &[false, true, true])
}

pub(crate) fn align(rows: &[Vec<String>], right: &[bool]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if right.get(c).copied().unwrap_or(false) {
                    format!("{s:>w$}", w = widths[c])
                } else {
                    format!("{s:<w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::cmp::Ordering;

    fn auc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    den += 1.0;
                    num += match scores[i].partial_cmp(&scores[j]).unwrap() {
                        Ordering::Greater => 1.0,
                        Ordering::Equal => 0.5,
                        Ordering::Less => 0.0,
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[1.0, 1.0, 0.0, 0.0], &[true, true, false, false]), Ok(1.0));
        assert_eq!(auc(&[0.3; 6], &[true, false, true, false, false, true]), Ok(0.5));
        let scores = [0.1, 0.4, 0.4, 0.35, 0.8, 0.8, 0.8, 0.2, 0.9, 0.4];
        let labels = [false, true, false, true, true, false, true, false, true, false];
        assert!((auc(&scores, &labels).unwrap() - auc_pairs(&scores, &labels)).abs() < 1e-15);
        assert_eq!(auc(&[0.1, 0.2], &[true, true]), Err(MetricError::SingleClass));
        assert_eq!(auc(&[0.1], &[true, false]), Err(MetricError::LengthMismatch(1, 2)));
    }

    #[test]
    fn spearman_examples() {
        let a = [0.1, 0.5, 0.3, 0.9];
        assert!((spearman(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let rev: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((spearman(&a, &rev).unwrap() + 1.0).abs() < 1e-15);
        // ranks a = [1, 2.5, 2.5, 4], b = [2, 1, 3.5, 3.5]
        let got = spearman(&[1.0, 2.0, 2.0, 3.0], &[0.5, 0.1, 0.7, 0.7]).unwrap();
        assert!((got - 0.5).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 1.0], &[0.0, 1.0]), Err(MetricError::Constant));
        assert_eq!(spearman(&[1.0], &[0.0]), Err(MetricError::TooFew(2)));
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn table_layout() {
        let rows = vec![ModelRow {
            model: "LR".into(),
            label_type: "ED".into(),
            ngram: "char".into(),
            report: EvalReport {
                split: "dev".into(),
                n_comments: 10,
                auc: 0.9624,
                spearman: 0.6668,
            },
        }];
        assert_eq!(
            model_table(&rows),
            "Model  Type  N-gram    AUC  Spearman\nLR     ED    char    96.24     66.68\n"
        );
    }

    #[test]
    fn standard_error() {
        assert_eq!(mean_and_se(&[0.5]), (0.5, 0.0));
        let (m, se) = mean_and_se(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
    }

    fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(
                    prop_oneof![(0u8..4).prop_map(|v| v as f64 / 4.0), (0u32..100_000).prop_map(|v| v as f64 / 1e5)],
                    n,
                ),
                prop::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn auc_matches_pairs((scores, labels) in scored_labels()) {
            prop_assume!(labels.iter().any(|l| *l) && labels.iter().any(|l| !*l));
            let got = auc(&scores, &labels).unwrap();
            prop_assert!((got - auc_pairs(&scores, &labels)).abs() < 1e-12);
        }

        #[test]
        fn auc_invariant_under_monotone_map((scores, labels) in scored_labels()) {
            prop_assume!(labels.iter().any(|l| *l) && labels.iter().any(|l| !*l));
            let mapped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            prop_assert_eq!(auc(&scores, &labels), auc(&mapped, &labels));
        }

        #[test]
        fn auc_flip_complements(scores in prop::collection::hash_set(0u32..1_000_000, 2..40), seed in any::<u64>()) {
            let scores: Vec<f64> = scores.into_iter().map(|v| v as f64).collect();
            let labels: Vec<bool> = (0..scores.len()).map(|i| (seed >> (i % 64)) & 1 == 1).collect();
            prop_assume!(labels.iter().any(|l| *l) && labels.iter().any(|l| !*l));
            let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
            let total = auc(&scores, &labels).unwrap() + auc(&scores, &flipped).unwrap();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn spearman_invariant_under_monotone_maps(
            a in prop::collection::vec((0u32..1000).prop_map(|v| v as f64 / 1000.0), 2..30),
            b_seed in prop::collection::vec(0u8..5, 30),
        ) {
            let b: Vec<f64> = b_seed[..a.len()].iter().map(|v| *v as f64).collect();
            let base = spearman(&a, &b);
            let a2: Vec<f64> = a.iter().map(|v| v.powi(3) + 1.0).collect();
            let b2: Vec<f64> = b.iter().map(|v| 2.0 * v - 5.0).collect();
            match (base, spearman(&a2, &b2)) {
                (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }
}
