//! Annotator-ensemble baselining.
//!
//! For every run each comment's annotations are shuffled; the first `n_t`
//! form the truth group and the next `n_p` the prediction group. The truth
//! label is the strict-majority vote of the truth group for AUC and its
//! attack fraction for Spearman; the ensemble prediction is the mean of the
//! prediction group. Model scores are evaluated against the same truth labels.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{auc, mean_and_se, spearman, MetricError};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleBaselineConfig {
    pub n_t: usize,
    pub n_p_values: Vec<usize>,
    pub runs: usize,
    pub seed: u64,
}

impl Default for EnsembleBaselineConfig {
    fn default() -> Self {
        EnsembleBaselineConfig {
            n_t: 10,
            n_p_values: vec![1, 3, 5, 7, 9, 10],
            runs: 25,
            seed: 0,
        }
    }
}

/// Metrics of one run; `ensemble` is indexed like `n_p_values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run: usize,
    pub seed: u64,
    pub ensemble: Vec<(f64, f64)>,
    pub model: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub label: String,
    pub n_p: Option<usize>,
    pub auc_mean: f64,
    pub auc_se: f64,
    pub spearman_mean: f64,
    pub spearman_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleBaselineReport {
    pub config: EnsembleBaselineConfig,
    pub n_comments: usize,
    /// One row per `n_p`, then the model row when scores were given.
    pub rows: Vec<BaselineRow>,
    pub runs: Vec<RunMetrics>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("invalid baseline configuration: {0}")]
    Config(String),
    #[error("comment {comment_id} has {found} annotations, needs {needed}")]
    Insufficient {
        comment_id: String,
        found: usize,
        needed: usize,
    },
    #[error("no model score for comment {0}")]
    MissingScore(String),
    #[error("run {run}: {metric} for {predictor}: {source}")]
    Metric {
        run: usize,
        predictor: String,
        metric: &'static str,
        source: MetricError,
    },
}

pub fn ensemble_baseline(
    votes: &BTreeMap<String, Vec<bool>>,
    model_scores: Option<&BTreeMap<String, f64>>,
    config: &EnsembleBaselineConfig,
) -> Result<EnsembleBaselineReport, BaselineError> {
    if config.n_t == 0 || config.runs == 0 || config.n_p_values.is_empty() || config.n_p_values.contains(&0) {
        return Err(BaselineError::Config(format!("{config:?}")));
    }
    if votes.len() < 2 {
        return Err(BaselineError::Config("need at least two comments".into()));
    }
    let needed = config.n_t + config.n_p_values.iter().max().unwrap();
    for (id, v) in votes {
        if v.len() < needed {
            return Err(BaselineError::Insufficient {
                comment_id: id.clone(),
                found: v.len(),
                needed,
            });
        }
    }
    let model: Option<Vec<f64>> = match model_scores {
        Some(scores) => Some(
            votes
                .keys()
                .map(|id| scores.get(id).copied().ok_or_else(|| BaselineError::MissingScore(id.clone())))
                .collect::<Result<_, _>>()?,
        ),
        None => None,
    };

    let runs: Vec<RunMetrics> = (0..config.runs)
        .into_par_iter()
        .map(|run| one_run(votes, model.as_deref(), config, run))
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    for (k, &n_p) in config.n_p_values.iter().enumerate() {
        let (a, s): (Vec<f64>, Vec<f64>) = runs.iter().map(|r| r.ensemble[k]).unzip();
        rows.push(row(format!("n_p = {n_p}"), Some(n_p), &a, &s));
    }
    if model.is_some() {
        let (a, s): (Vec<f64>, Vec<f64>) = runs.iter().map(|r| r.model.unwrap()).unzip();
        rows.push(row("model".into(), None, &a, &s));
    }
    Ok(EnsembleBaselineReport {
        config: config.clone(),
        n_comments: votes.len(),
        rows,
        runs,
    })
}

fn row(label: String, n_p: Option<usize>, aucs: &[f64], rhos: &[f64]) -> BaselineRow {
    let (auc_mean, auc_se) = mean_and_se(aucs);
    let (spearman_mean, spearman_se) = mean_and_se(rhos);
    BaselineRow {
        label,
        n_p,
        auc_mean,
        auc_se,
        spearman_mean,
        spearman_se,
    }
}

fn one_run(
    votes: &BTreeMap<String, Vec<bool>>,
    model: Option<&[f64]>,
    config: &EnsembleBaselineConfig,
    run: usize,
) -> Result<RunMetrics, BaselineError> {
    let run_seed = seed::derive(config.seed, run as u64);
    let mut rng = seed::rng(run_seed);
    let n = votes.len();
    let mut truth_oh = Vec::with_capacity(n);
    let mut truth_ed = Vec::with_capacity(n);
    let mut preds: Vec<Vec<f64>> = vec![Vec::with_capacity(n); config.n_p_values.len()];
    let mut shuffled = Vec::new();
    for v in votes.values() {
        shuffled.clear();
        shuffled.extend_from_slice(v);
        shuffled.shuffle(&mut rng);
        let (truth, rest) = shuffled.split_at(config.n_t);
        let attacks = truth.iter().filter(|x| **x).count();
        truth_oh.push(2 * attacks > config.n_t);
        truth_ed.push(attacks as f64 / config.n_t as f64);
        for (k, &n_p) in config.n_p_values.iter().enumerate() {
            let hits = rest[..n_p].iter().filter(|x| **x).count();
            preds[k].push(hits as f64 / n_p as f64);
        }
    }
    let metric_err = |predictor: String, metric: &'static str| {
        move |source| BaselineError::Metric {
            run,
            predictor,
            metric,
            source,
        }
    };
    let pair = |pred: &[f64], name: String| -> Result<(f64, f64), BaselineError> {
        Ok((
            auc(pred, &truth_oh).map_err(metric_err(name.clone(), "AUC"))?,
            spearman(pred, &truth_ed).map_err(metric_err(name, "Spearman"))?,
        ))
    };
    let ensemble = config
        .n_p_values
        .iter()
        .zip(&preds)
        .map(|(n_p, p)| pair(p, format!("n_p = {n_p}")))
        .collect::<Result<_, _>>()?;
    let model = model.map(|m| pair(m, "model".into())).transpose()?;
    Ok(RunMetrics {
        run,
        seed: run_seed,
        ensemble,
        model,
    })
}
