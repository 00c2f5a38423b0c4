//! Random hyperparameter search.
//!
//! Configurations are drawn uniformly with replacement from per-axis grids.
//! N-grams are counted once over the training texts; trials sharing feature
//! settings share one vectorization of the train and dev sets.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{train, AttackModel, Hyperparameters, ModelKind, TrainingExample};
use crate::eval::{auc, spearman};
use crate::features::{count_ngrams, FeatureError, FeatureSpec, Vocabulary, Weighting};
use crate::labels::{LabelDistribution, LabelType};
use crate::seed;

/// A comment with its aggregated labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledText {
    pub text: String,
    pub label: LabelDistribution,
}

impl LabeledText {
    pub fn new(text: impl Into<String>, label: LabelDistribution) -> Self {
        LabeledText {
            text: text.into(),
            label,
        }
    }

    pub fn id(&self) -> &str {
        &self.label.comment_id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "auc")]
    Auc,
    #[serde(rename = "spearman")]
    Spearman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub max_features: Vec<usize>,
    pub weighting: Vec<Weighting>,
    pub normalize: Vec<bool>,
    pub learning_rate: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub epochs: Vec<usize>,
    pub l2: Vec<f64>,
    /// Hidden layer sizes; ignored for logistic regression.
    pub hidden: Vec<Vec<usize>>,
    pub n_iter: usize,
    pub seed: u64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            max_features: vec![10_000, 30_000, 100_000],
            weighting: vec![Weighting::Count, Weighting::Binary],
            normalize: vec![false, true],
            learning_rate: vec![0.3, 0.1, 0.03],
            batch_size: vec![32, 128],
            epochs: vec![5, 20],
            l2: vec![0.0, 1e-5, 1e-4],
            hidden: vec![vec![64], vec![256], vec![256, 64]],
            n_iter: 15,
            seed: 0,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), SearchError> {
        let empty = [
            ("max_features", self.max_features.is_empty()),
            ("weighting", self.weighting.is_empty()),
            ("normalize", self.normalize.is_empty()),
            ("learning_rate", self.learning_rate.is_empty()),
            ("batch_size", self.batch_size.is_empty()),
            ("epochs", self.epochs.is_empty()),
            ("l2", self.l2.is_empty()),
            ("hidden", self.hidden.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(SearchError::InvalidSpace(format!("grid `{name}` is empty")));
        }
        if self.n_iter == 0 {
            return Err(SearchError::InvalidSpace("n_iter must be at least 1".into()));
        }
        Ok(())
    }

    /// The `n_iter` configurations, in trial order.
    pub fn sample(&self, kind: ModelKind) -> Vec<TrialConfig> {
        fn pick<'a, T, R: Rng>(rng: &mut R, grid: &'a [T]) -> &'a T {
            &grid[rng.gen_range(0..grid.len())]
        }
        let mut rng = seed::rng(seed::derive_named(self.seed, "search"));
        (0..self.n_iter)
            .map(|_| {
                let max_features = *pick(&mut rng, &self.max_features);
                let weighting = *pick(&mut rng, &self.weighting);
                let normalize = *pick(&mut rng, &self.normalize);
                let learning_rate = *pick(&mut rng, &self.learning_rate);
                let batch_size = *pick(&mut rng, &self.batch_size);
                let epochs = *pick(&mut rng, &self.epochs);
                let l2 = *pick(&mut rng, &self.l2);
                let hidden = pick(&mut rng, &self.hidden).clone();
                TrialConfig {
                    max_features,
                    weighting,
                    normalize,
                    hyperparameters: Hyperparameters {
                        learning_rate,
                        l2,
                        epochs,
                        batch_size,
                        hidden: match kind {
                            ModelKind::LogisticRegression => Vec::new(),
                            ModelKind::Mlp => hidden,
                        },
                    },
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub max_features: usize,
    pub weighting: Weighting,
    pub normalize: bool,
    pub hyperparameters: Hyperparameters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub seed: u64,
    pub config: TrialConfig,
    pub vocab_size: usize,
    pub dev_score: Option<f64>,
    pub final_loss: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub model: AttackModel,
    pub vocabulary: Vocabulary,
    pub best_trial: usize,
    pub trials: Vec<TrialRecord>,
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("comment {0} appears in both train and dev")]
    Overlap(String),
    #[error("empty {0} set")]
    Empty(&'static str),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error("all {} trials failed", trials.len())]
    AllFailed { trials: Vec<TrialRecord> },
}

/// Train `space.n_iter` sampled configurations and keep the one scoring best
/// on `dev`; ties go to the earliest trial.
pub fn random_search(
    space: &SearchSpace,
    base: &FeatureSpec,
    kind: ModelKind,
    label_type: LabelType,
    train_set: &[LabeledText],
    dev_set: &[LabeledText],
    objective: Objective,
) -> Result<SearchOutcome, SearchError> {
    space.validate()?;
    if train_set.is_empty() {
        return Err(SearchError::Empty("train"));
    }
    if dev_set.is_empty() {
        return Err(SearchError::Empty("dev"));
    }
    let train_ids: BTreeSet<&str> = train_set.iter().map(|t| t.id()).collect();
    if let Some(d) = dev_set.iter().find(|d| train_ids.contains(d.id())) {
        return Err(SearchError::Overlap(d.id().to_string()));
    }

    let configs = space.sample(kind);
    let texts: Vec<&str> = train_set.iter().map(|t| t.text.as_str()).collect();
    let counts = count_ngrams(&texts, base)?;

    // Trials grouped by feature settings, groups in order of first use.
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut group_of: BTreeMap<(usize, Weighting, bool), usize> = BTreeMap::new();
    for (i, c) in configs.iter().enumerate() {
        let next = group_of.len();
        let g = *group_of.entry((c.max_features, c.weighting, c.normalize)).or_insert(next);
        groups.entry(g).or_default().push(i);
    }

    let mut trials: Vec<Option<TrialRecord>> = vec![None; configs.len()];
    let mut best: Option<(usize, f64, AttackModel, Vocabulary)> = None;
    let truth_oh: Vec<bool> = dev_set.iter().map(|d| d.label.oh_label()).collect();
    let truth_ed: Vec<f64> = dev_set.iter().map(|d| d.label.attack_fraction()).collect();

    for members in groups.values() {
        let c0 = &configs[members[0]];
        let spec = FeatureSpec {
            max_features: c0.max_features,
            weighting: c0.weighting,
            normalize: c0.normalize,
            ..*base
        };
        let vocab = Vocabulary::from_counts(&counts, &spec)?;
        let examples: Vec<TrainingExample> = train_set
            .par_iter()
            .map(|t| TrainingExample {
                x: vocab.vectorize(&t.text),
                y: t.label.target(label_type),
            })
            .collect();
        let dev_x: Vec<_> = dev_set.par_iter().map(|d| vocab.vectorize(&d.text)).collect();

        let results: Vec<(TrialRecord, Option<AttackModel>)> = members
            .par_iter()
            .map(|&i| {
                let cfg = &configs[i];
                let trial_seed = seed::derive(space.seed, i as u64);
                let mut record = TrialRecord {
                    index: i,
                    seed: trial_seed,
                    config: cfg.clone(),
                    vocab_size: vocab.len(),
                    dev_score: None,
                    final_loss: None,
                    error: None,
                };
                let model = match train(&examples, kind, label_type, &cfg.hyperparameters, trial_seed) {
                    Ok(m) => m,
                    Err(e) => {
                        record.error = Some(e.to_string());
                        return (record, None);
                    }
                };
                record.final_loss = model.final_loss;
                let scores: Vec<f64> = dev_x.iter().map(|x| model.parameters.probabilities(x)[1]).collect();
                let score = match objective {
                    Objective::Auc => auc(&scores, &truth_oh),
                    Objective::Spearman => spearman(&scores, &truth_ed),
                };
                match score {
                    Ok(s) => {
                        record.dev_score = Some(s);
                        (record, Some(model))
                    }
                    Err(e) => {
                        record.error = Some(format!("dev {objective:?}: {e}"));
                        (record, None)
                    }
                }
            })
            .collect();

        for (record, model) in results {
            if let (Some(score), Some(model)) = (record.dev_score, model) {
                let better = match &best {
                    None => true,
                    Some((bi, bs, _, _)) => score > *bs || (score == *bs && record.index < *bi),
                };
                if better {
                    best = Some((record.index, score, model, vocab.clone()));
                }
            }
            let idx = record.index;
            trials[idx] = Some(record);
        }
    }

    let trials: Vec<TrialRecord> = trials.into_iter().map(|t| t.expect("every trial ran")).collect();
    match best {
        Some((best_trial, _, model, vocabulary)) => Ok(SearchOutcome {
            model: model.with_vocabulary(&vocabulary),
            vocabulary,
            best_trial,
            trials,
        }),
        None => Err(SearchError::AllFailed { trials }),
    }
}
