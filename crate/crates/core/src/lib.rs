//! Tooling for measuring personal attacks in wiki discussion corpora.
//!
//! The crate is organised as a pipeline:
//!
//! * [`corpus`] turns page revision histories into talk-page comments.
//! * [`labels`] cleans crowd annotations and aggregates them into hard
//!   (majority) and soft (empirical distribution) labels.
//! * [`features`] builds bag-of-n-gram vectors.
//! * [`model`] trains logistic-regression and MLP classifiers with a softmax
//!   output and cross-entropy loss, and tunes them by random search.
//! * [`eval`] computes AUC / Spearman, annotator-ensemble baselines and the
//!   equal-error decision threshold.
//! * [`analytics`] scores whole corpora and runs the prevalence analyses.
//!
//! [`synth`] generates planted synthetic corpora used by tests and fixtures.

pub mod analytics;
pub mod corpus;
pub mod eval;
pub mod features;
pub mod labels;
pub mod model;
pub mod seed;
pub mod synth;

pub use corpus::{Comment, Namespace, Revision};
pub use features::{FeatureSpec, SparseVector, Vocabulary};
pub use labels::{AnnotationRecord, LabelDistribution, LabelType};
pub use model::{AttackModel, Hyperparameters, ModelKind};

