//! Logistic-regression and MLP attack classifiers.
//!
//! Both architectures end in a 2-way softmax and are trained on mean
//! cross-entropy plus an L2 penalty by plain mini-batch SGD. Targets are
//! probability pairs `(p_not_attack, p_attack)`: one-hot majority labels or
//! the empirical annotator distribution. The attack score used downstream is
//! the second softmax component.

mod network;
mod search;

use std::fs;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureSpec, SparseVector, Vocabulary};
use crate::labels::LabelType;
use crate::seed;

pub use network::{Dense, Network};
pub use search::{random_search, LabeledText, Objective, SearchError, SearchOutcome, SearchSpace, TrialRecord};

pub const MODEL_VERSION: u32 = 1;

/// Floor applied to predicted probabilities before the logarithm.
pub const LOG_EPSILON: f64 = 1e-12;

/// Bound keeping reported probabilities inside the open interval (0, 1).
const PROB_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "LR")]
    LogisticRegression,
    #[serde(rename = "MLP")]
    Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub x: SparseVector,
    /// `(p_not_attack, p_attack)`.
    pub y: [f64; 2],
}

/// `-sum_i y_i ln(max(yhat_i, eps))`; terms with `y_i = 0` contribute nothing.
pub fn cross_entropy(y: [f64; 2], yhat: [f64; 2]) -> f64 {
    y.iter()
        .zip(yhat)
        .filter(|(yi, _)| **yi != 0.0)
        .map(|(yi, p)| -yi * p.clamp(LOG_EPSILON, 1.0).ln())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Hidden layer sizes; empty for logistic regression.
    #[serde(default)]
    pub hidden: Vec<usize>,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            learning_rate: 0.1,
            l2: 1e-5,
            epochs: 20,
            batch_size: 32,
            hidden: Vec::new(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("no training examples")]
    Empty,
    #[error("example {index} has dimension {found}, expected {expected}")]
    Dimension { index: usize, expected: usize, found: usize },
    #[error("invalid hyperparameters: {0}")]
    Hyperparameters(String),
    #[error("training diverged (non-finite loss) at epoch {epoch} with learning rate {learning_rate}")]
    Diverged { learning_rate: f64, epoch: usize },
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input has dimension {actual}, model expects {expected}")]
    Dimension { expected: usize, actual: usize },
    #[error("model file: {0}")]
    Io(#[from] io::Error),
    #[error("model file is malformed: {0}")]
    Format(#[from] serde_json::Error),
    #[error("model file version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("model file is inconsistent: {0}")]
    Corrupt(String),
}

/// A trained classifier together with what it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackModel {
    pub kind: ModelKind,
    pub label_type: LabelType,
    pub feature_spec: Option<FeatureSpec>,
    pub vocab_fingerprint: Option<String>,
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
    pub final_loss: Option<f64>,
    pub parameters: Network,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    #[serde(flatten)]
    model: AttackModel,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: Option<u32>,
}

impl AttackModel {
    /// Logistic regression with all parameters zero.
    pub fn zeroed_lr(dim: usize, label_type: LabelType) -> Self {
        AttackModel {
            kind: ModelKind::LogisticRegression,
            label_type,
            feature_spec: None,
            vocab_fingerprint: None,
            hyperparameters: Hyperparameters::default(),
            seed: 0,
            final_loss: None,
            parameters: Network {
                layers: vec![Dense::zeros(dim, 2)],
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.parameters.input_dim()
    }

    /// Record which vocabulary the model's inputs come from.
    pub fn with_vocabulary(mut self, vocab: &Vocabulary) -> Self {
        self.feature_spec = Some(*vocab.spec());
        self.vocab_fingerprint = Some(vocab.fingerprint());
        self
    }

    pub fn check_vocabulary(&self, vocab: &Vocabulary) -> Result<(), ModelError> {
        if vocab.len() != self.dim() {
            return Err(ModelError::Dimension {
                expected: self.dim(),
                actual: vocab.len(),
            });
        }
        if let Some(fp) = &self.vocab_fingerprint {
            if *fp != vocab.fingerprint() {
                return Err(ModelError::Corrupt(
                    "vocabulary fingerprint does not match the model".into(),
                ));
            }
        }
        Ok(())
    }

    /// Softmax output `(p_not_attack, p_attack)`, both strictly inside (0, 1).
    pub fn predict_proba(&self, x: &SparseVector) -> Result<[f64; 2], ModelError> {
        if x.dim != self.dim() {
            return Err(ModelError::Dimension {
                expected: self.dim(),
                actual: x.dim,
            });
        }
        let p = self.parameters.probabilities(x)[1].clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        Ok([1.0 - p, p])
    }

    /// The attack score: second softmax component.
    pub fn score(&self, x: &SparseVector) -> Result<f64, ModelError> {
        Ok(self.predict_proba(x)?[1])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelFile {
            version: MODEL_VERSION,
            model: self.clone(),
        })
        .expect("model serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, ModelError> {
        let probe: VersionProbe = serde_json::from_str(json)?;
        match probe.version {
            Some(MODEL_VERSION) => {}
            other => {
                return Err(ModelError::Version {
                    found: other.unwrap_or(0),
                    expected: MODEL_VERSION,
                })
            }
        }
        let file: ModelFile = serde_json::from_str(json)?;
        file.model.validate()?;
        Ok(file.model)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let layers = &self.parameters.layers;
        if layers.is_empty() {
            return Err(ModelError::Corrupt("no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(ModelError::Corrupt(format!("layer {i} has inconsistent shapes")));
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(ModelError::Corrupt(format!("layer {i} input size mismatch")));
            }
        }
        if layers.last().unwrap().outputs != 2 {
            return Err(ModelError::Corrupt("output layer must have 2 units".into()));
        }
        if self.kind == ModelKind::LogisticRegression && layers.len() != 1 {
            return Err(ModelError::Corrupt("logistic regression with hidden layers".into()));
        }
        if !self.parameters.is_finite() {
            return Err(ModelError::Corrupt("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Train by mini-batch SGD on mean cross-entropy + `l2 / 2 * |W|^2`.
///
/// Initialization and per-epoch shuffling draw from streams derived from
/// `seed`, so the result is a pure function of the inputs.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail validation.
pub fn train(
    examples: &[TrainingExample],
    kind: ModelKind,
    label_type: LabelType,
    hp: &Hyperparameters,
    seed: u64,
) -> Result<AttackModel, TrainError> {
    let first = examples.first().ok_or(TrainError::Empty)?;
    let dim = first.x.dim;
    if let Some((index, e)) = examples.iter().enumerate().find(|(_, e)| e.x.dim != dim) {
        return Err(TrainError::Dimension {
            index,
            expected: dim,
            found: e.x.dim,
        });
    }
    if hp.batch_size == 0
        || hp.epochs == 0
        || !(hp.learning_rate > 0.0)
        || !(hp.l2 >= 0.0)
        || !(hp.learning_rate * hp.l2 < 1.0)
    {
        return Err(TrainError::Hyperparameters(format!("{hp:?}")));
    }
    let hidden: &[usize] = match kind {
        ModelKind::LogisticRegression => &[],
        ModelKind::Mlp => {
            if hp.hidden.is_empty() || hp.hidden.contains(&0) {
                return Err(TrainError::Hyperparameters("MLP needs non-empty hidden sizes".into()));
            }
            &hp.hidden
        }
    };
    let mut net = Network::init(dim, hidden, &mut seed::rng(seed::derive_named(seed, "init")));
    let mut shuffle_rng = seed::rng(seed::derive_named(seed, "shuffle"));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut stepper = Stepper::new(&net);

    for epoch in 0..hp.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(hp.batch_size) {
            let loss = stepper.step(&mut net, examples, batch, hp.learning_rate, hp.l2);
            if !loss.is_finite() {
                return Err(TrainError::Diverged {
                    learning_rate: hp.learning_rate,
                    epoch,
                });
            }
        }
        stepper.fold(&mut net);
        if !net.is_finite() {
            return Err(TrainError::Diverged {
                learning_rate: hp.learning_rate,
                epoch,
            });
        }
    }
    let final_loss = net.objective(examples, hp.l2);
    if !final_loss.is_finite() {
        return Err(TrainError::Diverged {
            learning_rate: hp.learning_rate,
            epoch: hp.epochs,
        });
    }
    Ok(AttackModel {
        kind,
        label_type,
        feature_spec: None,
        vocab_fingerprint: None,
        hyperparameters: Hyperparameters {
            hidden: hidden.to_vec(),
            ..hp.clone()
        },
        seed,
        final_loss: Some(final_loss),
        parameters: net,
    })
}

/// One full-batch gradient-descent step; used to check monotone descent.
pub fn gradient_step(net: &mut Network, examples: &[TrainingExample], learning_rate: f64, l2: f64) -> f64 {
    let batch: Vec<usize> = (0..examples.len()).collect();
    let mut stepper = Stepper::new(net);
    let loss = stepper.step(net, examples, &batch, learning_rate, l2);
    stepper.fold(net);
    loss
}

/// Scratch buffers for SGD steps.
///
/// Weight decay on the sparse first layer is applied lazily: its stored
/// weights are multiplied by `first_scale`, which is folded back in by
/// [`Stepper::fold`].
struct Stepper {
    grads: Vec<Dense>,
    deltas: Vec<Vec<f64>>,
    trace: network::Trace,
    first_scale: f64,
}

impl Stepper {
    fn new(net: &Network) -> Self {
        Stepper {
            grads: net.layers[1..].iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
            deltas: Vec::new(),
            trace: Default::default(),
            first_scale: 1.0,
        }
    }

    fn fold(&mut self, net: &mut Network) {
        if self.first_scale != 1.0 {
            let s = self.first_scale;
            net.layers[0].weights.iter_mut().for_each(|w| *w *= s);
            self.first_scale = 1.0;
        }
    }

    /// Apply one SGD step on `batch`; returns the batch's mean cross-entropy
    /// before the update.
    fn step(&mut self, net: &mut Network, examples: &[TrainingExample], batch: &[usize], lr: f64, l2: f64) -> f64 {
        for g in &mut self.grads {
            g.weights.iter_mut().for_each(|w| *w = 0.0);
            g.bias.iter_mut().for_each(|w| *w = 0.0);
        }
        self.deltas.resize_with(batch.len(), Vec::new);
        let mut loss = 0.0;
        for (k, &i) in batch.iter().enumerate() {
            loss += net.backward(&examples[i], self.first_scale, &mut self.trace, &mut self.grads, &mut self.deltas[k]);
        }
        let scale = lr / batch.len() as f64;
        let decay = 1.0 - lr * l2;
        for (layer, g) in net.layers[1..].iter_mut().zip(&self.grads) {
            for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
                *w = decay * *w - scale * gw;
            }
            for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                *b -= scale * gb;
            }
        }
        self.first_scale *= decay;
        if self.first_scale < 1e-6 {
            self.fold(net);
        }
        let step = scale / self.first_scale;
        let first = &mut net.layers[0];
        let out = first.outputs;
        for (k, &i) in batch.iter().enumerate() {
            let delta = &self.deltas[k];
            for (o, d) in delta.iter().enumerate() {
                first.bias[o] -= scale * d;
            }
            for (f, v) in examples[i].x.iter() {
                let row = &mut first.weights[f * out..(f + 1) * out];
                for (w, d) in row.iter_mut().zip(delta) {
                    *w -= step * v * d;
                }
            }
        }
        loss / batch.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn ex(dense: &[f64], y: [f64; 2]) -> TrainingExample {
        TrainingExample {
            x: SparseVector::from_dense(dense),
            y,
        }
    }

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(cross_entropy([0.0, 1.0], [0.0, 1.0]), 0.0);
        let ln2 = std::f64::consts::LN_2;
        assert!((cross_entropy([0.5, 0.5], [0.5, 0.5]) - ln2).abs() < 1e-15);
        assert!((cross_entropy([0.3, 0.7], [0.5, 0.5]) - ln2).abs() < 1e-15);
        // clamped instead of infinite
        assert!((cross_entropy([0.0, 1.0], [1.0, 0.0]) - (-LOG_EPSILON.ln())).abs() < 1e-9);
    }

    #[test]
    fn zero_lr_predicts_half() {
        let m = AttackModel::zeroed_lr(3, LabelType::Empirical);
        assert_eq!(m.predict_proba(&SparseVector::zeros(3)).unwrap(), [0.5, 0.5]);
    }

    #[test]
    fn hand_set_weights_closed_form() {
        let mut m = AttackModel::zeroed_lr(1, LabelType::OneHot);
        m.parameters.layers[0].weights = vec![0.0, 1.0];
        let p = m.predict_proba(&SparseVector::from_dense(&[1.0])).unwrap();
        let e = std::f64::consts::E;
        assert!((p[1] - e / (1.0 + e)).abs() < 1e-15);
        assert!((p[0] - 0.2689).abs() < 1e-4 && (p[1] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = AttackModel::zeroed_lr(3, LabelType::OneHot);
        match m.predict_proba(&SparseVector::zeros(4)) {
            Err(ModelError::Dimension { expected: 3, actual: 4 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn probabilities_stay_open_under_extreme_logits() {
        let mut m = AttackModel::zeroed_lr(1, LabelType::OneHot);
        m.parameters.layers[0].weights = vec![-1e6, 1e6];
        let p = m.predict_proba(&SparseVector::from_dense(&[1.0])).unwrap();
        assert!(p[0] > 0.0 && p[1] < 1.0);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
    }

    fn separable() -> Vec<TrainingExample> {
        let mut out = Vec::new();
        for i in 0..20 {
            let a = 1.0 + (i % 5) as f64 * 0.2;
            out.push(ex(&[a, 0.1], [0.0, 1.0]));
            out.push(ex(&[0.1, a], [1.0, 0.0]));
        }
        out
    }

    #[test]
    fn lr_separates_separable_data() {
        let data = separable();
        let hp = Hyperparameters {
            learning_rate: 0.5,
            l2: 0.0,
            epochs: 50,
            batch_size: 4,
            hidden: vec![],
        };
        let m = train(&data, ModelKind::LogisticRegression, LabelType::OneHot, &hp, 1).unwrap();
        for e in &data {
            let p = m.score(&e.x).unwrap();
            assert_eq!(p > 0.5, e.y[1] == 1.0);
        }
    }

    #[test]
    fn constant_labels_predict_majority() {
        let data: Vec<_> = (0..10).map(|i| ex(&[i as f64 * 0.1, 1.0], [0.0, 1.0])).collect();
        let m = train(&data, ModelKind::LogisticRegression, LabelType::OneHot, &Hyperparameters::default(), 3).unwrap();
        assert!(data.iter().all(|e| m.score(&e.x).unwrap() > 0.5));
    }

    #[test]
    fn mlp_learns_xor() {
        let data = vec![
            ex(&[1.0, 0.0, 1.0], [0.0, 1.0]),
            ex(&[0.0, 1.0, 1.0], [0.0, 1.0]),
            ex(&[1.0, 1.0, 1.0], [1.0, 0.0]),
            ex(&[0.0, 0.0, 1.0], [1.0, 0.0]),
        ];
        let hp = Hyperparameters {
            learning_rate: 0.3,
            l2: 0.0,
            epochs: 2000,
            batch_size: 4,
            hidden: vec![8],
        };
        let m = train(&data, ModelKind::Mlp, LabelType::OneHot, &hp, 11).unwrap();
        for e in &data {
            assert_eq!(m.score(&e.x).unwrap() > 0.5, e.y[1] == 1.0);
        }
    }

    #[test]
    fn divergence_names_learning_rate() {
        let data = separable();
        let hp = Hyperparameters {
            learning_rate: 1e305,
            l2: 0.0,
            epochs: 3,
            batch_size: 2,
            hidden: vec![],
        };
        match train(&data, ModelKind::LogisticRegression, LabelType::OneHot, &hp, 0) {
            Err(TrainError::Diverged { learning_rate, .. }) => assert_eq!(learning_rate, 1e305),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let hp = Hyperparameters::default();
        assert_eq!(
            train(&[], ModelKind::LogisticRegression, LabelType::OneHot, &hp, 0),
            Err(TrainError::Empty)
        );
        let mixed = vec![ex(&[1.0], [1.0, 0.0]), ex(&[1.0, 2.0], [1.0, 0.0])];
        assert!(matches!(
            train(&mixed, ModelKind::LogisticRegression, LabelType::OneHot, &hp, 0),
            Err(TrainError::Dimension { index: 1, .. })
        ));
        assert!(matches!(
            train(&separable(), ModelKind::Mlp, LabelType::OneHot, &hp, 0),
            Err(TrainError::Hyperparameters(_))
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable();
        let hp = Hyperparameters {
            hidden: vec![4],
            ..Hyperparameters::default()
        };
        let a = train(&data, ModelKind::Mlp, LabelType::Empirical, &hp, 5).unwrap();
        let b = train(&data, ModelKind::Mlp, LabelType::Empirical, &hp, 5).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let c = train(&data, ModelKind::Mlp, LabelType::Empirical, &hp, 6).unwrap();
        assert_ne!(a.to_json(), c.to_json());
    }

    #[test]
    fn full_batch_descent_is_monotone() {
        let mut rng = seed::rng(99);
        let data: Vec<_> = (0..6)
            .map(|_| {
                let f = rng.gen_range(0.0..1.0);
                ex(&[rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0), 1.0], [1.0 - f, f])
            })
            .collect();
        for hidden in [vec![], vec![5]] {
            let mut net = Network::init(3, &hidden, &mut seed::rng(1));
            let mut prev = net.objective(&data, 1e-3);
            for _k in 0..200 {
                gradient_step(&mut net, &data, 1e-3, 1e-3);
                let cur = net.objective(&data, 1e-3);
                assert!(cur <= prev + 1e-15, "{hidden:?} step {_k}: {cur} > {prev}");
                prev = cur;
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let data = separable();
        let m = train(&data, ModelKind::LogisticRegression, LabelType::Empirical, &Hyperparameters::default(), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        m.save(&path).unwrap();
        let back = AttackModel::load(&path).unwrap();
        assert_eq!(back, m);
        let mut rng = seed::rng(4);
        for _ in 0..100 {
            let x = SparseVector::from_dense(&[rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0)]);
            assert_eq!(back.score(&x).unwrap().to_bits(), m.score(&x).unwrap().to_bits());
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let m = AttackModel::zeroed_lr(2, LabelType::OneHot);
        let json = m.to_json();
        assert!(matches!(AttackModel::from_json(&json[..json.len() / 2]), Err(ModelError::Format(_))));
        let bumped = json.replace("\"version\":1", "\"version\":7");
        assert!(matches!(
            AttackModel::from_json(&bumped),
            Err(ModelError::Version { found: 7, expected: 1 })
        ));
        let short = json.replace("\"bias\":[0.0,0.0]", "\"bias\":[0.0]");
        assert!(matches!(AttackModel::from_json(&short), Err(ModelError::Corrupt(_))));
    }
}
