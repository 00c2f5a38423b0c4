//! Feed-forward network with a sparse input layer and a 2-way softmax output.
//!
//! A network with a single layer is logistic regression. Hidden layers use
//! the rectifier. Weights of a layer are stored input-major:
//! `weights[i * outputs + o]`, so a sparse input only touches the rows of
//! its non-zero features.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::features::SparseVector;

use super::{cross_entropy, TrainingExample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform in `[-a, a]` with `a = sqrt(6 / fan_in)`; zero biases.
    pub fn init<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let a = (6.0 / inputs.max(1) as f64).sqrt();
        Dense {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.gen_range(-a..=a)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    /// `bias + scale * W^T x`.
    fn forward_sparse(&self, x: &SparseVector, scale: f64, out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.outputs, 0.0);
        for (i, v) in x.iter() {
            let row = &self.weights[i * self.outputs..(i + 1) * self.outputs];
            for (o, w) in out.iter_mut().zip(row) {
                *o += v * w;
            }
        }
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o = *o * scale + b;
        }
    }

    fn forward_dense(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.bias);
        for (i, &v) in x.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let row = &self.weights[i * self.outputs..(i + 1) * self.outputs];
            for (o, w) in out.iter_mut().zip(row) {
                *o += v * w;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Dense>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Default)]
pub(crate) struct Trace {
    /// Pre-activations of every layer; the last entry holds the logits.
    pre: Vec<Vec<f64>>,
    /// Rectified outputs of the hidden layers.
    post: Vec<Vec<f64>>,
}

pub(crate) fn softmax2(logits: &[f64]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

impl Network {
    /// Input dimension -> hidden sizes -> 2 outputs.
    pub fn init<R: Rng>(dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2);
        Network {
            layers: sizes.windows(2).map(|w| Dense::init(w[0], w[1], rng)).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.outputs).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub(crate) fn forward(&self, x: &SparseVector, trace: &mut Trace) -> [f64; 2] {
        self.forward_scaled(x, 1.0, trace)
    }

    /// Forward pass with the first layer's weights multiplied by `first_scale`.
    fn forward_scaled(&self, x: &SparseVector, first_scale: f64, trace: &mut Trace) -> [f64; 2] {
        let depth = self.layers.len();
        trace.pre.resize_with(depth, Vec::new);
        trace.post.resize_with(depth - 1, Vec::new);
        self.layers[0].forward_sparse(x, first_scale, &mut trace.pre[0]);
        for l in 1..depth {
            let act = &mut trace.post[l - 1];
            act.clear();
            act.extend(trace.pre[l - 1].iter().map(|z| z.max(0.0)));
            self.layers[l].forward_dense(&trace.post[l - 1], &mut trace.pre[l]);
        }
        softmax2(&trace.pre[depth - 1])
    }

    /// Raw softmax output.
    pub fn probabilities(&self, x: &SparseVector) -> [f64; 2] {
        self.forward(x, &mut Trace::default())
    }

    /// Sum of squared weights (biases are not penalized).
    pub fn weight_norm_sq(&self) -> f64 {
        self.layers.iter().flat_map(|l| &l.weights).map(|w| w * w).sum()
    }

    /// Mean cross-entropy plus `l2 / 2 * |W|^2`.
    pub fn objective(&self, examples: &[TrainingExample], l2: f64) -> f64 {
        let mut trace = Trace::default();
        let ce: f64 = examples
            .iter()
            .map(|e| cross_entropy(e.y, self.forward(&e.x, &mut trace)))
            .sum::<f64>()
            / examples.len() as f64;
        ce + 0.5 * l2 * self.weight_norm_sq()
    }

    /// Backpropagate one example and return its cross-entropy.
    ///
    /// Gradients of `layers[1..]` are added into `grads`; the error at the
    /// first layer's outputs is written to `first_delta`, leaving the sparse
    /// first-layer update to the caller. The first layer's stored weights
    /// are taken to be multiplied by `first_scale`.
    pub(crate) fn backward(
        &self,
        example: &TrainingExample,
        first_scale: f64,
        trace: &mut Trace,
        grads: &mut [Dense],
        first_delta: &mut Vec<f64>,
    ) -> f64 {
        let yhat = self.forward_scaled(&example.x, first_scale, trace);
        let loss = cross_entropy(example.y, yhat);
        let depth = self.layers.len();
        let mut delta = vec![yhat[0] - example.y[0], yhat[1] - example.y[1]];
        for l in (1..depth).rev() {
            let layer = &self.layers[l];
            let input = &trace.post[l - 1];
            let g = &mut grads[l - 1];
            for (o, d) in delta.iter().enumerate() {
                g.bias[o] += d;
            }
            let mut prev = vec![0.0; layer.inputs];
            for i in 0..layer.inputs {
                let row = &layer.weights[i * layer.outputs..(i + 1) * layer.outputs];
                let grow = &mut g.weights[i * layer.outputs..(i + 1) * layer.outputs];
                let a = input[i];
                let mut back = 0.0;
                for o in 0..layer.outputs {
                    grow[o] += a * delta[o];
                    back += row[o] * delta[o];
                }
                prev[i] = if trace.pre[l - 1][i] > 0.0 { back } else { 0.0 };
            }
            delta = prev;
        }
        first_delta.clear();
        first_delta.extend_from_slice(&delta);
        loss
    }

    /// Full-batch objective and gradient, flattened in [`Network::flat_params`] order.
    pub fn objective_gradient(&self, examples: &[TrainingExample], l2: f64) -> (f64, Vec<f64>) {
        let mut grads: Vec<Dense> = self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect();
        let mut trace = Trace::default();
        let mut delta = Vec::new();
        let mut loss = 0.0;
        for e in examples {
            let (first, rest) = grads.split_at_mut(1);
            loss += self.backward(e, 1.0, &mut trace, rest, &mut delta);
            let g0 = &mut first[0];
            for (o, d) in delta.iter().enumerate() {
                g0.bias[o] += d;
            }
            for (i, v) in e.x.iter() {
                for (o, d) in delta.iter().enumerate() {
                    g0.weights[i * g0.outputs + o] += v * d;
                }
            }
        }
        let n = examples.len() as f64;
        let mut flat = Vec::new();
        for (g, layer) in grads.iter().zip(&self.layers) {
            flat.extend(g.weights.iter().zip(&layer.weights).map(|(g, w)| g / n + l2 * w));
            flat.extend(g.bias.iter().map(|g| g / n));
        }
        (loss / n + 0.5 * l2 * self.weight_norm_sq(), flat)
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, params: &[f64]) {
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().expect("parameter vector too short");
            }
        }
        assert!(it.next().is_none(), "parameter vector too long");
    }
}
