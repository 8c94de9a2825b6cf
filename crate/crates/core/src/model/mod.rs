//! Feed-forward softmax classifier, its black-box query surface, weight file
//! I/O and a seeded trainer.

mod io;
mod ledger;
mod prob;
mod train;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

pub use io::{load_model, parse_model, save_model, write_model};
pub use ledger::{query, QueryLedger};
pub use prob::{ProbVector, P_MIN};
pub use train::{accuracy, train_mlp, TrainConfig};

/// Anything that maps an input vector to class probabilities.
///
/// Attackers never call this directly; black-box access goes through
/// [`query`], which charges a [`QueryLedger`].
pub trait Classifier: Sync {
    fn input_dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn predict(&self, x: &[f64]) -> Result<ProbVector>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Dense layer `act(W a + b)` with `W` stored row-major (`out × in`).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    out_dim: usize,
    in_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl Layer {
    pub fn new(
        out_dim: usize,
        in_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if out_dim == 0 || in_dim == 0 {
            return Err(Error::invalid("layer dimensions must be positive"));
        }
        check_len(weights.len(), out_dim * in_dim)?;
        check_len(bias.len(), out_dim)?;
        Ok(Self {
            out_dim,
            in_dim,
            weights,
            bias,
            activation,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.in_dim..(i + 1) * self.in_dim]
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub(crate) fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    fn pre_activation(&self, input: &[f64]) -> Vec<f64> {
        (0..self.out_dim)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(input)
                    .fold(self.bias[i], |acc, (w, a)| acc + w * a)
            })
            .collect()
    }

    /// Given dL/d(output), returns dL/d(input).
    fn backward_input(&self, pre: &[f64], upstream: &[f64]) -> Vec<f64> {
        let mut down = vec![0.0; self.in_dim];
        for i in 0..self.out_dim {
            let dz = upstream[i] * self.activation.derivative(pre[i]);
            if dz == 0.0 {
                continue;
            }
            for (d, w) in down.iter_mut().zip(self.row(i)) {
                *d += dz * w;
            }
        }
        down
    }
}

/// Softmax multi-layer perceptron.
///
/// Invariant: layer dimensions chain from `input_dim` to `num_classes >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
}

/// Per-layer pre-activations and outputs from one forward pass.
pub(crate) struct Trace {
    pub inputs: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

impl MlpModel {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::invalid("model needs at least one layer"))?;
        let mut prev = first.in_dim;
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_dim != prev {
                return Err(Error::DimensionChain {
                    layer: i,
                    expected: prev,
                    found: layer.in_dim,
                });
            }
            prev = layer.out_dim;
        }
        if prev < 2 {
            return Err(Error::invalid("a classifier needs at least two classes"));
        }
        Ok(Self { layers })
    }

    /// All-zero weights: relu hidden layers, identity output.
    /// Its output is uniform for every input.
    pub fn zeros(dims: &[usize]) -> Self {
        Self::build(dims, |_, _| 0.0)
    }

    /// Gaussian weights with standard deviation `scale * sqrt(2 / fan_in)`
    /// and zero biases; relu hidden layers, identity output.
    pub fn random<R: Rng + ?Sized>(dims: &[usize], scale: f64, rng: &mut R) -> Self {
        Self::build(dims, |fan_in, _| {
            let z: f64 = rng.sample(StandardNormal);
            z * scale * (2.0 / fan_in as f64).sqrt()
        })
    }

    fn build(dims: &[usize], mut weight: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let (fan_in, fan_out) = (dims[l], dims[l + 1]);
                let weights = (0..fan_in * fan_out).map(|k| weight(fan_in, k)).collect();
                let activation = if l + 1 == n {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                Layer::new(fan_out, fan_in, weights, vec![0.0; fan_out], activation)
                    .expect("dims are positive")
            })
            .collect();
        Self::new(layers).expect("dims chain by construction")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn num_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub(crate) fn trace(&self, x: &[f64]) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for layer in &self.layers {
            let z = layer.pre_activation(&a);
            let out = z.iter().map(|&v| layer.activation.apply(v)).collect();
            inputs.push(std::mem::replace(&mut a, out));
            pre.push(z);
        }
        Trace {
            inputs,
            pre,
            logits: a,
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(x.len(), self.input_dim())?;
        Ok(self.trace(x).logits)
    }

    /// Class probabilities, floored at [`P_MIN`].
    pub fn forward(&self, x: &[f64]) -> Result<ProbVector> {
        Ok(ProbVector::from_logits(&self.logits(x)?))
    }

    /// Unfloored log-softmax, accurate even for tiny probabilities.
    pub fn log_probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.logits(x)?;
        Ok(log_softmax(&z))
    }

    fn backward(&self, trace: &Trace, upstream: Vec<f64>) -> Vec<f64> {
        let mut grad = upstream;
        for (layer, pre) in self.layers.iter().zip(&trace.pre).rev() {
            grad = layer.backward_input(pre, &grad);
        }
        grad
    }

    /// Exact ∇ₓ log p(t | x) by reverse-mode differentiation.
    pub fn grad_logp_exact(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        check_len(x.len(), self.input_dim())?;
        self.check_class(t)?;
        let trace = self.trace(x);
        let p = softmax(&trace.logits);
        let upstream = p
            .iter()
            .enumerate()
            .map(|(i, &pi)| if i == t { 1.0 - pi } else { -pi })
            .collect();
        Ok(self.backward(&trace, upstream))
    }

    /// Scores ∇ₓ log p(i | x) for every class `i`, plus the unfloored
    /// probabilities they were computed at.
    pub fn scores_all(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        check_len(x.len(), self.input_dim())?;
        let trace = self.trace(x);
        let p = softmax(&trace.logits);
        let num_classes = self.num_classes();
        let jacobian: Vec<Vec<f64>> = (0..num_classes)
            .map(|k| {
                let mut e = vec![0.0; num_classes];
                e[k] = 1.0;
                self.backward(&trace, e)
            })
            .collect();
        let d = self.input_dim();
        let mut mean = vec![0.0; d];
        for (pk, row) in p.iter().zip(&jacobian) {
            for (m, j) in mean.iter_mut().zip(row) {
                *m += pk * j;
            }
        }
        let scores = jacobian
            .into_iter()
            .map(|row| row.iter().zip(&mean).map(|(j, m)| j - m).collect())
            .collect();
        Ok((p, scores))
    }

    /// Smallest |pre-activation| over all relu units at `x`; the model is
    /// smooth within that distance (scaled by the weights) of `x`.
    pub fn min_relu_margin(&self, x: &[f64]) -> Result<f64> {
        check_len(x.len(), self.input_dim())?;
        let trace = self.trace(x);
        Ok(self
            .layers
            .iter()
            .zip(&trace.pre)
            .filter(|(l, _)| l.activation == Activation::Relu)
            .flat_map(|(_, z)| z.iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min))
    }

    fn check_class(&self, t: usize) -> Result<()> {
        if t < self.num_classes() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "label {t} out of range for {} classes",
                self.num_classes()
            )))
        }
    }
}

impl Classifier for MlpModel {
    fn input_dim(&self) -> usize {
        MlpModel::input_dim(self)
    }

    fn num_classes(&self) -> usize {
        MlpModel::num_classes(self)
    }

    fn predict(&self, x: &[f64]) -> Result<ProbVector> {
        self.forward(x)
    }
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

pub(crate) fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}
