use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::Sample;
use crate::rng::seeded;

use super::{softmax, MlpModel};

/// Mini-batch SGD hyperparameters for the desk classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of the training set held out for the accuracy gate.
    pub holdout_fraction: f64,
    pub accuracy_gate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            epochs: 60,
            batch_size: 32,
            learning_rate: 0.05,
            holdout_fraction: 0.1,
            accuracy_gate: 0.9,
            seed: 0,
        }
    }
}

/// Fraction of samples whose argmax prediction equals the label.
pub fn accuracy(model: &MlpModel, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("accuracy of an empty set"));
    }
    let mut hits = 0usize;
    for s in samples {
        if model.forward(&s.x)?.argmax() == s.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Trains a relu MLP with softmax cross-entropy. Reproducible bit for bit
/// under a fixed seed. Fails if the held-out accuracy misses the gate.
pub fn train_mlp(train_set: &[Sample], cfg: &TrainConfig) -> Result<MlpModel> {
    let first = train_set
        .first()
        .ok_or_else(|| Error::invalid("cannot train on an empty dataset"))?;
    let d = first.x.len();
    if d == 0 {
        return Err(Error::invalid("samples have no features"));
    }
    for (row, s) in train_set.iter().enumerate() {
        if s.x.len() != d {
            return Err(Error::Dataset {
                row,
                msg: format!("expected {d} features, found {}", s.x.len()),
            });
        }
    }
    let num_classes = train_set.iter().map(|s| s.label).max().unwrap_or(0) + 1;
    if num_classes < 2 {
        return Err(Error::invalid(
            "training data must contain at least two classes",
        ));
    }
    if cfg.batch_size == 0 || cfg.learning_rate <= 0.0 {
        return Err(Error::invalid(
            "batch size and learning rate must be positive",
        ));
    }
    if !(0.0..1.0).contains(&cfg.holdout_fraction) {
        return Err(Error::invalid("holdout fraction must lie in [0, 1)"));
    }

    let mut rng = seeded(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    order.shuffle(&mut rng);
    let n_hold = (train_set.len() as f64 * cfg.holdout_fraction).round() as usize;
    let (hold_idx, fit_idx) = order.split_at(n_hold);
    let mut fit_idx = fit_idx.to_vec();
    if fit_idx.is_empty() {
        return Err(Error::invalid("holdout leaves no training samples"));
    }

    let mut dims = vec![d];
    dims.extend(&cfg.hidden);
    dims.push(num_classes);
    let mut model = MlpModel::random(&dims, 1.0, &mut rng);

    for _ in 0..cfg.epochs {
        fit_idx.shuffle(&mut rng);
        for batch in fit_idx.chunks(cfg.batch_size) {
            sgd_step(&mut model, train_set, batch, cfg.learning_rate);
        }
    }

    if n_hold > 0 {
        let held: Vec<Sample> = hold_idx.iter().map(|&i| train_set[i].clone()).collect();
        let acc = accuracy(&model, &held)?;
        if acc < cfg.accuracy_gate {
            return Err(Error::TrainingGate {
                accuracy: acc,
                gate: cfg.accuracy_gate,
            });
        }
    }
    Ok(model)
}

fn sgd_step(model: &mut MlpModel, data: &[Sample], batch: &[usize], lr: f64) {
    let mut grad_w: Vec<Vec<f64>> = model
        .layers()
        .iter()
        .map(|l| vec![0.0; l.weights().len()])
        .collect();
    let mut grad_b: Vec<Vec<f64>> = model
        .layers()
        .iter()
        .map(|l| vec![0.0; l.bias().len()])
        .collect();

    for &i in batch {
        let sample = &data[i];
        let trace = model.trace(&sample.x);
        let mut upstream = softmax(&trace.logits);
        upstream[sample.label] -= 1.0;

        for (l, layer) in model.layers().iter().enumerate().rev() {
            let pre = &trace.pre[l];
            let input = &trace.inputs[l];
            let dz: Vec<f64> = upstream
                .iter()
                .zip(pre)
                .map(|(u, &z)| u * layer.activation.derivative(z))
                .collect();
            let in_dim = layer.in_dim();
            for (o, &g) in dz.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                grad_b[l][o] += g;
                let row = &mut grad_w[l][o * in_dim..(o + 1) * in_dim];
                for (w, a) in row.iter_mut().zip(input) {
                    *w += g * a;
                }
            }
            if l > 0 {
                let mut down = vec![0.0; in_dim];
                for (o, &g) in dz.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    for (dn, w) in down.iter_mut().zip(layer.row(o)) {
                        *dn += g * w;
                    }
                }
                upstream = down;
            }
        }
    }

    let scale = lr / batch.len() as f64;
    for (l, layer) in model.layers_mut().iter_mut().enumerate() {
        for (w, g) in layer.weights_mut().iter_mut().zip(&grad_w[l]) {
            *w -= scale * g;
        }
        for (b, g) in layer.bias_mut().iter_mut().zip(&grad_b[l]) {
            *b -= scale * g;
        }
    }
}
