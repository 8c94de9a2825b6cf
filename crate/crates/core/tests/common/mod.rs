#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};

use zongd::harness::{load_dataset, Sample};
use zongd::model::{load_model, Classifier, MlpModel, ProbVector};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn desk_model() -> MlpModel {
    load_model(&data_dir().join("desk_mlp.txt")).expect("desk model")
}

pub fn desk_test_set() -> Vec<Sample> {
    load_dataset(&data_dir().join("digits_test.csv")).expect("desk test set")
}

/// Counts every call that reaches the wrapped model.
pub struct Counting<C> {
    pub inner: C,
    pub calls: AtomicU64,
}

impl<C> Counting<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<C: Classifier> Classifier for Counting<C> {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn predict(&self, x: &[f64]) -> zongd::Result<ProbVector> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.predict(x)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    dot / (na * nb)
}
