use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to every probability before it can reach a logarithm.
pub const P_MIN: f64 = 1e-12;

/// A categorical distribution over `T` classes, floored at [`P_MIN`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Wraps raw probabilities. They must be nonnegative and sum to one
    /// within 1e-6; the floor is applied afterwards.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("empty probability vector"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid(
                "probabilities must be finite and nonnegative",
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self::floored(probs))
    }

    /// Numerically stable softmax (max-logit subtraction), then floored.
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= sum;
        }
        Self::floored(probs)
    }

    fn floored(mut probs: Vec<f64>) -> Self {
        for p in &mut probs {
            if *p < P_MIN {
                *p = P_MIN;
            }
        }
        Self(probs)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }

    pub fn ln(&self, class: usize) -> f64 {
        self.0[class].ln()
    }

    /// Index of the largest probability; ties go to the smallest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let p = ProbVector::from_logits(&[0.0, 0.0]);
        assert_eq!(p.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn huge_logits_stay_finite_and_floored() {
        let p = ProbVector::from_logits(&[1000.0, -1000.0, 0.0]);
        assert!(p.as_slice().iter().all(|v| v.is_finite()));
        assert_eq!(p.get(1), P_MIN);
        assert!(p.ln(1).is_finite());
    }

    #[test]
    fn argmax_tie_goes_to_smallest_index() {
        let p = ProbVector::new(vec![0.25, 0.25, 0.5]).unwrap();
        assert_eq!(p.argmax(), 2);
        let p = ProbVector::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(p.argmax(), 0);
    }

    #[test]
    fn rejects_bad_sums() {
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVector::new(vec![]).is_err());
    }
}
