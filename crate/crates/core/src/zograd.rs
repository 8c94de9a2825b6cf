//! Random-direction zeroth-order estimation.
//!
//! One base query at `x + δ` and `R` queries at `x + δ + μ u_j` are shared by
//! two estimators: the loss gradient
//! `(1/R) Σ_j [f(δ + μu_j) − f(δ)] / μ · u_j` and the score
//! `(1/(Rμ)) Σ_j [log p(t | δ + μu_j) − log p(t | δ)] · u_j`.
//! The score is what feeds the Fisher information, so it costs no extra
//! queries.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::loss::attack_loss;
use crate::model::{query, Classifier, ProbVector, QueryLedger};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionMode {
    /// `u ~ N(0, I_d)`.
    #[default]
    Gaussian,
    /// Gaussian draw normalised to unit L2 norm.
    UnitSphere,
}

impl std::str::FromStr for DirectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(DirectionMode::Gaussian),
            "unit-sphere" => Ok(DirectionMode::UnitSphere),
            _ => Err(Error::Usage(format!(
                "unknown direction mode `{s}` (expected gaussian or unit-sphere)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionBatch {
    pub directions: Vec<Vec<f64>>,
    pub mode: DirectionMode,
}

impl DirectionBatch {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

pub fn sample_directions<R: Rng + ?Sized>(
    r: usize,
    d: usize,
    mode: DirectionMode,
    rng: &mut R,
) -> Result<DirectionBatch> {
    if r == 0 || d == 0 {
        return Err(Error::invalid(
            "need at least one direction of positive dimension",
        ));
    }
    let directions = (0..r)
        .map(|_| {
            let mut u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            if mode == DirectionMode::UnitSphere {
                let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                for v in &mut u {
                    *v /= norm;
                }
            }
            u
        })
        .collect();
    Ok(DirectionBatch { directions, mode })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradEstimate {
    /// Estimated ∇f(δ).
    pub grad_f: Vec<f64>,
    /// Estimated ∇ log p(t | x, δ).
    pub score: Vec<f64>,
    pub queries_used: u64,
    /// Probabilities from the base query at `x + δ`.
    pub base: ProbVector,
}

/// Full estimate: base query plus `R` direction queries (`R + 1` total).
#[allow(clippy::too_many_arguments)]
pub fn estimate_gradients<C: Classifier + ?Sized>(
    model: &C,
    ledger: &QueryLedger,
    x: &[f64],
    delta: &[f64],
    t: usize,
    mu: f64,
    batch: &DirectionBatch,
    kappa: f64,
) -> Result<GradEstimate> {
    check_len(delta.len(), x.len())?;
    check_mu(mu)?;
    let point: Vec<f64> = x.iter().zip(delta).map(|(a, b)| a + b).collect();
    let base = query(model, ledger, &point)?;
    let mut est = estimate_from_base(model, ledger, x, delta, t, mu, batch, kappa, base)?;
    est.queries_used += 1;
    Ok(est)
}

/// The `R` direction queries only, reusing an already paid-for base query.
/// Attack loops use this so they can stop on the base query before spending
/// the rest of the iteration.
#[allow(clippy::too_many_arguments)]
pub fn estimate_from_base<C: Classifier + ?Sized>(
    model: &C,
    ledger: &QueryLedger,
    x: &[f64],
    delta: &[f64],
    t: usize,
    mu: f64,
    batch: &DirectionBatch,
    kappa: f64,
    base: ProbVector,
) -> Result<GradEstimate> {
    let d = x.len();
    check_len(delta.len(), d)?;
    check_mu(mu)?;
    if batch.is_empty() {
        return Err(Error::invalid("empty direction batch"));
    }
    for u in &batch.directions {
        check_len(u.len(), d)?;
    }
    let f0 = attack_loss(&base, t, kappa)?;
    let logp0 = base.ln(t);

    let mut grad_f = vec![0.0; d];
    let mut score = vec![0.0; d];
    let mut point = vec![0.0; d];
    // Sequential accumulation in index order keeps results reproducible.
    for u in &batch.directions {
        for (((p, xi), di), ui) in point.iter_mut().zip(x).zip(delta).zip(u) {
            *p = xi + di + mu * ui;
        }
        let probs = query(model, ledger, &point)?;
        let df = attack_loss(&probs, t, kappa)? - f0;
        let dlogp = probs.ln(t) - logp0;
        for ((g, s), ui) in grad_f.iter_mut().zip(score.iter_mut()).zip(u) {
            *g += df * ui;
            *s += dlogp * ui;
        }
    }
    let scale = 1.0 / (batch.len() as f64 * mu);
    for v in grad_f.iter_mut().chain(score.iter_mut()) {
        *v *= scale;
    }
    Ok(GradEstimate {
        grad_f,
        score,
        queries_used: batch.len() as u64,
        base,
    })
}

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("smoothing step mu must be positive"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, Layer, MlpModel};
    use crate::rng::seeded;

    #[test]
    fn unit_sphere_directions_have_unit_norm() {
        let b = sample_directions(50, 17, DirectionMode::UnitSphere, &mut seeded(1)).unwrap();
        for u in &b.directions {
            let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn same_seed_same_batch() {
        let a = sample_directions(5, 3, DirectionMode::Gaussian, &mut seeded(9)).unwrap();
        let b = sample_directions(5, 3, DirectionMode::Gaussian, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_moments() {
        let b = sample_directions(100_000, 4, DirectionMode::Gaussian, &mut seeded(2)).unwrap();
        let n = b.len() as f64;
        for k in 0..4 {
            let mean = b.directions.iter().map(|u| u[k]).sum::<f64>() / n;
            let var = b
                .directions
                .iter()
                .map(|u| (u[k] - mean).powi(2))
                .sum::<f64>()
                / n;
            assert!(mean.abs() < 0.02, "mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "var {var}");
        }
    }

    #[test]
    fn degenerate_sizes_rejected() {
        assert!(sample_directions(0, 3, DirectionMode::Gaussian, &mut seeded(0)).is_err());
        assert!(sample_directions(3, 0, DirectionMode::Gaussian, &mut seeded(0)).is_err());
    }

    #[test]
    fn constant_model_gives_zero_estimates() {
        let m = MlpModel::zeros(&[6, 4, 3]);
        let ledger = QueryLedger::unlimited();
        let batch = sample_directions(10, 6, DirectionMode::Gaussian, &mut seeded(3)).unwrap();
        let est =
            estimate_gradients(&m, &ledger, &[0.5; 6], &[0.0; 6], 0, 0.5, &batch, 0.0).unwrap();
        assert!(est.grad_f.iter().all(|&v| v == 0.0));
        assert!(est.score.iter().all(|&v| v == 0.0));
        assert_eq!(est.queries_used, 11);
        assert_eq!(ledger.count(), 11);
    }

    #[test]
    fn nonpositive_mu_rejected() {
        let m = MlpModel::zeros(&[2, 2]);
        let ledger = QueryLedger::unlimited();
        let batch = sample_directions(2, 2, DirectionMode::Gaussian, &mut seeded(3)).unwrap();
        for mu in [0.0, -1.0] {
            assert!(
                estimate_gradients(&m, &ledger, &[0.5; 2], &[0.0; 2], 0, mu, &batch, 0.0).is_err()
            );
        }
        assert_eq!(ledger.count(), 0);
    }

    #[test]
    fn budget_exhaustion_propagates() {
        let m = MlpModel::zeros(&[2, 2]);
        let ledger = QueryLedger::new(Some(3));
        let batch = sample_directions(5, 2, DirectionMode::Gaussian, &mut seeded(3)).unwrap();
        let err =
            estimate_gradients(&m, &ledger, &[0.5; 2], &[0.0; 2], 0, 0.1, &batch, 0.0).unwrap_err();
        assert!(matches!(err, Error::BudgetExhausted { budget: 3 }));
        assert_eq!(ledger.count(), 3);
    }

    #[test]
    fn linear_margin_gradient_is_recovered() {
        // Two-class linear model: log p_0 − log p_1 = aᵀv + 2, so f(δ) is
        // affine in δ with slope a.
        let a = [0.8, -1.2, 0.3, 2.0, -0.5];
        let mut w = a.to_vec();
        w.extend([0.0; 5]);
        let layer = Layer::new(2, 5, w, vec![2.0, 0.0], Activation::Identity).unwrap();
        let m = MlpModel::new(vec![layer]).unwrap();
        let ledger = QueryLedger::unlimited();
        let batch = sample_directions(20_000, 5, DirectionMode::Gaussian, &mut seeded(4)).unwrap();
        let x = [0.5; 5];
        let est = estimate_gradients(&m, &ledger, &x, &[0.0; 5], 0, 1e-3, &batch, 10.0).unwrap();
        let err: f64 = est
            .grad_f
            .iter()
            .zip(&a)
            .map(|(g, a)| (g - a).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err / norm < 0.05, "rel err {}", err / norm);
    }
}
