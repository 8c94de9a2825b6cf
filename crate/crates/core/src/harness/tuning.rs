//! Step-size tuning on a split disjoint from the comparison images.
//!
//! Every method is tuned over the same absolute grid with the same rule:
//! highest success rate, then lowest median queries, then the smaller step.

use serde::{Deserialize, Serialize};

use crate::attack::AttackConfig;
use crate::error::{Error, Result};
use crate::model::MlpModel;

use super::campaign::{run_campaign_on, select_images, CampaignReport};
use super::Sample;

/// Shared candidate step sizes.
pub const STEP_GRID: [f64; 5] = [0.002, 0.005, 0.01, 0.02, 0.05];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningPoint {
    pub lr: f64,
    pub success_rate: Option<f64>,
    pub median_queries: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRecord {
    /// Dataset rows used for tuning.
    pub split: Vec<usize>,
    pub candidates: Vec<TuningPoint>,
    pub chosen_lr: f64,
}

fn better(a: &TuningPoint, b: &TuningPoint) -> bool {
    let rate = |p: &TuningPoint| p.success_rate.unwrap_or(0.0);
    let median = |p: &TuningPoint| p.median_queries.unwrap_or(f64::INFINITY);
    if rate(a) != rate(b) {
        return rate(a) > rate(b);
    }
    median(a) < median(b)
}

/// Runs one small campaign per grid point on `split` and picks a step.
pub fn tune_step_size(
    model: &MlpModel,
    dataset: &[Sample],
    config: &AttackConfig,
    split: &[usize],
    grid: &[f64],
) -> Result<TuningRecord> {
    if grid.is_empty() {
        return Err(Error::invalid("empty step-size grid"));
    }
    if split.is_empty() {
        return Err(Error::invalid("empty tuning split"));
    }
    let mut candidates = Vec::with_capacity(grid.len());
    for &lr in grid {
        let cfg = AttackConfig {
            lr: Some(lr),
            ..config.clone()
        };
        let report = run_campaign_on(model, dataset, &cfg, split, split.len())?;
        candidates.push(TuningPoint {
            lr,
            success_rate: report.summary.success_rate,
            median_queries: report.summary.median_queries,
        });
    }
    let mut best = &candidates[0];
    for c in &candidates[1..] {
        if better(c, best) {
            best = c;
        }
    }
    Ok(TuningRecord {
        split: split.to_vec(),
        chosen_lr: best.lr,
        candidates,
    })
}

/// Tunes on the first `n_tune` correctly classified images of the seeded
/// shuffle, then attacks the next `n_images` with the chosen step.
pub fn run_tuned_campaign(
    model: &MlpModel,
    dataset: &[Sample],
    config: &AttackConfig,
    n_images: usize,
    n_tune: usize,
    grid: &[f64],
) -> Result<CampaignReport> {
    if dataset.is_empty() {
        return Err(Error::invalid("campaign dataset is empty"));
    }
    let pool = select_images(model, dataset, config.seed)?;
    if pool.len() <= n_tune {
        return Err(Error::invalid(format!(
            "only {} correctly classified images, need more than {n_tune} to tune",
            pool.len()
        )));
    }
    let (split, rest) = pool.split_at(n_tune);
    let tuning = tune_step_size(model, dataset, config, split, grid)?;
    let cfg = AttackConfig {
        lr: Some(tuning.chosen_lr),
        ..config.clone()
    };
    let chosen = &rest[..n_images.min(rest.len())];
    let mut report = run_campaign_on(model, dataset, &cfg, chosen, n_images)?;
    report.summary.tuning = Some(tuning);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(lr: f64, rate: f64, median: Option<f64>) -> TuningPoint {
        TuningPoint {
            lr,
            success_rate: Some(rate),
            median_queries: median,
        }
    }

    #[test]
    fn selection_rule() {
        assert!(better(
            &pt(0.1, 1.0, Some(500.0)),
            &pt(0.2, 0.9, Some(10.0))
        ));
        assert!(better(&pt(0.1, 0.9, Some(10.0)), &pt(0.2, 0.9, Some(20.0))));
        assert!(!better(
            &pt(0.2, 0.9, Some(10.0)),
            &pt(0.1, 0.9, Some(10.0))
        ));
        assert!(better(&pt(0.1, 0.5, Some(10.0)), &pt(0.2, 0.5, None)));
    }

    #[test]
    fn grid_contains_both_defaults_at_standard_radius() {
        let eps = AttackConfig::default().epsilon;
        assert!(STEP_GRID.contains(&crate::attack::DEFAULT_NGD_LR));
        assert!(STEP_GRID
            .iter()
            .any(|&v| (v - crate::attack::DEFAULT_PGD_LR_PER_EPS * eps).abs() < 1e-15));
    }
}
