//! Grid sweeps over `μ`, `ε` and `γ`.

use serde::{Deserialize, Serialize};

use crate::attack::{AttackConfig, Method};
use crate::error::{Error, Result};
use crate::model::MlpModel;

use super::campaign::{run_campaign, run_campaign_on, select_images, CampaignReport};
use super::Sample;

/// Axis values; an empty axis keeps the base configuration's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub mu: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl AblationGrid {
    /// The Cartesian product, `μ` slowest and `γ` fastest.
    pub fn configs(&self, base: &AttackConfig) -> Result<Vec<AttackConfig>> {
        if self.mu.is_empty() && self.epsilon.is_empty() && self.gamma.is_empty() {
            return Err(Error::invalid("ablation grid has no points"));
        }
        let axis = |v: &[f64], default: f64| {
            if v.is_empty() {
                vec![default]
            } else {
                v.to_vec()
            }
        };
        let mut out = Vec::new();
        for mu in axis(&self.mu, base.mu) {
            for epsilon in axis(&self.epsilon, base.epsilon) {
                for gamma in axis(&self.gamma, base.gamma) {
                    out.push(AttackConfig {
                        mu,
                        epsilon,
                        gamma,
                        ..base.clone()
                    });
                }
            }
        }
        Ok(out)
    }
}

/// One campaign per grid point, in grid order.
pub fn run_ablation(
    model: &MlpModel,
    dataset: &[Sample],
    base: &AttackConfig,
    grid: &AblationGrid,
    n_images: usize,
) -> Result<Vec<CampaignReport>> {
    grid.configs(base)?
        .iter()
        .map(|cfg| run_campaign(model, dataset, cfg, n_images))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSweepRow {
    pub gamma: f64,
    /// Mean attack loss at the last base query.
    pub mean_final_loss: f64,
    pub success_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSweepReport {
    pub iterations: usize,
    pub images: usize,
    pub rows: Vec<GammaSweepRow>,
    /// Damping with the lowest mean loss (first on ties).
    pub best_gamma: f64,
}

/// Runs ZO-NGD for a fixed number of iterations per damping value on the
/// same images and compares the final losses.
pub fn gamma_sweep(
    model: &MlpModel,
    dataset: &[Sample],
    base: &AttackConfig,
    gammas: &[f64],
    iterations: usize,
    n_images: usize,
) -> Result<GammaSweepReport> {
    if gammas.is_empty() {
        return Err(Error::invalid("gamma sweep needs at least one value"));
    }
    if dataset.is_empty() {
        return Err(Error::invalid("campaign dataset is empty"));
    }
    let pool = select_images(model, dataset, base.seed)?;
    let chosen = &pool[..n_images.min(pool.len())];
    if chosen.is_empty() {
        return Err(Error::invalid(
            "no correctly classified images to sweep over",
        ));
    }
    let mut rows = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let cfg = AttackConfig {
            method: Method::ZoNgd,
            gamma,
            max_iters: iterations,
            max_queries: None,
            ..base.clone()
        };
        let report = run_campaign_on(model, dataset, &cfg, chosen, chosen.len())?;
        let total: f64 = report
            .records
            .iter()
            .map(|r| *r.result.loss_trace.last().expect("at least one base query"))
            .sum();
        rows.push(GammaSweepRow {
            gamma,
            mean_final_loss: total / report.records.len() as f64,
            success_rate: report.summary.success_rate,
        });
    }
    let best_gamma = rows
        .iter()
        .fold(&rows[0], |best, r| {
            if r.mean_final_loss < best.mean_final_loss {
                r
            } else {
                best
            }
        })
        .gamma;
    Ok(GammaSweepReport {
        iterations,
        images: chosen.len(),
        rows,
        best_gamma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_grid_rejected() {
        assert!(AblationGrid::default()
            .configs(&AttackConfig::default())
            .is_err());
    }

    #[test]
    fn cartesian_product_order() {
        let grid = AblationGrid {
            mu: vec![0.5, 1.0],
            epsilon: vec![0.1, 0.2, 0.3],
            gamma: vec![],
        };
        let cfgs = grid.configs(&AttackConfig::default()).unwrap();
        assert_eq!(cfgs.len(), 6);
        assert_eq!((cfgs[0].mu, cfgs[0].epsilon), (0.5, 0.1));
        assert_eq!((cfgs[5].mu, cfgs[5].epsilon), (1.0, 0.3));
        assert!(cfgs.iter().all(|c| c.gamma == 0.01));
    }
}
