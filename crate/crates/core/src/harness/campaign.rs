//! Attack campaigns over a set of correctly classified images.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{run_attack, AttackConfig, AttackResult, Method};
use crate::error::{Error, Result};
use crate::model::MlpModel;
use crate::rng::{derive_seed, seeded};

use super::dataset::check_against_model;
use super::tuning::TuningRecord;
use super::Sample;

/// One attacked image, keyed by its row in the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub index: usize,
    pub label: usize,
    pub result: AttackResult,
}

/// A point of the empirical CDF of successful query counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub queries: u64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub method: Method,
    pub seed: u64,
    pub requested: usize,
    pub attempted: usize,
    pub successes: usize,
    /// Fewer correctly classified images than requested.
    pub shortfall: bool,
    /// `None` when nothing was attempted.
    pub success_rate: Option<f64>,
    /// Mean over successful attacks only; `None` without successes.
    pub avg_queries_successful: Option<f64>,
    /// Median over successful attacks only; `None` without successes.
    pub median_queries: Option<f64>,
    pub total_queries: u64,
    pub config: AttackConfig,
    pub tuning: Option<TuningRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub summary: CampaignSummary,
    pub records: Vec<ImageRecord>,
    pub query_cdf: Vec<CdfPoint>,
}

impl CampaignReport {
    /// Aggregates records (sorted by image index) into a report.
    pub fn from_records(
        config: &AttackConfig,
        requested: usize,
        mut records: Vec<ImageRecord>,
    ) -> Self {
        records.sort_by_key(|r| r.index);
        let mut wins: Vec<u64> = records
            .iter()
            .filter(|r| r.result.success)
            .map(|r| r.result.queries)
            .collect();
        wins.sort_unstable();
        let attempted = records.len();
        let successes = wins.len();
        let total_queries = records.iter().map(|r| r.result.queries).sum();

        let avg =
            (successes > 0).then(|| wins.iter().map(|&q| q as f64).sum::<f64>() / successes as f64);
        let median = (successes > 0).then(|| {
            let mid = successes / 2;
            if successes % 2 == 1 {
                wins[mid] as f64
            } else {
                (wins[mid - 1] + wins[mid]) as f64 / 2.0
            }
        });
        let mut query_cdf: Vec<CdfPoint> = Vec::new();
        for (i, &q) in wins.iter().enumerate() {
            let fraction = (i + 1) as f64 / successes as f64;
            match query_cdf.last_mut() {
                Some(last) if last.queries == q => last.fraction = fraction,
                _ => query_cdf.push(CdfPoint {
                    queries: q,
                    fraction,
                }),
            }
        }

        CampaignReport {
            summary: CampaignSummary {
                method: config.method,
                seed: config.seed,
                requested,
                attempted,
                successes,
                shortfall: attempted < requested,
                success_rate: (attempted > 0).then(|| successes as f64 / attempted as f64),
                avg_queries_successful: avg,
                median_queries: median,
                total_queries,
                config: config.clone(),
                tuning: None,
            },
            records,
            query_cdf,
        }
    }
}

/// Dataset indices of correctly classified samples, shuffled under `seed`.
pub fn select_images(model: &MlpModel, dataset: &[Sample], seed: u64) -> Result<Vec<usize>> {
    check_against_model(dataset, model)?;
    let correct: Vec<bool> = dataset
        .par_iter()
        .map(|s| model.forward(&s.x).map(|p| p.argmax() == s.label))
        .collect::<Result<_>>()?;
    let mut idx: Vec<usize> = (0..dataset.len()).filter(|&i| correct[i]).collect();
    idx.shuffle(&mut seeded(derive_seed(seed, u64::MAX)));
    Ok(idx)
}

/// Attacks the given dataset rows. Each image gets its own ledger and an RNG
/// seeded from the campaign seed and the row index, so results do not depend
/// on scheduling.
pub fn run_campaign_on(
    model: &MlpModel,
    dataset: &[Sample],
    config: &AttackConfig,
    indices: &[usize],
    requested: usize,
) -> Result<CampaignReport> {
    config.validate()?;
    let records = indices
        .par_iter()
        .map(|&index| {
            let sample = dataset
                .get(index)
                .ok_or_else(|| Error::invalid(format!("image index {index} out of range")))?;
            let cfg = AttackConfig {
                seed: derive_seed(config.seed, index as u64),
                ..config.clone()
            };
            let result = run_attack(model, &sample.x, sample.label, &cfg)?;
            Ok(ImageRecord {
                index,
                label: sample.label,
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CampaignReport::from_records(config, requested, records))
}

/// Attacks the first `n_images` correctly classified samples under the
/// campaign's seeded shuffle. Runs with fewer (flagged as a shortfall) if
/// not enough are available.
pub fn run_campaign(
    model: &MlpModel,
    dataset: &[Sample],
    config: &AttackConfig,
    n_images: usize,
) -> Result<CampaignReport> {
    if dataset.is_empty() {
        return Err(Error::invalid("campaign dataset is empty"));
    }
    let pool = select_images(model, dataset, config.seed)?;
    let chosen = &pool[..n_images.min(pool.len())];
    run_campaign_on(model, dataset, config, chosen, n_images)
}
