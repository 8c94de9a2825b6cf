//! Experiment runner: datasets, campaigns, step-size tuning, ablations and
//! machine-readable reports.

mod ablation;
mod campaign;
mod dataset;
mod report;
mod tuning;

pub use ablation::{gamma_sweep, run_ablation, AblationGrid, GammaSweepReport, GammaSweepRow};
pub use campaign::{
    run_campaign, run_campaign_on, select_images, CampaignReport, CampaignSummary, CdfPoint,
    ImageRecord,
};
pub use dataset::{check_against_model, load_dataset, parse_dataset};
pub use report::{emit_report, emit_reports, read_report, read_reports, ReportFormat};
pub use tuning::{run_tuned_campaign, tune_step_size, TuningPoint, TuningRecord, STEP_GRID};

/// One labelled input with features in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub label: usize,
}
