//! Scoring against gold records and experiment sweeps.

mod confusion;
mod harness;
pub mod stats;

use thiserror::Error;

pub use confusion::{classify_slot, score_run, ConditionOutcome, ConfusionMatrix, MetricSet, RunScore};
pub use harness::{
    algo_label, ordering_label, plot_table, render_reports, sample_pool_ids, EvalQuery, ExperimentConfig,
    ExperimentReport, Harness, HarnessError, MetricSummary, TrialMetrics, SCORING_POLICY,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no gold record for paragraph `{0}`")]
    MissingGold(String),
}
