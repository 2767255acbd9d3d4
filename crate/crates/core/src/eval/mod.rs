//! Baselines, ablations and the evaluation bench.

pub mod baselines;
pub mod bench;
pub mod log;
pub mod stats;

pub use baselines::{greedy_ita, random_allocation, random_choices, random_ita};
pub use bench::{episode_seeds, evaluate, uncertainty_sweep, EvalReport, EvalRun, Method, ReportFile, ScenarioEntry};
pub use log::EpisodeLog;
pub use stats::{ci95, mean, paired_bootstrap, std_dev, PairedDiff};

use crate::train::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("unknown method `{name}`; valid methods: {valid}")]
    UnknownMethod { name: String, valid: String },
    #[error("method `{0}` needs a checkpoint")]
    MissingCheckpoint(String),
    #[error("config: {0}")]
    Config(String),
    #[error("episode log schema_version {found:?} unsupported (expected {expected})")]
    Schema { found: Option<u64>, expected: u32 },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
