//! Rollouts, rewards, PPO updates and the training loop.

pub mod ppo;
pub mod pretrain;
pub mod reward;
pub mod rollout;
pub mod run;

use crate::alloc::AllocError;
use crate::autodiff::AutodiffError;
use crate::policy::PolicyError;
use crate::sim::SimError;

pub use ppo::{update_policies, PpoConfig, UpdateStats};
pub use pretrain::{pretrain_reconstructors, recon_dataset, PretrainConfig, PretrainReport};
pub use reward::{cvae_loss, reward_condition, reward_ita, reward_realloc, EpisodeReturns, ReallocEvent, RewardConfig};
pub use rollout::{
    collect_rollout, ConditionSource, EpochRecord, ItaSource, ReallocSource, ReconSample, RolloutSpec, Trajectory, KEEP, REALLOCATE,
};
pub use run::{train, MetricsRecord, TrainConfig, TrainOutcome, TrainSetup};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("episode has no execution epochs")]
    EmptyHorizon,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("a learned component was requested without a model")]
    MissingModel,
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
