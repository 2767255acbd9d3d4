//! Scenario generation, ground-truth world dynamics and the corrupted
//! observation channel.

mod observe;
pub mod rng;
mod scenario;
mod world;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentError, Difficulty, HumanState, PollutionType, QualityLevel, RobotState};
use crate::alloc::Violation;

pub use observe::{observe, HumanObs, Observation, RobotObs, TaskObs};
pub use rng::{derive_seed, tag, EpisodeRng};
pub use scenario::{
    generate_scenario, Scenario, ScenarioConfig, SimParams, TaskSpec, UncertaintyConfig, UncertaintyLevel,
    SCENARIO_SCHEMA_VERSION,
};
pub use world::{apply_random_events, init_episode, is_quiescent, score_classification, step};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("schema_version {found} is not supported (expected {expected})")]
    Schema { found: u32, expected: u32 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("episode already terminated")]
    Terminal,
    #[error("allocation rejected: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidAllocation(Vec<Violation>),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Navigating,
    ImageCaptured,
    Classified,
}

impl TaskStatus {
    pub const ALL: [TaskStatus; 4] =
        [TaskStatus::Pending, TaskStatus::Navigating, TaskStatus::ImageCaptured, TaskStatus::Classified];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskProgress {
    pub status: TaskStatus,
    pub classified_correct: Option<bool>,
    pub current_spec: TaskSpec,
    /// Robot carrying the task once navigation starts.
    pub robot: Option<usize>,
    pub quality: Option<QualityLevel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub time: u32,
    pub human_states: Vec<HumanState>,
    pub robot_states: Vec<RobotState>,
    pub task_progress: Vec<TaskProgress>,
    pub cumulative_score: i64,
    /// Allocation currently in force; `None` before the first step.
    pub allocation: Option<crate::alloc::Allocation>,
    pub terminal: bool,
}

impl WorldState {
    pub fn classified_count(&self) -> usize {
        self.task_progress.iter().filter(|t| t.status == TaskStatus::Classified).count()
    }

    pub fn operational_robots(&self) -> usize {
        self.robot_states.iter().filter(|r| r.is_operational()).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RandomEvent {
    PoiAttributeChange { target_id: usize, pollution_type: PollutionType, difficulty: Difficulty },
    RobotFailure { target_id: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub r_perf: i64,
    pub events: Vec<RandomEvent>,
    pub completed_task_ids: Vec<usize>,
}
