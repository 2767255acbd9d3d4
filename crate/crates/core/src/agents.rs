//! Human and robot performance models.
//!
//! Human classification accuracy follows
//! `P_hc = ½ + η·(F_f·F_w)·λ·F_d` with fatigue, workload and difficulty
//! factors in `(0, 1]`. Robot accuracy depends on captured image quality and
//! task difficulty. All tunable constants live in [`ModelConstants`].

use std::collections::VecDeque;
use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Supremum of the cognitive and skill weights η, λ.
pub const WEIGHT_MAX: f64 = FRAC_1_SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Low,
    Medium,
    High,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Low, Difficulty::Medium, Difficulty::High];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Points awarded for a correct classification (deducted when wrong).
    pub fn points(self) -> i64 {
        match self {
            Difficulty::Low => 15,
            Difficulty::Medium => 25,
            Difficulty::High => 35,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PollutionType {
    Ground,
    Air,
}

impl PollutionType {
    pub const ALL: [PollutionType; 2] = [PollutionType::Ground, PollutionType::Air];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SkillClass {
    #[serde(rename = "H-LS")]
    Low,
    #[serde(rename = "H-MS")]
    Medium,
    #[serde(rename = "H-HS")]
    High,
}

impl SkillClass {
    /// Terciles of the skill weight range `(0, √2/2)`.
    pub fn from_lambda(lambda: f64) -> Self {
        if lambda < WEIGHT_MAX / 3.0 {
            SkillClass::Low
        } else if lambda < 2.0 * WEIGHT_MAX / 3.0 {
            SkillClass::Medium
        } else {
            SkillClass::High
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Navigation mode of a robot while heading to a POI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NavMode {
    Auto,
    Collaborative(SkillClass),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanProfile {
    pub id: usize,
    /// Cognitive weight η ∈ (0, √2/2).
    pub eta: f64,
    /// Skill weight λ ∈ (0, √2/2).
    pub lambda: f64,
    pub skill_class: SkillClass,
}

impl HumanProfile {
    pub fn new(id: usize, eta: f64, lambda: f64) -> Self {
        Self { id, eta, lambda, skill_class: SkillClass::from_lambda(lambda) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanState {
    pub working_time: u32,
    pub fatigue_true: f64,
    /// Task ids waiting for this human's classification, head first.
    pub queue: VecDeque<usize>,
    pub idleness: u32,
    pub situational_awareness: f64,
    pub reassignments_received: u32,
}

impl Default for HumanState {
    fn default() -> Self {
        Self {
            working_time: 0,
            fatigue_true: 1.0,
            queue: VecDeque::new(),
            idleness: 0,
            situational_awareness: 1.0,
            reassignments_received: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RobotKind {
    Uav,
    Ugv,
}

impl RobotKind {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotProfile {
    pub id: usize,
    pub kind: RobotKind,
    /// Autonomous-mode speed in m/s.
    pub base_speed: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotCondition {
    Operational,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub position: [f64; 2],
    pub condition: RobotCondition,
    pub idle: bool,
    pub current_task: Option<usize>,
}

impl RobotState {
    pub fn at(position: [f64; 2]) -> Self {
        Self { position, condition: RobotCondition::Operational, idle: true, current_task: None }
    }

    pub fn is_operational(&self) -> bool {
        self.condition == RobotCondition::Operational
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QualityLevel {
    Low,
    Medium,
    UpperMedium,
    High,
}

impl QualityLevel {
    pub fn scalar(self) -> f64 {
        match self {
            QualityLevel::Low => 0.25,
            QualityLevel::Medium => 0.5,
            QualityLevel::UpperMedium => 0.75,
            QualityLevel::High => 1.0,
        }
    }
}

/// Captured image quality by robot kind, pollution type and navigation mode.
/// Autonomous and medium-skill collaborative navigation share a column.
pub fn image_quality(kind: RobotKind, pollution: PollutionType, nav: NavMode) -> QualityLevel {
    use QualityLevel::*;
    let col = match nav {
        NavMode::Collaborative(SkillClass::Low) => 0,
        NavMode::Auto | NavMode::Collaborative(SkillClass::Medium) => 1,
        NavMode::Collaborative(SkillClass::High) => 2,
    };
    const TABLE: [[[QualityLevel; 3]; 2]; 2] = [
        // UAV: ground, air
        [[Low, Medium, UpperMedium], [Medium, UpperMedium, High]],
        // UGV: ground, air
        [[Medium, UpperMedium, High], [Low, Medium, UpperMedium]],
    ];
    TABLE[kind.index()][pollution.index()][col]
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AgentError {
    #[error("working time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("robot {0} has failed")]
    RobotFailed(usize),
}

/// Tunable constants of the human and robot models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConstants {
    /// Fatigue time constant τ in epochs: `F_f = exp(−t/τ)`.
    pub fatigue_tau: f64,
    /// `F_w = 1 / (1 + c·queue)`.
    pub workload_coeff: f64,
    /// Upper cap keeping `F_w` inside the open unit interval.
    pub workload_cap: f64,
    /// `F_d` for low, medium, high difficulty.
    pub difficulty_factor: [f64; 3],
    /// `P_rc = base + gain·q·d`, clamped to `[base, max]`.
    pub robot_cls_base: f64,
    pub robot_cls_gain: f64,
    pub robot_cls_max: f64,
    /// `d` multipliers for low, medium, high difficulty.
    pub robot_cls_difficulty: [f64; 3],
    pub uav_speed: f64,
    pub ugv_speed: f64,
    /// Speed multipliers for H-LS, H-MS, H-HS collaborators.
    pub skill_speed: [f64; 3],
    /// `SA = 1 / (1 + c·reassignments_received)`.
    pub sa_coeff: f64,
}

impl Default for ModelConstants {
    fn default() -> Self {
        Self {
            fatigue_tau: 120.0,
            workload_coeff: 0.5,
            workload_cap: 0.999,
            difficulty_factor: [0.9, 0.6, 0.3],
            robot_cls_base: 0.5,
            robot_cls_gain: 0.45,
            robot_cls_max: 0.95,
            robot_cls_difficulty: [1.0, 0.8, 0.6],
            uav_speed: 15.0,
            ugv_speed: 6.0,
            skill_speed: [0.8, 1.0, 1.2],
            sa_coeff: 0.1,
        }
    }
}

impl ModelConstants {
    pub fn fatigue_factor(&self, working_time: f64) -> Result<f64, AgentError> {
        if working_time < 0.0 || working_time.is_nan() {
            return Err(AgentError::NegativeTime(working_time));
        }
        Ok((-working_time / self.fatigue_tau).exp())
    }

    pub fn workload_factor(&self, queue_length: usize) -> f64 {
        (1.0 / (1.0 + self.workload_coeff * queue_length as f64)).min(self.workload_cap)
    }

    pub fn difficulty_factor(&self, difficulty: Difficulty) -> f64 {
        self.difficulty_factor[difficulty.index()]
    }

    /// Human classification probability from the true (noise-free) state.
    pub fn human_classification_prob(&self, profile: &HumanProfile, state: &HumanState, difficulty: Difficulty) -> f64 {
        let ff = state.fatigue_true;
        let fw = self.workload_factor(state.queue.len().saturating_sub(1));
        let fd = self.difficulty_factor(difficulty);
        phc(profile.eta, profile.lambda, ff, fw, fd)
    }

    pub fn robot_classification_prob(&self, quality: QualityLevel, difficulty: Difficulty) -> f64 {
        let d = self.robot_cls_difficulty[difficulty.index()];
        (self.robot_cls_base + self.robot_cls_gain * quality.scalar() * d).clamp(self.robot_cls_base, self.robot_cls_max)
    }

    pub fn base_speed(&self, kind: RobotKind) -> f64 {
        match kind {
            RobotKind::Uav => self.uav_speed,
            RobotKind::Ugv => self.ugv_speed,
        }
    }

    pub fn robot_speed(&self, profile: &RobotProfile, state: &RobotState, nav: NavMode) -> Result<f64, AgentError> {
        if !state.is_operational() {
            return Err(AgentError::RobotFailed(profile.id));
        }
        let mult = match nav {
            NavMode::Auto => 1.0,
            NavMode::Collaborative(s) => self.skill_speed[s.index()],
        };
        Ok(profile.base_speed * mult)
    }

    pub fn situational_awareness(&self, reassignments_received: u32) -> f64 {
        1.0 / (1.0 + self.sa_coeff * reassignments_received as f64)
    }

    /// Processes one queued classification. Returns the resolved task and
    /// whether it was classified correctly; an empty queue accrues idleness.
    pub fn advance_human_queue<R: Rng + ?Sized>(
        &self,
        profile: &HumanProfile,
        state: &mut HumanState,
        difficulty_of: impl Fn(usize) -> Difficulty,
        rng: &mut R,
    ) -> Option<(usize, bool)> {
        let Some(&task) = state.queue.front() else {
            state.idleness += 1;
            return None;
        };
        let p = self.human_classification_prob(profile, state, difficulty_of(task));
        state.queue.pop_front();
        let correct = rng.random::<f64>() < p;
        state.working_time += 1;
        state.fatigue_true = self.fatigue_factor(state.working_time as f64).expect("non-negative");
        Some((task, correct))
    }
}

/// `½ + η·(F_f·F_w)·λ·F_d`.
pub fn phc(eta: f64, lambda: f64, ff: f64, fw: f64, fd: f64) -> f64 {
    0.5 + eta * (ff * fw) * lambda * fd
}
