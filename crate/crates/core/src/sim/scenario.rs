use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::agents::{Difficulty, HumanProfile, ModelConstants, PollutionType, RobotKind, RobotProfile, WEIGHT_MAX};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: usize,
    /// Meters from the depot corner.
    pub location: [f64; 2],
    pub pollution_type: PollutionType,
    pub difficulty: Difficulty,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UncertaintyConfig {
    /// σ² of the Gaussian noise added to observed fatigue.
    pub fatigue_noise_variance: f64,
    /// Probability of one random event per decision epoch.
    pub event_probability: f64,
    /// Per-field, per-epoch probability that a robot or task field is stale.
    pub latency_probability: f64,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        UncertaintyLevel::Medium.config()
    }
}

impl UncertaintyConfig {
    pub const ZERO: UncertaintyConfig =
        UncertaintyConfig { fatigue_noise_variance: 0.0, event_probability: 0.0, latency_probability: 0.0 };

    pub fn validate(&self) -> Result<(), SimError> {
        let probs = [("event_probability", self.event_probability), ("latency_probability", self.latency_probability)];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.fatigue_noise_variance >= 0.0) {
            return Err(SimError::Config(format!(
                "fatigue_noise_variance must be non-negative, got {}",
                self.fatigue_noise_variance
            )));
        }
        Ok(())
    }
}

/// Named uncertainty presets. Latency probability tracks the event
/// probability at every level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyLevel {
    Low,
    Medium,
    High,
}

impl UncertaintyLevel {
    pub const ALL: [UncertaintyLevel; 3] = [UncertaintyLevel::Low, UncertaintyLevel::Medium, UncertaintyLevel::High];

    pub fn config(self) -> UncertaintyConfig {
        let (v, p) = match self {
            UncertaintyLevel::Low => (0.05, 0.1),
            UncertaintyLevel::Medium => (0.1, 0.2),
            UncertaintyLevel::High => (0.2, 0.4),
        };
        UncertaintyConfig { fatigue_noise_variance: v, event_probability: p, latency_probability: p }
    }

    pub fn name(self) -> &'static str {
        match self {
            UncertaintyLevel::Low => "low",
            UncertaintyLevel::Medium => "medium",
            UncertaintyLevel::High => "high",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "low" => Some(UncertaintyLevel::Low),
            "medium" => Some(UncertaintyLevel::Medium),
            "high" => Some(UncertaintyLevel::High),
            _ => None,
        }
    }
}

/// Clock and termination parameters of an episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    /// Simulated seconds per decision epoch.
    pub epoch_seconds: f64,
    pub max_epochs: u32,
    pub depot: [f64; 2],
}

impl Default for SimParams {
    fn default() -> Self {
        Self { epoch_seconds: 60.0, max_epochs: 240, depot: [0.0, 0.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub humans: usize,
    pub robots: usize,
    pub tasks: usize,
    pub world_size: [f64; 2],
    /// Relative weights for low, medium, high difficulty.
    pub difficulty_weights: [f64; 3],
    /// Relative weights for ground, air pollution.
    pub pollution_weights: [f64; 2],
    /// Relative weights for UAV, UGV.
    pub robot_kind_weights: [f64; 2],
    pub uncertainty: UncertaintyConfig,
    pub sim: SimParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            humans: 3,
            robots: 4,
            tasks: 20,
            world_size: [2000.0, 2000.0],
            difficulty_weights: [1.0; 3],
            pollution_weights: [1.0; 2],
            robot_kind_weights: [1.0; 2],
            uncertainty: UncertaintyConfig::default(),
            sim: SimParams::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn team(humans: usize, robots: usize, tasks: usize) -> Self {
        Self { humans, robots, tasks, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, n) in [("humans", self.humans), ("robots", self.robots), ("tasks", self.tasks)] {
            if n == 0 {
                return Err(SimError::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.world_size[0] > 0.0 && self.world_size[1] > 0.0) {
            return Err(SimError::Config("world_size must be positive".into()));
        }
        if self.sim.max_epochs == 0 || !(self.sim.epoch_seconds > 0.0) {
            return Err(SimError::Config("sim.max_epochs and sim.epoch_seconds must be positive".into()));
        }
        let weight_sets: [(&str, &[f64]); 3] = [
            ("difficulty_weights", &self.difficulty_weights),
            ("pollution_weights", &self.pollution_weights),
            ("robot_kind_weights", &self.robot_kind_weights),
        ];
        for (name, w) in weight_sets {
            if w.iter().any(|&x| !(x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return Err(SimError::Config(format!("{name} must be non-negative with a positive sum")));
            }
        }
        self.uncertainty.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub seed: u64,
    pub world_size: [f64; 2],
    pub humans: Vec<HumanProfile>,
    pub robots: Vec<RobotProfile>,
    pub tasks: Vec<TaskSpec>,
    pub uncertainty: UncertaintyConfig,
    pub sim: SimParams,
}

impl Scenario {
    pub fn num_humans(&self) -> usize {
        self.humans.len()
    }

    pub fn num_robots(&self) -> usize {
        self.robots.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn with_uncertainty(mut self, u: UncertaintyConfig) -> Self {
        self.uncertainty = u;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(SimError::Schema { found: self.schema_version, expected: SCENARIO_SCHEMA_VERSION });
        }
        if self.humans.is_empty() || self.robots.is_empty() || self.tasks.is_empty() {
            return Err(SimError::Config("scenario needs at least one human, robot and task".into()));
        }
        for t in &self.tasks {
            let [x, y] = t.location;
            if !(x >= 0.0 && x <= self.world_size[0] && y >= 0.0 && y <= self.world_size[1]) {
                return Err(SimError::Config(format!("task {} lies outside the world", t.id)));
            }
        }
        for h in &self.humans {
            if !(h.eta > 0.0 && h.eta < WEIGHT_MAX && h.lambda > 0.0 && h.lambda < WEIGHT_MAX) {
                return Err(SimError::Config(format!("human {} weights outside (0, √2/2)", h.id)));
            }
        }
        if self.robots.iter().any(|r| !(r.base_speed > 0.0)) {
            return Err(SimError::Config("robot base_speed must be positive".into()));
        }
        self.uncertainty.validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, SimError> {
        let v: serde_json::Value = serde_json::from_str(s).map_err(|e| SimError::Parse(e.to_string()))?;
        let found = v.get("schema_version").and_then(|x| x.as_u64()).unwrap_or(0) as u32;
        if found != SCENARIO_SCHEMA_VERSION {
            return Err(SimError::Schema { found, expected: SCENARIO_SCHEMA_VERSION });
        }
        let sc: Scenario = serde_json::from_value(v).map_err(|e| SimError::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }
}

fn open_unit_weight<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let v = rng.random_range(0.0..WEIGHT_MAX);
        if v > 0.0 {
            return v;
        }
    }
}

/// Draws a scenario; identical `(config, seed)` pairs produce identical scenarios.
pub fn generate_scenario(config: &ScenarioConfig, constants: &ModelConstants, seed: u64) -> Result<Scenario, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let humans = (0..config.humans)
        .map(|id| {
            let eta = open_unit_weight(&mut rng);
            let lambda = open_unit_weight(&mut rng);
            HumanProfile::new(id, eta, lambda)
        })
        .collect();
    let kinds = WeightedIndex::new(config.robot_kind_weights).map_err(|e| SimError::Config(e.to_string()))?;
    let robots = (0..config.robots)
        .map(|id| {
            let kind = if kinds.sample(&mut rng) == 0 { RobotKind::Uav } else { RobotKind::Ugv };
            RobotProfile { id, kind, base_speed: constants.base_speed(kind) }
        })
        .collect();
    let diff = WeightedIndex::new(config.difficulty_weights).map_err(|e| SimError::Config(e.to_string()))?;
    let poll = WeightedIndex::new(config.pollution_weights).map_err(|e| SimError::Config(e.to_string()))?;
    let tasks = (0..config.tasks)
        .map(|id| TaskSpec {
            id,
            location: [rng.random_range(0.0..config.world_size[0]), rng.random_range(0.0..config.world_size[1])],
            pollution_type: PollutionType::ALL[poll.sample(&mut rng)],
            difficulty: Difficulty::ALL[diff.sample(&mut rng)],
        })
        .collect();
    Ok(Scenario {
        schema_version: SCENARIO_SCHEMA_VERSION,
        seed,
        world_size: config.world_size,
        humans,
        robots,
        tasks,
        uncertainty: config.uncertainty,
        sim: config.sim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_team_size() {
        let s = generate_scenario(&ScenarioConfig::team(6, 8, 60), &ModelConstants::default(), 7).unwrap();
        assert_eq!((s.humans.len(), s.robots.len(), s.tasks.len()), (6, 8, 60));
        s.validate().unwrap();
    }

    #[test]
    fn minimal_scenario_is_valid() {
        let s = generate_scenario(&ScenarioConfig::team(1, 1, 1), &ModelConstants::default(), 0).unwrap();
        s.validate().unwrap();
    }

    #[test]
    fn generation_is_deterministic() {
        let c = ScenarioConfig::default();
        let a = generate_scenario(&c, &ModelConstants::default(), 42).unwrap();
        let b = generate_scenario(&c, &ModelConstants::default(), 42).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let other = generate_scenario(&c, &ModelConstants::default(), 43).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn zero_counts_are_rejected() {
        for c in [ScenarioConfig::team(0, 1, 1), ScenarioConfig::team(1, 0, 1), ScenarioConfig::team(1, 1, 0)] {
            assert!(matches!(generate_scenario(&c, &ModelConstants::default(), 0), Err(SimError::Config(_))));
        }
    }

    #[test]
    fn json_roundtrip_and_schema_check() {
        let s = generate_scenario(&ScenarioConfig::default(), &ModelConstants::default(), 3).unwrap();
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
        let bad = s.to_json().replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(Scenario::from_json(&bad), Err(SimError::Schema { found: 9, .. })));
    }

    #[test]
    fn levels_map_to_presets() {
        let h = UncertaintyLevel::High.config();
        assert_eq!((h.fatigue_noise_variance, h.event_probability), (0.2, 0.4));
        let l = UncertaintyLevel::Low.config();
        assert_eq!((l.fatigue_noise_variance, l.event_probability), (0.05, 0.1));
    }
}
