//! Run configuration: one TOML file holding every setting of a run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::ModelConstants;
use crate::eval::Method;
use crate::policy::PolicyConfig;
use crate::sim::{ScenarioConfig, UncertaintyLevel};
use crate::train::TrainConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub count: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self { count: 200 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Scenario count when no scenario directory is given.
    pub scenarios: usize,
    pub episodes: usize,
    pub level: UncertaintyLevel,
    pub methods: Vec<Method>,
    pub bootstrap_resamples: usize,
    /// Scenarios whose first episode is written as a replayable log.
    pub keep_logs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            scenarios: 200,
            episodes: 1,
            level: UncertaintyLevel::Medium,
            methods: vec![Method::AtaHrl, Method::RandomItaNever, Method::GreedyItaNever],
            bootstrap_resamples: 2000,
            keep_logs: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 means all available cores.
    pub workers: usize,
    /// Method trained by `train`.
    pub method: Method,
    pub scenario: ScenarioConfig,
    pub constants: ModelConstants,
    pub policy: PolicyConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub gen: GenConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            workers: 0,
            method: Method::AtaHrl,
            scenario: ScenarioConfig::default(),
            constants: ModelConstants::default(),
            policy: PolicyConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            gen: GenConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::from_toml(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario.validate().map_err(|e| ConfigError::Invalid(format!("scenario: {e}")))?;
        self.policy.validate().map_err(ConfigError::Invalid)?;
        self.train.validate().map_err(ConfigError::Invalid)?;
        if self.gen.count == 0 {
            return Err(ConfigError::Invalid("gen.count must be at least 1".into()));
        }
        if self.eval.scenarios == 0 {
            return Err(ConfigError::Invalid("eval.scenarios must be at least 1".into()));
        }
        if self.eval.episodes == 0 {
            return Err(ConfigError::Invalid("eval.episodes must be at least 1".into()));
        }
        Ok(())
    }

    pub fn workers(&self) -> usize {
        match self.workers {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = RunConfig::from_toml("seed = 3\n[gen]\ncount = 5\n").unwrap();
        assert_eq!((c.seed, c.gen.count), (3, 5));
        assert_eq!(c.policy, PolicyConfig::default());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(RunConfig::from_toml("sed = 3").is_err());
        let c = RunConfig { gen: GenConfig { count: 0 }, ..Default::default() };
        assert!(c.validate().unwrap_err().to_string().contains("gen.count"));
    }

    #[test]
    fn committed_configs_parse_and_validate() {
        let default = RunConfig::from_toml(include_str!("../../../configs/default.toml")).unwrap();
        assert_eq!(default, RunConfig::default());
        for text in [include_str!("../../../configs/acceptance.toml"), include_str!("../../../configs/large_team.toml")] {
            RunConfig::from_toml(text).unwrap().validate().unwrap();
        }
    }
}
