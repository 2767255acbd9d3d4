//! Replayable per-epoch episode logs.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::alloc::Allocation;
use crate::sim::{RandomEvent, Scenario};
use crate::train::Trajectory;

use super::EvalError;

pub const EPISODE_LOG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: u32,
    pub reallocated: bool,
    pub allocation: Allocation,
    pub r_perf: i64,
    pub events: Vec<RandomEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub schema_version: u32,
    pub method: String,
    pub scenario_seed: u64,
    pub episode_seed: u64,
    /// Cumulative score at the end of the episode.
    pub score: i64,
    pub rows: Vec<LogRow>,
}

impl EpisodeLog {
    /// Row 0 is the initial allocation's epoch; the rest follow execution.
    pub fn from_trajectory(method: &str, scenario: &Scenario, episode_seed: u64, t: &Trajectory) -> Self {
        let mut rows = vec![LogRow {
            epoch: 0,
            reallocated: false,
            allocation: t.initial_allocation.clone(),
            r_perf: t.initial_r_perf,
            events: t.initial_events.clone(),
        }];
        rows.extend(t.epochs.iter().map(|e| LogRow {
            epoch: e.epoch,
            reallocated: e.reallocated,
            allocation: e.allocation.clone(),
            r_perf: e.r_perf,
            events: e.events.clone(),
        }));
        Self {
            schema_version: EPISODE_LOG_SCHEMA_VERSION,
            method: method.to_string(),
            scenario_seed: scenario.seed,
            episode_seed,
            score: t.score,
            rows,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("log serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        let found = v.get("schema_version").and_then(|s| s.as_u64());
        if found != Some(EPISODE_LOG_SCHEMA_VERSION as u64) {
            return Err(EvalError::Schema { found, expected: EPISODE_LOG_SCHEMA_VERSION });
        }
        Ok(serde_json::from_value(v)?)
    }

    /// Fixed-width table, one line per row; reallocation rows carry `*`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "method {}  scenario_seed {}  episode_seed {}  score {}",
            self.method, self.scenario_seed, self.episode_seed, self.score
        );
        let _ = writeln!(out, "{:>5} {:>7} {:>6} {:>6}  {:<24} allocation", "epoch", "realloc", "r_perf", "total", "events");
        let mut total = 0;
        for r in &self.rows {
            total += r.r_perf;
            let _ = writeln!(
                out,
                "{:>5} {:>7} {:>6} {:>6}  {:<24} {}",
                r.epoch,
                if r.reallocated { "*" } else { "" },
                r.r_perf,
                total,
                events_text(&r.events),
                allocation_text(&r.allocation)
            );
        }
        out
    }
}

fn events_text(events: &[RandomEvent]) -> String {
    let parts: Vec<String> = events
        .iter()
        .map(|e| match e {
            RandomEvent::PoiAttributeChange { target_id, pollution_type, difficulty } => {
                format!("poi{target_id}->{pollution_type:?}/{difficulty:?}")
            }
            RandomEvent::RobotFailure { target_id } => format!("robot{target_id} failed"),
        })
        .collect();
    if parts.is_empty() { "-".into() } else { parts.join(",") }
}

/// `task:robot/navigator/classifier`, with `A` for autonomous navigation,
/// `R` for onboard classification and `-` for no robot.
fn allocation_text(a: &Allocation) -> String {
    (0..a.tasks())
        .map(|t| {
            let r = a.robot_of(t).map_or("-".into(), |r| format!("r{r}"));
            let n = a.nav_of(t).map_or("A".into(), |h| format!("h{h}"));
            let c = a.cls_of(t).map_or("R".into(), |h| format!("h{h}"));
            format!("{t}:{r}/{n}/{c}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}
