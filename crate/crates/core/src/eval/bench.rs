//! Paired evaluation of methods over scenario suites and uncertainty levels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::ModelConstants;
use crate::policy::AtaHrl;
use crate::sim::{derive_seed, tag, Scenario, UncertaintyLevel};
use crate::train::{collect_rollout, ConditionSource, ItaSource, ReallocSource, RolloutSpec, Trajectory};

use super::log::EpisodeLog;
use super::stats::{ci95, mean, std_dev, PairedDiff};
use super::EvalError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ata_hrl")]
    AtaHrl,
    #[serde(rename = "random_ita+never")]
    RandomItaNever,
    #[serde(rename = "greedy_ita+never")]
    GreedyItaNever,
    #[serde(rename = "random_ita+learned_TR")]
    RandomItaLearnedTr,
    #[serde(rename = "ita_only")]
    ItaOnly,
    #[serde(rename = "wo_aux")]
    WoAux,
    #[serde(rename = "wo_c")]
    WoC,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::AtaHrl,
        Method::RandomItaNever,
        Method::GreedyItaNever,
        Method::RandomItaLearnedTr,
        Method::ItaOnly,
        Method::WoAux,
        Method::WoC,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::AtaHrl => "ata_hrl",
            Method::RandomItaNever => "random_ita+never",
            Method::GreedyItaNever => "greedy_ita+never",
            Method::RandomItaLearnedTr => "random_ita+learned_TR",
            Method::ItaOnly => "ita_only",
            Method::WoAux => "wo_aux",
            Method::WoC => "wo_c",
        }
    }

    pub fn parse(s: &str) -> Result<Self, EvalError> {
        Self::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| EvalError::UnknownMethod {
            name: s.to_string(),
            valid: Self::ALL.iter().map(|m| m.name()).collect::<Vec<_>>().join(", "),
        })
    }

    pub fn needs_model(self) -> bool {
        !matches!(self, Method::RandomItaNever | Method::GreedyItaNever)
    }

    /// Rollout behaviour; `stochastic` selects sampling (training) or
    /// arg-max (evaluation) actions.
    pub fn spec(self, stochastic: bool) -> RolloutSpec {
        let (ita, condition, reconstruct) = match self {
            Method::AtaHrl => (ItaSource::Learned, ConditionSource::Learned, true),
            Method::RandomItaNever => (ItaSource::Random, ConditionSource::Never, false),
            Method::GreedyItaNever => (ItaSource::Greedy, ConditionSource::Never, false),
            Method::RandomItaLearnedTr => (ItaSource::Random, ConditionSource::Learned, true),
            Method::ItaOnly => (ItaSource::Learned, ConditionSource::Never, false),
            Method::WoAux => (ItaSource::Learned, ConditionSource::Learned, false),
            Method::WoC => (ItaSource::Learned, ConditionSource::Always, true),
        };
        RolloutSpec { ita, condition, realloc: ReallocSource::Learned, reconstruct, stochastic, recon_window: None }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    pub scenario_id: usize,
    pub scenario_seed: u64,
    /// Mean total score over the scenario's episodes.
    pub score: f64,
    pub epochs: usize,
    pub reallocations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub level: Option<UncertaintyLevel>,
    pub episodes_per_scenario: usize,
    pub entries: Vec<ScenarioEntry>,
    pub mean: f64,
    pub std_dev: f64,
    pub ci95: [f64; 2],
    /// Reallocations per execution epoch, pooled over all episodes.
    pub realloc_frequency: f64,
    /// Epochs in which reallocation ran although the condition head chose keep.
    pub hierarchy_violations: usize,
    /// Execution epochs without a reallocation.
    pub epochs_without_realloc: usize,
}

impl EvalReport {
    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.score).collect()
    }
}

/// Seeds of episode `e` on suite scenario `n`, shared by every method.
pub fn episode_seeds(root: u64, n: usize, e: usize) -> (u64, u64) {
    (derive_seed(root, &[tag("eval"), n as u64, e as u64]), derive_seed(root, &[tag("eval-policy"), n as u64, e as u64]))
}

pub struct EvalRun<'a> {
    pub constants: &'a ModelConstants,
    pub root_seed: u64,
    pub episodes_per_scenario: usize,
    pub pool: &'a rayon::ThreadPool,
    /// Keep replayable logs of the first episode on this many scenarios.
    pub keep_logs: usize,
}

fn count_violations(t: &Trajectory) -> usize {
    t.epochs
        .iter()
        .filter(|e| e.condition.as_ref().is_some_and(|c| c.action == crate::train::KEEP) && e.reallocated)
        .count()
}

/// Runs `method` on every scenario of `suite` and aggregates total scores.
pub fn evaluate(
    method: Method,
    model: Option<&AtaHrl>,
    suite: &[Scenario],
    level: Option<UncertaintyLevel>,
    run: &EvalRun,
) -> Result<(EvalReport, Vec<EpisodeLog>), EvalError> {
    if method.needs_model() && model.is_none() {
        return Err(EvalError::MissingCheckpoint(method.name().to_string()));
    }
    if run.episodes_per_scenario == 0 {
        return Err(EvalError::Config("episodes_per_scenario must be positive".into()));
    }
    let spec = method.spec(false);
    let model = if method.needs_model() { model } else { None };
    let per_scenario: Vec<Result<(ScenarioEntry, usize, usize, Option<EpisodeLog>), EvalError>> = run.pool.install(|| {
        suite
            .par_iter()
            .enumerate()
            .map(|(n, s)| {
                let mut score = 0.0;
                let (mut epochs, mut reallocs, mut viol, mut idle) = (0, 0, 0, 0);
                let mut log = None;
                for e in 0..run.episodes_per_scenario {
                    let (es, ps) = episode_seeds(run.root_seed, n, e);
                    let t = collect_rollout(s, run.constants, model, &spec, es, ps)?;
                    score += t.score as f64;
                    epochs += t.epochs.len();
                    reallocs += t.reallocation_count();
                    viol += count_violations(&t);
                    idle += t.epochs.iter().filter(|e| !e.reallocated).count();
                    if e == 0 && n < run.keep_logs {
                        log = Some(EpisodeLog::from_trajectory(method.name(), s, es, &t));
                    }
                }
                let entry = ScenarioEntry {
                    scenario_id: n,
                    scenario_seed: s.seed,
                    score: score / run.episodes_per_scenario as f64,
                    epochs,
                    reallocations: reallocs,
                };
                Ok((entry, viol, idle, log))
            })
            .collect()
    });
    let mut entries = Vec::with_capacity(suite.len());
    let mut logs = Vec::new();
    let (mut viol, mut idle) = (0, 0);
    for r in per_scenario {
        let (entry, v, i, log) = r?;
        viol += v;
        idle += i;
        entries.push(entry);
        logs.extend(log);
    }
    let scores: Vec<f64> = entries.iter().map(|e| e.score).collect();
    let total_epochs: usize = entries.iter().map(|e| e.epochs).sum();
    let total_reallocs: usize = entries.iter().map(|e| e.reallocations).sum();
    Ok((
        EvalReport {
            method,
            level,
            episodes_per_scenario: run.episodes_per_scenario,
            mean: mean(&scores),
            std_dev: std_dev(&scores),
            ci95: ci95(&scores),
            realloc_frequency: if total_epochs == 0 { 0.0 } else { total_reallocs as f64 / total_epochs as f64 },
            hierarchy_violations: viol,
            epochs_without_realloc: idle,
            entries,
        },
        logs,
    ))
}

/// A method and the model it runs with, if any.
pub type MethodModel<'a> = (Method, Option<&'a AtaHrl>);

/// Methods × levels on one suite; each level overrides the suite's
/// uncertainty and all methods share scenarios and episode seeds.
pub fn uncertainty_sweep(
    methods: &[MethodModel],
    suite: &[Scenario],
    levels: &[UncertaintyLevel],
    run: &EvalRun,
) -> Result<Vec<Vec<EvalReport>>, EvalError> {
    let mut matrix = Vec::with_capacity(methods.len());
    for &(m, model) in methods {
        let mut row = Vec::with_capacity(levels.len());
        for &level in levels {
            let leveled: Vec<Scenario> = suite.iter().map(|s| s.clone().with_uncertainty(level.config())).collect();
            row.push(evaluate(m, model, &leveled, Some(level), run)?.0);
        }
        matrix.push(row);
    }
    Ok(matrix)
}

/// Notes placed at the top of every written report.
pub const REPORT_NOTES: [&str; 2] = [
    "greedy_ita+never is a heuristic stand-in for an exact optimization-based initial allocator",
    "random_ita+learned_TR stands in for a reallocation-only learned baseline",
];

/// Paired difference `a − b` of per-scenario scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: Method,
    pub b: Method,
    pub diff: PairedDiff,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub notes: Vec<String>,
    pub root_seed: u64,
    pub scenarios: usize,
    pub reports: Vec<EvalReport>,
    pub comparisons: Vec<Comparison>,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

impl ReportFile {
    pub fn new(root_seed: u64, scenarios: usize, reports: Vec<EvalReport>) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            notes: REPORT_NOTES.iter().map(|s| s.to_string()).collect(),
            root_seed,
            scenarios,
            reports,
            comparisons: Vec::new(),
        }
    }

    /// Flat `method,level,scenario_id,score` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,level,scenario_id,score\n");
        for r in &self.reports {
            let level = r.level.map_or("scenario", |l| l.name());
            for e in &r.entries {
                out.push_str(&format!("{},{},{},{}\n", r.method.name(), level, e.scenario_id, e.score));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_scenario, ScenarioConfig};

    fn pool() -> rayon::ThreadPool {
        rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()
    }

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()).unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        let err = Method::parse("milp").unwrap_err().to_string();
        assert!(err.contains("greedy_ita+never"), "{err}");
    }

    #[test]
    fn ten_scenarios_give_ten_entries() {
        let c = ModelConstants::default();
        let suite: Vec<Scenario> =
            (0..10).map(|s| generate_scenario(&ScenarioConfig::team(2, 2, 4), &c, s).unwrap()).collect();
        let pool = pool();
        let run = EvalRun { constants: &c, root_seed: 3, episodes_per_scenario: 1, pool: &pool, keep_logs: 0 };
        let (r, _) = evaluate(Method::GreedyItaNever, None, &suite, None, &run).unwrap();
        assert_eq!(r.entries.len(), 10);
        assert!((r.mean - mean(&r.scores())).abs() < 1e-12);
        assert!(matches!(evaluate(Method::AtaHrl, None, &suite, None, &run), Err(EvalError::MissingCheckpoint(_))));
    }
}
