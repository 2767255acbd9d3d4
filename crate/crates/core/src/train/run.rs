//! Training orchestration: reconstructor pretraining, then rollouts and
//! policy updates with periodic validation, metric logging and checkpoints.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::ModelConstants;
use crate::autodiff::{Adam, AdamConfig, Checkpoint};
use crate::policy::{AtaHrl, PolicyConfig};
use crate::sim::{derive_seed, generate_scenario, tag, Scenario, ScenarioConfig};

use super::ppo::{update_policies, PpoConfig, UpdateStats};
use super::pretrain::{pretrain_reconstructors, recon_dataset, PretrainConfig, PretrainReport};
use super::reward::{reward_condition, reward_ita, reward_realloc, RewardConfig};
use super::rollout::{collect_rollout, RolloutSpec, Trajectory};
use super::TrainError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub updates: usize,
    pub batch_episodes: usize,
    /// Validate, log and checkpoint every this many updates.
    pub eval_interval: usize,
    pub validation_scenarios: usize,
    pub ppo: PpoConfig,
    pub reward: RewardConfig,
    pub pretrain: PretrainConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            updates: 200,
            batch_episodes: 8,
            eval_interval: 10,
            validation_scenarios: 16,
            ppo: PpoConfig::default(),
            reward: RewardConfig::default(),
            pretrain: PretrainConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.batch_episodes == 0 {
            return Err("train.batch_episodes must be positive".into());
        }
        if self.eval_interval == 0 {
            return Err("train.eval_interval must be positive".into());
        }
        if self.updates % self.eval_interval != 0 {
            return Err(format!(
                "train.updates ({}) must be a multiple of train.eval_interval ({})",
                self.updates, self.eval_interval
            ));
        }
        let p = &self.ppo;
        if !(p.lr > 0.0 && p.lr.is_finite()) {
            return Err("train.ppo.lr must be positive".into());
        }
        if !(0.0..1.0).contains(&p.clip) {
            return Err("train.ppo.clip must lie in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&p.discount) || p.discount == 0.0 {
            return Err("train.ppo.discount must lie in (0, 1]".into());
        }
        if !(p.grad_clip > 0.0) {
            return Err("train.ppo.grad_clip must be positive".into());
        }
        if !(0.0..1.0).contains(&self.pretrain.holdout) {
            return Err("train.pretrain.holdout must lie in [0, 1)".into());
        }
        Ok(())
    }
}

/// One metric-log line. Loss fields are absent on the initial line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub update: usize,
    pub episodes: usize,
    pub train_mean_score: Option<f64>,
    pub train_mean_r_ita: Option<f64>,
    pub train_mean_r_c: Option<f64>,
    pub train_mean_r_tr: Option<f64>,
    pub train_realloc_frequency: Option<f64>,
    pub validation_mean_score: f64,
    pub validation_realloc_frequency: f64,
    pub losses: Option<UpdateStats>,
}

/// Everything a training run needs besides its output location.
#[derive(Clone, Debug)]
pub struct TrainSetup<'a> {
    pub seed: u64,
    pub scenario: &'a ScenarioConfig,
    pub constants: &'a ModelConstants,
    pub policy: &'a PolicyConfig,
    pub train: &'a TrainConfig,
    /// Training-time rollout behaviour of the method being trained.
    pub spec: RolloutSpec,
    /// Fixed training scenarios; fresh ones are generated when absent.
    pub pool: Option<&'a [Scenario]>,
    pub workers: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters after the last update.
    pub model: AtaHrl,
    /// Parameters with the highest validation score seen, and their update.
    pub best: AtaHrl,
    pub best_update: usize,
    pub metrics: Vec<MetricsRecord>,
    pub pretrain: Option<PretrainReport>,
}

pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const LATEST: &str = "latest";
pub const BEST: &str = "best";

pub fn checkpoint_stem(update: usize) -> String {
    format!("update_{update:06}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io { path: path.display().to_string(), source }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool, TrainError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| TrainError::Config(format!("worker pool: {e}")))
}

/// The fixed validation suite of a run.
pub fn validation_suite(setup: &TrainSetup) -> Result<Vec<Scenario>, TrainError> {
    (0..setup.train.validation_scenarios)
        .map(|n| {
            generate_scenario(setup.scenario, setup.constants, derive_seed(setup.seed, &[tag("validation"), n as u64]))
                .map_err(TrainError::from)
        })
        .collect()
}

fn training_scenario(setup: &TrainSetup, update: usize, b: usize) -> Result<Scenario, TrainError> {
    let s = derive_seed(setup.seed, &[tag("train"), update as u64, b as u64, 2]);
    match setup.pool {
        Some(pool) if !pool.is_empty() => Ok(pool[(s % pool.len() as u64) as usize].clone()),
        _ => Ok(generate_scenario(setup.scenario, setup.constants, s)?),
    }
}

fn validate_model(
    model: &AtaHrl,
    setup: &TrainSetup,
    suite: &[Scenario],
    pool: &rayon::ThreadPool,
) -> Result<(f64, f64), TrainError> {
    let spec = RolloutSpec { stochastic: false, recon_window: None, ..setup.spec };
    let trajs: Vec<Result<Trajectory, TrainError>> = pool.install(|| {
        suite
            .par_iter()
            .enumerate()
            .map(|(n, s)| {
                let e = derive_seed(setup.seed, &[tag("validation"), n as u64, 0]);
                collect_rollout(s, setup.constants, Some(model), &spec, e, e ^ 1)
            })
            .collect()
    });
    let mut score = 0.0;
    let mut freq = 0.0;
    for t in trajs {
        let t = t?;
        score += t.score as f64;
        freq += t.reallocation_frequency();
    }
    let n = suite.len().max(1) as f64;
    Ok((score / n, freq / n))
}

fn save_checkpoint(dir: &Path, model: &AtaHrl, adam: &Adam, update: usize, seed: u64) -> Result<(), TrainError> {
    let meta = serde_json::json!({ "update": update, "seed": seed });
    let mut ck: Checkpoint = model.to_checkpoint(meta);
    let ckdir = dir.join(CHECKPOINT_DIR);
    ck.save(&ckdir, &checkpoint_stem(update))?;
    // Only the latest checkpoint carries optimizer state for resuming.
    ck.insert_adam("adam/", &model.params, adam);
    ck.save(&ckdir, LATEST)?;
    Ok(())
}

struct Resumed {
    model: AtaHrl,
    adam: Adam,
    update: usize,
    metrics: Vec<MetricsRecord>,
    best: AtaHrl,
    best_update: usize,
}

fn load_resume(dir: &Path) -> Result<Option<Resumed>, TrainError> {
    let ckdir = dir.join(CHECKPOINT_DIR);
    if !ckdir.join(format!("{LATEST}.json")).exists() {
        return Ok(None);
    }
    let ck = Checkpoint::load(&ckdir, LATEST)?;
    let model = AtaHrl::from_checkpoint(&ck)?;
    let mut adam = Adam::new(AdamConfig::default(), &model.params);
    ck.load_adam("adam/", &model.params, &mut adam)?;
    let update = ck.metadata.get("update").and_then(|v| v.as_u64()).unwrap_or(0) as usize;
    let path = dir.join(METRICS_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut metrics = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let m: MetricsRecord = serde_json::from_str(line)?;
        if m.update <= update {
            metrics.push(m);
        }
    }
    let best_ck = Checkpoint::load(&ckdir, BEST)?;
    let best = AtaHrl::from_checkpoint(&best_ck)?;
    let best_update = best_ck.metadata.get("update").and_then(|v| v.as_u64()).unwrap_or(0) as usize;
    Ok(Some(Resumed { model, adam, update, metrics, best, best_update }))
}

fn save_best(dir: &Path, model: &AtaHrl, update: usize, seed: u64) -> Result<(), TrainError> {
    let meta = serde_json::json!({ "update": update, "seed": seed });
    model.save(&dir.join(CHECKPOINT_DIR), BEST, meta)?;
    Ok(())
}

fn write_metrics(dir: &Path, metrics: &[MetricsRecord]) -> Result<(), TrainError> {
    let path = dir.join(METRICS_FILE);
    let mut text = String::new();
    for m in metrics {
        text.push_str(&serde_json::to_string(m)?);
        text.push('\n');
    }
    fs::write(&path, text).map_err(io_err(&path))
}

fn append_metric(dir: &Path, m: &MetricsRecord) -> Result<(), TrainError> {
    let path = dir.join(METRICS_FILE);
    let mut f = fs::OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
    writeln!(f, "{}", serde_json::to_string(m)?).map_err(io_err(&path))
}

/// Trains one method. With `out_dir`, metric lines and checkpoints are
/// written as they are produced and `resume` continues from the latest
/// checkpoint found there. `on_metric` sees every metric line.
pub fn train(
    setup: &TrainSetup,
    out_dir: Option<&Path>,
    resume: bool,
    on_metric: &mut dyn FnMut(&MetricsRecord),
) -> Result<TrainOutcome, TrainError> {
    setup.train.validate().map_err(TrainError::Config)?;
    setup.policy.validate().map_err(TrainError::Config)?;
    setup.scenario.validate().map_err(|e| TrainError::Config(e.to_string()))?;
    let pool = thread_pool(setup.workers)?;
    let suite = validation_suite(setup)?;
    let cfg = setup.train;
    let max_epochs = setup.scenario.sim.max_epochs;
    let out: Option<PathBuf> = out_dir.map(Path::to_path_buf);
    if let Some(d) = &out {
        fs::create_dir_all(d).map_err(io_err(d))?;
    }

    let resumed = match (&out, resume) {
        (Some(d), true) => load_resume(d)?,
        _ => None,
    };
    let (mut model, mut adam, start, mut metrics, pretrain, mut best, mut best_update) = match resumed {
        Some(r) => {
            if let Some(d) = &out {
                write_metrics(d, &r.metrics)?;
            }
            (r.model, r.adam, r.update, r.metrics, None, r.best, r.best_update)
        }
        None => {
            let mut model = AtaHrl::new(setup.policy.clone(), derive_seed(setup.seed, &[tag("init")]));
            let pretrain = if setup.spec.reconstruct && cfg.pretrain.episodes > 0 {
                let scenarios: Vec<Scenario> = match setup.pool {
                    Some(p) if !p.is_empty() => p.to_vec(),
                    _ => (0..cfg.pretrain.episodes)
                        .map(|n| generate_scenario(setup.scenario, setup.constants, derive_seed(setup.seed, &[tag("pretrain"), n as u64])))
                        .collect::<Result<_, _>>()?,
                };
                let data = recon_dataset(&scenarios, setup.constants, &cfg.pretrain, model.config.window, derive_seed(setup.seed, &[tag("pretrain-data")]))?;
                Some(pretrain_reconstructors(&mut model, &data, &cfg.pretrain, derive_seed(setup.seed, &[tag("pretrain-fit")]))?)
            } else {
                None
            };
            let adam = Adam::new(AdamConfig { lr: cfg.ppo.lr, ..Default::default() }, &model.params);
            let (v, f) = validate_model(&model, setup, &suite, &pool)?;
            let m = MetricsRecord {
                update: 0,
                episodes: 0,
                train_mean_score: None,
                train_mean_r_ita: None,
                train_mean_r_c: None,
                train_mean_r_tr: None,
                train_realloc_frequency: None,
                validation_mean_score: v,
                validation_realloc_frequency: f,
                losses: None,
            };
            if let Some(d) = &out {
                write_metrics(d, &[])?;
                append_metric(d, &m)?;
                save_checkpoint(d, &model, &adam, 0, setup.seed)?;
                save_best(d, &model, 0, setup.seed)?;
            }
            on_metric(&m);
            let best = model.clone();
            (model, adam, 0, vec![m], pretrain, best, 0)
        }
    };

    for update in start + 1..=cfg.updates {
        let snapshot = &model;
        let batch: Vec<Result<Trajectory, TrainError>> = pool.install(|| {
            (0..cfg.batch_episodes)
                .into_par_iter()
                .map(|b| {
                    let s = training_scenario(setup, update, b)?;
                    let e = derive_seed(setup.seed, &[tag("train"), update as u64, b as u64, 0]);
                    let p = derive_seed(setup.seed, &[tag("train"), update as u64, b as u64, 1]);
                    collect_rollout(&s, setup.constants, Some(snapshot), &setup.spec, e, p)
                })
                .collect()
        });
        let batch: Vec<Trajectory> = batch.into_iter().collect::<Result<_, _>>()?;
        let mut ppo = cfg.ppo.clone();
        if !setup.spec.reconstruct {
            ppo.aux_weight = 0.0;
        }
        let stats = update_policies(&mut model, &mut adam, &batch, &ppo, &cfg.reward, max_epochs, &pool)?;

        if update % cfg.eval_interval == 0 {
            let n = batch.len() as f64;
            let mean = |f: &dyn Fn(&Trajectory) -> f64| batch.iter().map(f).sum::<f64>() / n;
            let r_c = |t: &Trajectory| reward_condition(&t.returns, &cfg.reward).unwrap_or(t.returns.total());
            let r_tr = |t: &Trajectory| reward_realloc(&t.returns, &cfg.reward).unwrap_or(t.returns.total());
            let (v, f) = validate_model(&model, setup, &suite, &pool)?;
            let m = MetricsRecord {
                update,
                episodes: update * cfg.batch_episodes,
                train_mean_score: Some(mean(&|t| t.score as f64)),
                train_mean_r_ita: Some(mean(&|t| reward_ita(&t.returns, &cfg.reward))),
                train_mean_r_c: Some(mean(&r_c)),
                train_mean_r_tr: Some(mean(&r_tr)),
                train_realloc_frequency: Some(mean(&Trajectory::reallocation_frequency)),
                validation_mean_score: v,
                validation_realloc_frequency: f,
                losses: Some(stats),
            };
            let best_score = metrics
                .iter()
                .filter(|r| r.update == best_update)
                .map(|r| r.validation_mean_score)
                .next()
                .unwrap_or(f64::NEG_INFINITY);
            if v > best_score {
                best = model.clone();
                best_update = update;
            }
            if let Some(d) = &out {
                append_metric(d, &m)?;
                save_checkpoint(d, &model, &adam, update, setup.seed)?;
                if best_update == update {
                    save_best(d, &model, update, setup.seed)?;
                }
            }
            on_metric(&m);
            metrics.push(m);
        }
    }
    Ok(TrainOutcome { model, best, best_update, metrics, pretrain })
}
