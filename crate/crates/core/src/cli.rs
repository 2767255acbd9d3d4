//! Command-line front end: argument model, manifests and the four commands.
//!
//! Every flag can also be set through an environment variable named
//! `ATAHRL_<FLAG>` (for example `ATAHRL_SEED`, `ATAHRL_WORKERS`).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, RunConfig};
use crate::eval::{bench::Comparison, evaluate, paired_bootstrap, EpisodeLog, EvalError, EvalRun, Method, ReportFile};
use crate::policy::AtaHrl;
use crate::sim::{derive_seed, generate_scenario, tag, Scenario, UncertaintyLevel};
use crate::train::{self, TrainError, TrainSetup};

pub const ENV_PREFIX: &str = "ATAHRL_";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "atahrl", version, about = "Adaptive task allocation simulator and trainer")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Run configuration (TOML); defaults apply to anything it omits.
    #[arg(long, global = true, env = "ATAHRL_CONFIG")]
    pub config: Option<PathBuf>,
    /// Root seed, overriding the configuration.
    #[arg(long, global = true, env = "ATAHRL_SEED")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "ATAHRL_OUT")]
    pub out: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true, env = "ATAHRL_WORKERS")]
    pub workers: Option<usize>,
    /// Uncertainty level applied to scenarios.
    #[arg(long, global = true, env = "ATAHRL_LEVEL", value_parser = ["low", "medium", "high"])]
    pub level: Option<String>,
    /// Method to train, or comma-separated methods to evaluate.
    #[arg(long, global = true, env = "ATAHRL_METHOD")]
    pub method: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate scenario files.
    Gen {
        /// Number of scenarios, overriding `gen.count`.
        #[arg(long, env = "ATAHRL_COUNT")]
        count: Option<usize>,
    },
    /// Train a method; writes metrics and checkpoints.
    Train {
        /// Directory of scenario files to train on.
        #[arg(long, env = "ATAHRL_SCENARIOS")]
        scenarios: Option<PathBuf>,
        /// Continue from the latest checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Number of updates, overriding `train.updates`.
        #[arg(long, env = "ATAHRL_UPDATES")]
        updates: Option<usize>,
    },
    /// Evaluate methods on a scenario suite; writes JSON and CSV reports.
    Eval {
        /// Training output directory or checkpoint `.json` file.
        #[arg(long, env = "ATAHRL_CHECKPOINT")]
        checkpoint: Option<PathBuf>,
        /// Directory of scenario files; generated from the seed if absent.
        #[arg(long, env = "ATAHRL_SCENARIOS")]
        scenarios: Option<PathBuf>,
    },
    /// Print an episode log as a table.
    Replay { file: PathBuf },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read { .. } | ConfigError::Parse(_) | ConfigError::Invalid(_) => CliError::Usage(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::MissingModel => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::UnknownMethod { .. } | EvalError::MissingCheckpoint(_) | EvalError::Config(_) => {
                CliError::Usage(e.to_string())
            }
            EvalError::Train(t) => t.into(),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn runtime(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Snapshot of a command's inputs and outputs, written once per output
/// directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub root_seed: u64,
    pub config: RunConfig,
    pub inputs: Vec<String>,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    fn new(command: &str, config: &RunConfig, inputs: Vec<String>, artifacts: Vec<String>) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            root_seed: config.seed,
            config: config.clone(),
            inputs,
            artifacts,
        }
    }

    fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        fs::write(&path, text).map_err(runtime(&path))
    }
}

/// Loads the configuration and applies flag overrides.
pub fn resolve_config(g: &GlobalArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    if let Some(l) = &g.level {
        let level = UncertaintyLevel::parse(l).ok_or_else(|| CliError::Usage(format!("unknown level `{l}`")))?;
        cfg.scenario.uncertainty = level.config();
        cfg.eval.level = level;
    }
    Ok(cfg)
}

fn out_dir(g: &GlobalArgs) -> Result<PathBuf, CliError> {
    let out = g.out.clone().ok_or_else(|| CliError::Usage("--out is required".into()))?;
    fs::create_dir_all(&out).map_err(runtime(&out))?;
    Ok(out)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn scenario_file_name(i: usize) -> String {
    format!("scenario_{i:04}.json")
}

/// Scenario files of a directory in name order, skipping the manifest.
pub fn load_scenarios(dir: &Path) -> Result<Vec<Scenario>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Usage(format!("scenarios directory {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != MANIFEST_FILE))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Usage(format!("no scenario files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(runtime(p))?;
            Scenario::from_json(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))
        })
        .collect()
}

pub fn cmd_gen(g: &GlobalArgs, count: Option<usize>) -> Result<(), CliError> {
    let mut cfg = resolve_config(g)?;
    if let Some(n) = count {
        cfg.gen.count = n;
    }
    cfg.validate()?;
    let out = out_dir(g)?;
    let mut artifacts = Vec::with_capacity(cfg.gen.count);
    for i in 0..cfg.gen.count {
        let s = generate_scenario(&cfg.scenario, &cfg.constants, derive_seed(cfg.seed, &[tag("scenario"), i as u64]))
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let name = scenario_file_name(i);
        let path = out.join(&name);
        fs::write(&path, s.to_json()).map_err(runtime(&path))?;
        artifacts.push(name);
    }
    RunManifest::new("gen", &cfg, Vec::new(), artifacts).write(&out)
}

pub fn cmd_train(g: &GlobalArgs, scenarios: Option<&Path>, resume: bool, updates: Option<usize>) -> Result<(), CliError> {
    let mut cfg = resolve_config(g)?;
    if let Some(m) = &g.method {
        cfg.method = Method::parse(m)?;
    }
    if let Some(u) = updates {
        cfg.train.updates = u;
    }
    cfg.validate()?;
    if !cfg.method.needs_model() {
        return Err(CliError::Usage(format!("method `{}` has nothing to train", cfg.method)));
    }
    let pool_scenarios = scenarios.map(load_scenarios).transpose()?;
    let out = out_dir(g)?;
    let setup = TrainSetup {
        seed: cfg.seed,
        scenario: &cfg.scenario,
        constants: &cfg.constants,
        policy: &cfg.policy,
        train: &cfg.train,
        spec: cfg.method.spec(true),
        pool: pool_scenarios.as_deref(),
        workers: cfg.workers(),
    };
    let inputs = scenarios.map(|p| vec![p.display().to_string()]).unwrap_or_default();
    let artifacts = vec![train::run::METRICS_FILE.to_string(), train::run::CHECKPOINT_DIR.to_string()];
    RunManifest::new("train", &cfg, inputs, artifacts).write(&out)?;
    let outcome = train::train(&setup, Some(&out), resume, &mut |m| {
        println!("{}", serde_json::to_string(m).expect("metric serializes"));
    })?;
    if let Some(p) = outcome.pretrain {
        let path = out.join("pretrain.json");
        fs::write(&path, serde_json::to_string_pretty(&p).expect("report serializes")).map_err(runtime(&path))?;
    }
    Ok(())
}

/// Accepts a training output directory (uses its latest checkpoint) or a
/// checkpoint manifest path.
pub fn load_checkpoint(path: &Path) -> Result<AtaHrl, CliError> {
    let (dir, stem) = if path.is_dir() {
        let ck = path.join(train::run::CHECKPOINT_DIR);
        let dir = if ck.is_dir() { ck } else { path.to_path_buf() };
        (dir, train::run::LATEST.to_string())
    } else {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        (path.parent().map(Path::to_path_buf).unwrap_or_default(), stem)
    };
    AtaHrl::load(&dir, &stem).map_err(|e| CliError::Usage(format!("checkpoint {}: {e}", path.display())))
}

pub fn parse_methods(list: &str) -> Result<Vec<Method>, CliError> {
    list.split(',').map(|s| Method::parse(s.trim()).map_err(CliError::from)).collect()
}

pub fn cmd_eval(g: &GlobalArgs, checkpoint: Option<&Path>, scenarios: Option<&Path>) -> Result<(), CliError> {
    let cfg = resolve_config(g)?;
    cfg.validate()?;
    let methods = match &g.method {
        Some(m) => parse_methods(m)?,
        None => cfg.eval.methods.clone(),
    };
    let needs = methods.iter().find(|m| m.needs_model());
    let model = match (checkpoint, needs) {
        (Some(p), _) => Some(load_checkpoint(p)?),
        (None, Some(m)) => return Err(EvalError::MissingCheckpoint(m.name().to_string()).into()),
        (None, None) => None,
    };
    let level = cfg.eval.level;
    let suite: Vec<Scenario> = match scenarios {
        Some(d) => load_scenarios(d)?,
        None => (0..cfg.eval.scenarios)
            .map(|n| generate_scenario(&cfg.scenario, &cfg.constants, derive_seed(cfg.seed, &[tag("eval-suite"), n as u64])))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Usage(e.to_string()))?,
    };
    let suite: Vec<Scenario> = suite.into_iter().map(|s| s.with_uncertainty(level.config())).collect();
    let out = out_dir(g)?;
    let pool = pool(cfg.workers())?;
    let run = EvalRun {
        constants: &cfg.constants,
        root_seed: cfg.seed,
        episodes_per_scenario: cfg.eval.episodes,
        pool: &pool,
        keep_logs: cfg.eval.keep_logs,
    };
    let mut reports = Vec::new();
    let mut artifacts = vec!["report.json".to_string(), "report.csv".to_string()];
    let logs_dir = out.join("logs");
    for &m in &methods {
        let (report, logs) = evaluate(m, model.as_ref(), &suite, Some(level), &run)?;
        eprintln!("{}: mean {:.3} sd {:.3} ci95 [{:.3}, {:.3}]", m, report.mean, report.std_dev, report.ci95[0], report.ci95[1]);
        for (n, log) in logs.iter().enumerate() {
            fs::create_dir_all(&logs_dir).map_err(runtime(&logs_dir))?;
            let name = format!("logs/{}_{n:04}.json", m.name());
            let path = out.join(&name);
            fs::write(&path, log.to_json()).map_err(runtime(&path))?;
            artifacts.push(name);
        }
        reports.push(report);
    }
    let mut file = ReportFile::new(cfg.seed, suite.len(), reports);
    if let Some(first) = file.reports.first().cloned() {
        for other in &file.reports[1..] {
            if let Some(diff) =
                paired_bootstrap(&first.scores(), &other.scores(), cfg.eval.bootstrap_resamples, 0.95, derive_seed(cfg.seed, &[tag("bootstrap")]))
            {
                file.comparisons.push(Comparison { a: first.method, b: other.method, diff });
            }
        }
    }
    let json = serde_json::to_string_pretty(&file).map_err(|e| CliError::Runtime(e.to_string()))?;
    let p = out.join("report.json");
    fs::write(&p, json).map_err(runtime(&p))?;
    let p = out.join("report.csv");
    fs::write(&p, file.to_csv()).map_err(runtime(&p))?;
    let mut inputs: Vec<String> = checkpoint.iter().map(|p| p.display().to_string()).collect();
    inputs.extend(scenarios.map(|p| p.display().to_string()));
    let mut snapshot = cfg.clone();
    snapshot.eval.methods = methods;
    RunManifest::new("eval", &snapshot, inputs, artifacts).write(&out)
}

pub fn cmd_replay(file: &Path) -> Result<String, CliError> {
    let text = fs::read_to_string(file).map_err(runtime(file))?;
    let log = EpisodeLog::from_json(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", file.display())))?;
    Ok(log.render())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Gen { count } => cmd_gen(&cli.global, *count),
        Command::Train { scenarios, resume, updates } => cmd_train(&cli.global, scenarios.as_deref(), *resume, *updates),
        Command::Eval { checkpoint, scenarios } => cmd_eval(&cli.global, checkpoint.as_deref(), scenarios.as_deref()),
        Command::Replay { file } => {
            print!("{}", cmd_replay(file)?);
            Ok(())
        }
    }
}
