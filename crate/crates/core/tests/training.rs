use std::fs;

use atahrl::agents::ModelConstants;
use atahrl::autodiff::{Adam, AdamConfig, Tensor};
use atahrl::eval::Method;
use atahrl::policy::{AtaHrl, PolicyConfig};
use atahrl::sim::{generate_scenario, ScenarioConfig, SimParams};
use atahrl::train::{
    collect_rollout, pretrain_reconstructors, train, update_policies, PpoConfig, PretrainConfig, ReconSample, RewardConfig,
    TrainConfig, TrainSetup,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scenario_cfg() -> ScenarioConfig {
    ScenarioConfig { sim: SimParams { max_epochs: 8, ..Default::default() }, ..ScenarioConfig::team(2, 2, 3) }
}

fn train_cfg(updates: usize, interval: usize) -> TrainConfig {
    TrainConfig {
        updates,
        batch_episodes: 2,
        eval_interval: interval,
        validation_scenarios: 2,
        pretrain: PretrainConfig { episodes: 2, epochs: 1, ..Default::default() },
        ..Default::default()
    }
}

fn run(tc: &TrainConfig, dir: Option<&std::path::Path>, resume: bool) -> atahrl::train::TrainOutcome {
    let (sc, c, pc) = (scenario_cfg(), ModelConstants::default(), PolicyConfig::tiny());
    let setup = TrainSetup {
        seed: 5,
        scenario: &sc,
        constants: &c,
        policy: &pc,
        train: tc,
        spec: Method::AtaHrl.spec(true),
        pool: None,
        workers: 1,
    };
    train(&setup, dir, resume, &mut |_| {}).unwrap()
}

fn files(dir: &std::path::Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

#[test]
fn zero_updates_write_only_the_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&train_cfg(0, 1), Some(dir.path()), false);
    assert_eq!(out.metrics.len(), 1);
    assert_eq!(out.model.params.flat(), out.best.params.flat());
    assert_eq!(files(&dir.path().join("checkpoints")), ["best.bin", "best.json", "latest.bin", "latest.json", "update_000000.bin", "update_000000.json"]);
    assert_eq!(fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap().lines().count(), 1);
}

#[test]
fn one_metric_line_per_interval_plus_the_initial_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&train_cfg(6, 2), Some(dir.path()), false);
    let text = fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
    let updates: Vec<usize> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["update"].as_u64().unwrap() as usize)
        .collect();
    assert_eq!(updates, [0, 2, 4, 6]);
    assert_eq!(out.metrics.len(), 4);
    assert!(out.metrics.iter().skip(1).all(|m| m.losses.is_some() && m.train_mean_score.is_some()));
    assert!(out.metrics[0].losses.is_none());
}

#[test]
fn resuming_reproduces_an_uninterrupted_run() {
    let straight = tempfile::tempdir().unwrap();
    let full = run(&train_cfg(4, 2), Some(straight.path()), false);
    let split = tempfile::tempdir().unwrap();
    run(&train_cfg(2, 2), Some(split.path()), false);
    let resumed = run(&train_cfg(4, 2), Some(split.path()), true);
    assert_eq!(full.model.params.flat(), resumed.model.params.flat());
    assert_eq!(full.model.recon_params.flat(), resumed.model.recon_params.flat());
    let a = fs::read_to_string(straight.path().join("metrics.jsonl")).unwrap();
    let b = fs::read_to_string(split.path().join("metrics.jsonl")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn same_seed_same_parameters() {
    let a = run(&train_cfg(2, 2), None, false);
    let b = run(&train_cfg(2, 2), None, false);
    assert_eq!(a.model.params.flat(), b.model.params.flat());
}

/// Samples whose truth is the latest window step plus a fixed offset.
fn offset_samples(n: usize, offset: f64) -> Vec<ReconSample> {
    let m = AtaHrl::new(PolicyConfig::tiny(), 0);
    let (rd, td) = (m.robot_recon.dim, m.task_recon.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut table = |rows: usize, cols: usize| {
        Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    };
    (0..n)
        .map(|_| {
            let rw: Vec<Tensor> = (0..3).map(|_| table(2, rd)).collect();
            let tw: Vec<Tensor> = (0..3).map(|_| table(3, td)).collect();
            ReconSample {
                robot_truth: rw[2].map(|v| v + offset),
                robot_window: rw,
                task_truth: tw[2].map(|v| v + offset),
                task_window: tw,
            }
        })
        .collect()
}

#[test]
fn pretraining_fits_a_synthetic_target() {
    for offset in [0.0, 0.25] {
        let data = offset_samples(64, offset);
        let mut m = AtaHrl::new(PolicyConfig::tiny(), 0);
        let cfg = PretrainConfig { epochs: 200, lr: 1e-2, batch: 16, holdout: 0.25, ..Default::default() };
        let rep = pretrain_reconstructors(&mut m, &data, &cfg, 3).unwrap();
        assert!(rep.robot_mse_reconstructed < 1e-3, "offset {offset}: robot {}", rep.robot_mse_reconstructed);
        assert!(rep.task_mse_reconstructed < 1e-3, "offset {offset}: task {}", rep.task_mse_reconstructed);
    }
}

#[test]
fn zero_pretrain_epochs_leave_reconstructors_unchanged() {
    let data = offset_samples(8, 0.5);
    let mut m = AtaHrl::new(PolicyConfig::tiny(), 0);
    let before = m.recon_params.flat();
    let rep = pretrain_reconstructors(&mut m, &data, &PretrainConfig { epochs: 0, ..Default::default() }, 3).unwrap();
    assert_eq!(m.recon_params.flat(), before);
    assert!(rep.epoch_losses.is_empty());
}

#[test]
fn decayed_learning_rate_gives_non_increasing_loss() {
    let data = offset_samples(48, 0.3);
    let mut m = AtaHrl::new(PolicyConfig::tiny(), 0);
    let cfg = PretrainConfig { epochs: 30, lr: 3e-3, batch: 48, holdout: 0.0, lr_decay: 0.9, ..Default::default() };
    let rep = pretrain_reconstructors(&mut m, &data, &cfg, 3).unwrap();
    for w in rep.epoch_losses.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-9), "{:?}", rep.epoch_losses);
    }
}

fn pool() -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()
}

#[test]
fn initial_allocation_reward_improves_on_a_fixed_scenario() {
    let c = ModelConstants::default();
    let s = generate_scenario(&scenario_cfg(), &c, 21).unwrap();
    let mut m = AtaHrl::new(PolicyConfig::tiny(), 4);
    let spec = Method::ItaOnly.spec(true);
    let ppo = PpoConfig { lr: 1e-2, entropy_coef: 0.0, ..Default::default() };
    let rew = RewardConfig::default();
    let mut adam = Adam::new(AdamConfig { lr: ppo.lr, ..Default::default() }, &m.params);
    let mean_score = |m: &AtaHrl| {
        (0..32u64).map(|e| collect_rollout(&s, &c, Some(m), &spec, 1000 + e, e).unwrap().score as f64).sum::<f64>() / 32.0
    };
    let before = mean_score(&m);
    for u in 0..40u64 {
        let batch: Vec<_> = (0..8).map(|b| collect_rollout(&s, &c, Some(&m), &spec, u * 8 + b, u * 8 + b + 7).unwrap()).collect();
        update_policies(&mut m, &mut adam, &batch, &ppo, &rew, 8, &pool()).unwrap();
    }
    let after = mean_score(&m);
    assert!(after > before, "{before} -> {after}");
}

#[test]
fn dominant_entropy_bonus_raises_entropy() {
    let c = ModelConstants::default();
    let s = generate_scenario(&scenario_cfg(), &c, 22).unwrap();
    let mut m = AtaHrl::new(PolicyConfig::tiny(), 6);
    let spec = Method::AtaHrl.spec(true);
    let batch: Vec<_> = (0..4).map(|b| collect_rollout(&s, &c, Some(&m), &spec, b, b + 50).unwrap()).collect();
    let ppo = PpoConfig { lr: 1e-3, entropy_coef: 1e3, epochs: 1, ..Default::default() };
    let mut adam = Adam::new(AdamConfig { lr: ppo.lr, ..Default::default() }, &m.params);
    let mut last = f64::NEG_INFINITY;
    for _ in 0..10 {
        let st = update_policies(&mut m, &mut adam, &batch, &ppo, &RewardConfig::default(), 8, &pool()).unwrap();
        assert!(st.entropy >= last - 1e-9, "{} < {last}", st.entropy);
        last = st.entropy;
    }
}
