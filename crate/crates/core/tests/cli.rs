use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use atahrl::eval::EpisodeLog;

const SMALL: &str = r#"
seed = 3
workers = 1

[scenario]
humans = 2
robots = 2
tasks = 4

[scenario.sim]
max_epochs = 12

[policy]
d_model = 8
heads = 2
layers = 1
ff_hidden = 8
head_hidden = 4
ctr_hidden = 4
latent_dim = 2
cvae_cond = 2
cvae_hidden = 4
window = 3
recon_hidden = 4

[train]
updates = 2
batch_episodes = 2
eval_interval = 1
validation_scenarios = 2

[train.pretrain]
episodes = 2
epochs = 1

[eval]
scenarios = 4
"#;

fn bin(args: &[&str], dir: &Path) -> Output {
    let cfg = dir.join("small.toml");
    if !cfg.exists() {
        fs::write(&cfg, SMALL).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_atahrl"))
        .arg("--config")
        .arg(&cfg)
        .args(args)
        .env_remove("ATAHRL_SEED")
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_writes_scenarios_and_a_manifest_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = bin(&["gen", "--count", "5", "--out", path(d)], tmp.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 6);
    assert!(a.join("manifest.json").exists() && a.join("scenario_0004.json").exists());
    for i in 0..5 {
        let f = format!("scenario_{i:04}.json");
        assert_eq!(fs::read(a.join(&f)).unwrap(), fs::read(b.join(&f)).unwrap());
    }
}

#[test]
fn invalid_values_exit_with_usage_code_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin(&["gen", "--count", "0", "--out", path(&tmp.path().join("g"))], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gen.count"), "{}", stderr(&o));

    let o = bin(&["eval", "--method", "greedy_ita+never,magic", "--out", path(&tmp.path().join("e"))], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("magic") && stderr(&o).contains("greedy_ita+never"), "{}", stderr(&o));

    let o = bin(&["gen", "--level", "extreme", "--out", path(&tmp.path().join("g"))], tmp.path());
    assert_eq!(o.status.code(), Some(2));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "seed = 1\nworkerz = 2\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_atahrl"))
        .args(["--config", path(&bad), "gen", "--out", path(&tmp.path().join("g"))])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("workerz"), "{}", stderr(&o));
}

#[test]
fn model_methods_need_a_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin(&["eval", "--method", "ata_hrl", "--out", path(&tmp.path().join("e"))], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("checkpoint"), "{}", stderr(&o));
}

#[test]
fn environment_overrides_apply() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("g");
    let o = Command::new(env!("CARGO_BIN_EXE_atahrl"))
        .arg("gen")
        .env("ATAHRL_COUNT", "2")
        .env("ATAHRL_SEED", "99")
        .env("ATAHRL_OUT", &out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["root_seed"], 99);
    assert_eq!(m["artifacts"].as_array().unwrap().len(), 2);
}

#[test]
fn baseline_eval_writes_reports_and_replayable_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("s");
    assert_eq!(bin(&["gen", "--count", "3", "--out", path(&scen)], tmp.path()).status.code(), Some(0));
    let out = tmp.path().join("e");
    let o = bin(
        &["eval", "--method", "greedy_ita+never,random_ita+never", "--scenarios", path(&scen), "--level", "high", "--out", path(&out)],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "method,level,scenario_id,score");
    assert_eq!(csv.lines().count(), 1 + 3 * 2);
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(1) == Some("high")));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["reports"].as_array().unwrap().len(), 2);
    assert_eq!(report["comparisons"].as_array().unwrap().len(), 1);

    let log_path = out.join("logs").join("greedy_ita+never_0000.json");
    let log = EpisodeLog::from_json(&fs::read_to_string(&log_path).unwrap()).unwrap();
    let o = bin(&["replay", path(&log_path)], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2 + log.rows.len());
    let last_total: i64 = lines.last().unwrap().split_whitespace().nth(2).unwrap().parse().unwrap();
    assert_eq!(last_total, log.score);
    // Never-reallocating baselines carry no reallocation flags.
    assert!(log.rows.iter().all(|r| !r.reallocated));
}

#[test]
fn train_then_eval_learned_method() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let o = bin(&["train", "--method", "ata_hrl", "--out", path(&run)], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 3);
    assert!(run.join("checkpoints").join("latest.json").exists());
    assert!(run.join("pretrain.json").exists());
    let out = tmp.path().join("e");
    let o = bin(&["eval", "--method", "ata_hrl,wo_c", "--checkpoint", path(&run), "--out", path(&out)], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 2);

    // The always-reallocate ablation flags every execution epoch.
    let log_path = out.join("logs").join("wo_c_0000.json");
    let log = EpisodeLog::from_json(&fs::read_to_string(&log_path).unwrap()).unwrap();
    let o = bin(&["replay", path(&log_path)], tmp.path());
    let text = String::from_utf8(o.stdout).unwrap();
    let flagged = text.lines().skip(2).filter(|l| l.split_whitespace().nth(1) == Some("*")).count();
    assert_eq!(flagged, log.rows.iter().filter(|r| r.reallocated).count());
    assert!(flagged > 0);

    let o = bin(&["train", "--method", "greedy_ita+never", "--out", path(&run)], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn replay_rejects_unknown_schema_and_marks_reallocations() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("log.json");
    fs::write(&p, r#"{"schema_version": 99, "rows": []}"#).unwrap();
    let o = bin(&["replay", path(&p)], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("schema"), "{}", stderr(&o));

    fs::write(&p, r#"{"schema_version": 1, "method": "x", "scenario_seed": 1, "episode_seed": 2, "score": 0, "rows": []}"#).unwrap();
    let o = bin(&["replay", path(&p)], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 2);
}
