//! A short training run of the full method with a reduced model, then a
//! paired comparison against the baselines.
//!
//! Usage: `cargo run --release --example train_small -- [updates]`

use atahrl::agents::ModelConstants;
use atahrl::eval::{evaluate, paired_bootstrap, EvalRun, Method};
use atahrl::policy::PolicyConfig;
use atahrl::sim::{generate_scenario, ScenarioConfig};
use atahrl::train::{train, TrainConfig, TrainSetup};

fn main() -> anyhow::Result<()> {
    let updates = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(50);
    let c = ModelConstants::default();
    let sc = ScenarioConfig::default();
    let policy = PolicyConfig { d_model: 32, ff_hidden: 64, ctr_hidden: 32, ..Default::default() };
    let tc = TrainConfig { updates, eval_interval: 10.min(updates.max(1)), ..Default::default() };
    let setup = TrainSetup {
        seed: 1,
        scenario: &sc,
        constants: &c,
        policy: &policy,
        train: &tc,
        spec: Method::AtaHrl.spec(true),
        pool: None,
        workers: 1,
    };
    let out = train(&setup, None, false, &mut |m| {
        println!("update {:>4}  validation {:>7.2}  realloc freq {:.2}", m.update, m.validation_mean_score, m.validation_realloc_frequency);
    })?;
    let suite = (0..50).map(|s| generate_scenario(&sc, &c, 50_000 + s)).collect::<Result<Vec<_>, _>>()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    let run = EvalRun { constants: &c, root_seed: 2, episodes_per_scenario: 1, pool: &pool, keep_logs: 0 };
    let (ours, _) = evaluate(Method::AtaHrl, Some(&out.best), &suite, None, &run)?;
    println!("ata_hrl (update {}): {:.2}", out.best_update, ours.mean);
    for m in [Method::GreedyItaNever, Method::RandomItaNever] {
        let (r, _) = evaluate(m, None, &suite, None, &run)?;
        let d = paired_bootstrap(&ours.scores(), &r.scores(), 1000, 0.95, 3).expect("paired");
        println!("{m}: {:.2}  difference {:.2} [{:.2}, {:.2}]", r.mean, d.mean_diff, d.lo, d.hi);
    }
    Ok(())
}
