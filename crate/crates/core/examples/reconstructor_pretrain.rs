//! Collects random-policy windows at high uncertainty and fits the state
//! reconstructors, reporting held-out errors against observed state.

use atahrl::agents::ModelConstants;
use atahrl::policy::{AtaHrl, PolicyConfig};
use atahrl::sim::{generate_scenario, ScenarioConfig, UncertaintyLevel};
use atahrl::train::{pretrain_reconstructors, recon_dataset, PretrainConfig};

fn main() -> anyhow::Result<()> {
    let c = ModelConstants::default();
    let cfg = ScenarioConfig { uncertainty: UncertaintyLevel::High.config(), ..ScenarioConfig::default() };
    let scenarios = (0..8).map(|s| generate_scenario(&cfg, &c, s)).collect::<Result<Vec<_>, _>>()?;
    let pcfg = PretrainConfig { episodes: 32, epochs: 8, ..Default::default() };
    let mut model = AtaHrl::new(PolicyConfig::default(), 0);
    let data = recon_dataset(&scenarios, &c, &pcfg, model.config.window, 1)?;
    let r = pretrain_reconstructors(&mut model, &data, &pcfg, 2)?;
    println!("{} training windows, {} held out", r.train_samples, r.holdout_samples);
    println!("robot state MSE: observed {:.5}  reconstructed {:.5}  fused {:.5}", r.robot_mse_observed, r.robot_mse_reconstructed, r.robot_mse_fused);
    println!("task state MSE:  observed {:.5}  reconstructed {:.5}  fused {:.5}", r.task_mse_observed, r.task_mse_reconstructed, r.task_mse_fused);
    Ok(())
}
