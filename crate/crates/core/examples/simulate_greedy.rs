//! Runs the greedy initial allocation without reallocation on one scenario
//! and prints the episode table.

use atahrl::agents::ModelConstants;
use atahrl::eval::{EpisodeLog, Method};
use atahrl::sim::{generate_scenario, ScenarioConfig, UncertaintyLevel};
use atahrl::train::collect_rollout;

fn main() -> anyhow::Result<()> {
    let c = ModelConstants::default();
    let cfg = ScenarioConfig { uncertainty: UncertaintyLevel::High.config(), ..ScenarioConfig::default() };
    let s = generate_scenario(&cfg, &c, 3)?;
    let spec = Method::GreedyItaNever.spec(false);
    let t = collect_rollout(&s, &c, None, &spec, 11, 12)?;
    print!("{}", EpisodeLog::from_trajectory("greedy_ita+never", &s, 11, &t).render());
    Ok(())
}
