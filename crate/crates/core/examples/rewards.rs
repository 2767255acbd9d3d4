//! The three episode rewards of a sampled random-reallocation episode.

use atahrl::agents::ModelConstants;
use atahrl::sim::{generate_scenario, ScenarioConfig};
use atahrl::train::{
    collect_rollout, reward_condition, reward_ita, reward_realloc, ConditionSource, ItaSource, ReallocSource, RewardConfig,
    RolloutSpec,
};

fn main() -> anyhow::Result<()> {
    let c = ModelConstants::default();
    let s = generate_scenario(&ScenarioConfig::default(), &c, 8)?;
    let spec = RolloutSpec {
        ita: ItaSource::Greedy,
        condition: ConditionSource::Random(0.2),
        realloc: ReallocSource::Random,
        reconstruct: false,
        stochastic: true,
        recon_window: None,
    };
    let t = collect_rollout(&s, &c, None, &spec, 1, 2)?;
    let r = &t.returns;
    let cfg = RewardConfig::default();
    println!("epochs {}  reallocations {}  total r_perf {}", r.horizon(), r.reallocations.len(), r.total());
    for e in &r.reallocations {
        println!("  epoch {:>3}  |A - A_init| {:.3}  |A - A_prev| {:.3}", e.epoch, e.diff_from_initial, e.diff_from_previous);
    }
    println!("initial allocation reward {:.3}", reward_ita(r, &cfg));
    println!("condition reward          {:.3}", reward_condition(r, &cfg)?);
    println!("reallocation reward       {:.3}", reward_realloc(r, &cfg)?);
    Ok(())
}
