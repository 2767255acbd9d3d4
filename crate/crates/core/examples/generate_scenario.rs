//! Generates a scenario and prints its team and task summary.
//!
//! Usage: `cargo run --example generate_scenario -- [seed]`

use atahrl::agents::ModelConstants;
use atahrl::sim::{generate_scenario, ScenarioConfig};

fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let s = generate_scenario(&ScenarioConfig::default(), &ModelConstants::default(), seed)?;
    println!("scenario seed {seed}: {} humans, {} robots, {} tasks", s.num_humans(), s.num_robots(), s.num_tasks());
    for h in &s.humans {
        println!("  human {}  eta {:.3}  lambda {:.3}  skill {:?}", h.id, h.eta, h.lambda, h.skill_class);
    }
    for r in &s.robots {
        println!("  robot {}  {:?}  speed {:.1}", r.id, r.kind, r.base_speed);
    }
    for t in &s.tasks {
        println!(
            "  task {:>2}  ({:>6.1}, {:>6.1})  {:?}  {:?}",
            t.id, t.location[0], t.location[1], t.pollution_type, t.difficulty
        );
    }
    println!("{} bytes of JSON", s.to_json().len());
    Ok(())
}
