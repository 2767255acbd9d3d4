//! Baselines across the three uncertainty levels on a shared suite.

use atahrl::agents::ModelConstants;
use atahrl::eval::{uncertainty_sweep, EvalRun, Method};
use atahrl::sim::{generate_scenario, ScenarioConfig, UncertaintyLevel};

fn main() -> anyhow::Result<()> {
    let c = ModelConstants::default();
    let suite = (0..100).map(|s| generate_scenario(&ScenarioConfig::default(), &c, s)).collect::<Result<Vec<_>, _>>()?;
    let pool = rayon::ThreadPoolBuilder::new().build()?;
    let run = EvalRun { constants: &c, root_seed: 5, episodes_per_scenario: 1, pool: &pool, keep_logs: 0 };
    let methods = [(Method::RandomItaNever, None), (Method::GreedyItaNever, None)];
    let matrix = uncertainty_sweep(&methods, &suite, &UncertaintyLevel::ALL, &run)?;
    println!("{:<18} {:>10} {:>10} {:>10}", "method", "low", "medium", "high");
    for row in &matrix {
        let cells: Vec<String> = row.iter().map(|r| format!("{:>10.2}", r.mean)).collect();
        println!("{:<18} {}", row[0].method.name(), cells.join(" "));
    }
    Ok(())
}
