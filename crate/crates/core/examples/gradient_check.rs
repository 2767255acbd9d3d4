//! Finite-difference check of the initial-allocation policy on a tiny
//! configuration.

use atahrl::agents::ModelConstants;
use atahrl::alloc::{assemble_policy_input, build_action_mask, Allocation};
use atahrl::autodiff::{gradient_check, AutodiffError};
use atahrl::policy::{AtaHrl, PolicyConfig};
use atahrl::sim::{generate_scenario, init_episode, Observation, ScenarioConfig};

fn main() -> anyhow::Result<()> {
    let c = ModelConstants::default();
    let s = generate_scenario(&ScenarioConfig::team(2, 2, 3), &c, 4)?;
    let world = init_episode(&s);
    let bundle = assemble_policy_input(&s, &Observation::truth(&world), &Allocation::empty(3, 2, 2), 0)?;
    let mask = build_action_mask(&world);
    let m = AtaHrl::new(PolicyConfig::tiny(), 9);
    let report = gradient_check(
        &m.params,
        |g| {
            let out = m.ita.forward(g, &m.heterogeneity, &m.positional, &bundle, &mask).map_err(|e| match e {
                atahrl::policy::PolicyError::Autodiff(a) => a,
                other => AutodiffError::Checkpoint(other.to_string()),
            })?;
            let heads = out.heads.expect("all tasks pending");
            let h = heads.entropy(g)?;
            let v = g.square(out.value);
            let v = g.sum_all(v);
            g.add(h, v)
        },
        1e-6,
        1e-4,
    )?;
    println!("checked {} scalars, max relative error {:.2e}", report.checked, report.max_rel_error);
    for w in report.worst.iter().take(3) {
        println!("  {}[{}]  analytic {:.6e}  numeric {:.6e}", w.param, w.index, w.analytic, w.numeric);
    }
    Ok(())
}
