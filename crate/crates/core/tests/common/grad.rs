//! Finite-difference checks of every trainable module on a tiny
//! configuration.

use atahrl::agents::ModelConstants;
use atahrl::alloc::{assemble_policy_input, build_action_mask, ActionMask, Allocation, ObservationBundle};
use atahrl::autodiff::{gradient_check, AutodiffError, GradCheckReport, Graph, Tensor, Var};
use atahrl::policy::recon::cvae_loss_graph;
use atahrl::policy::{AtaHrl, CtrInput, FatigueMode, LatentMode, PolicyConfig, PolicyError};
use atahrl::sim::{generate_scenario, init_episode, Observation, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-6;
pub const TOL: f64 = 1e-4;

fn ad(e: PolicyError) -> AutodiffError {
    match e {
        PolicyError::Autodiff(a) => a,
        other => AutodiffError::Checkpoint(other.to_string()),
    }
}

pub fn fixture() -> (AtaHrl, ObservationBundle, ActionMask) {
    let c = ModelConstants::default();
    let s = generate_scenario(&ScenarioConfig::team(2, 2, 3), &c, 4).unwrap();
    let world = init_episode(&s);
    let bundle = assemble_policy_input(&s, &Observation::truth(&world), &Allocation::empty(3, 2, 2), 0).unwrap();
    let mask = build_action_mask(&world);
    (AtaHrl::new(PolicyConfig::tiny(), 9), bundle, mask)
}

fn input<'a>(b: &'a ObservationBundle, fatigue: FatigueMode, noise: Option<&'a Tensor>) -> CtrInput<'a> {
    CtrInput { bundle: b, robot_state: &b.robot_state, task_state: &b.task_state, fatigue, noise, max_epochs: 40 }
}

fn sq_sum(g: &mut Graph, v: Var) -> Var {
    let s = g.square(v);
    g.sum_all(s)
}

pub fn initial_allocation_policy() -> Result<GradCheckReport, AutodiffError> {
    let (m, b, mask) = fixture();
    gradient_check(
        &m.params,
        |g| {
            let out = m.ita.forward(g, &m.heterogeneity, &m.positional, &b, &mask).map_err(ad)?;
            let heads = out.heads.expect("pending tasks");
            let choices = heads.choose::<ChaCha8Rng>(g, None)?;
            let lp = heads.log_prob(g, &choices)?;
            let h = heads.entropy(g)?;
            let v = sq_sum(g, out.value);
            let t = g.add(lp, h)?;
            g.add(t, v)
        },
        EPS,
        TOL,
    )
}

pub fn condition_head() -> Result<GradCheckReport, AutodiffError> {
    let (m, b, _) = fixture();
    let hidden = Tensor::filled(1, m.config.ctr_hidden, 0.3);
    gradient_check(
        &m.params,
        |g| {
            let enc = m.ctr.encode(g, &m.heterogeneity, &m.positional, &m.cvae, &input(&b, FatigueMode::Raw, None)).map_err(ad)?;
            let out = m.ctr.condition(g, &enc, &hidden).map_err(ad)?;
            let lp = g.pick(out.log_probs, &[1])?;
            let v = sq_sum(g, out.value);
            g.add(lp, v)
        },
        EPS,
        TOL,
    )
}

pub fn reallocation_head() -> Result<GradCheckReport, AutodiffError> {
    let (m, b, mask) = fixture();
    let hidden = Tensor::filled(1, m.config.ctr_hidden, -0.2);
    gradient_check(
        &m.params,
        |g| {
            let enc = m.ctr.encode(g, &m.heterogeneity, &m.positional, &m.cvae, &input(&b, FatigueMode::Raw, None)).map_err(ad)?;
            let out = m.ctr.realloc(g, &enc, &hidden, &b, &mask).map_err(ad)?;
            let heads = out.heads.expect("pending tasks");
            let choices = heads.choose::<ChaCha8Rng>(g, None)?;
            let lp = heads.log_prob(g, &choices)?;
            let h = heads.entropy(g)?;
            let v = sq_sum(g, out.value);
            let t = g.add(lp, h)?;
            g.add(t, v)
        },
        EPS,
        TOL,
    )
}

pub fn cvae_loss() -> Result<GradCheckReport, AutodiffError> {
    let (m, b, _) = fixture();
    let noise = m.cvae.draw_noise(b.counts[0], &mut ChaCha8Rng::seed_from_u64(3));
    gradient_check(
        &m.params,
        |g| {
            let enc = m
                .ctr
                .encode(g, &m.heterogeneity, &m.positional, &m.cvae, &input(&b, FatigueMode::Cvae(LatentMode::Sample), Some(&noise)))
                .map_err(ad)?;
            let out = enc.cvae.expect("cvae ran");
            cvae_loss_graph(g, enc.fatigue_obs, out.recon, out.mu, out.logvar, 0.1)
        },
        EPS,
        TOL,
    )
}

pub fn gru_reconstructor() -> Result<GradCheckReport, AutodiffError> {
    let (mut m, b, _) = fixture();
    // The read-out starts at zero; move it so gradients reach the GRUs.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for id in [m.task_recon.readout.weight, m.task_recon.readout.bias] {
        m.recon_params.value_mut(id).data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    }
    let steps: Vec<Tensor> =
        (0..m.config.window).map(|s| b.task_state.map(|v| v * (1.0 + 0.1 * s as f64) - 0.05)).collect();
    let target = b.task_state.map(|v| 0.5 - v);
    gradient_check(
        &m.recon_params,
        |g| {
            let out = m.task_recon.forward(g, &steps).map_err(ad)?;
            let t = g.constant(target.clone());
            let d = g.sub(out, t)?;
            Ok(sq_sum(g, d))
        },
        EPS,
        TOL,
    )
}

/// Every check by name.
pub fn all() -> Vec<(&'static str, Result<GradCheckReport, AutodiffError>)> {
    vec![
        ("ita", initial_allocation_policy()),
        ("condition", condition_head()),
        ("realloc", reallocation_head()),
        ("cvae", cvae_loss()),
        ("gru reconstructor", gru_reconstructor()),
    ]
}
