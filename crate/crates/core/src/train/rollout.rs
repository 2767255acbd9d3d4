//! Episode collection under the two-level hierarchy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::ModelConstants;
use crate::alloc::{
    allocation_diff_frobenius, assemble_policy_input, build_action_mask, robot_state_vector, task_state_vector,
    ActionMask, Allocation, ObservationBundle, ROBOT_STATE_DIM, TASK_STATE_DIM,
};
use crate::autodiff::{categorical_sample, masked_argmax, Graph, Tensor};
use crate::eval::baselines::{greedy_ita, random_choices};
use crate::policy::{compose_allocation, fuse, padded_window, AtaHrl, CtrInput, FatigueMode, HeadChoice, LatentMode};
use crate::sim::{
    apply_random_events, init_episode, is_quiescent, observe, step, EpisodeRng, Observation, RandomEvent, Scenario,
};

use super::reward::{EpisodeReturns, ReallocEvent};
use super::TrainError;

pub const KEEP: usize = 0;
pub const REALLOCATE: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItaSource {
    Learned,
    Random,
    Greedy,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionSource {
    Learned,
    Never,
    Always,
    /// Reallocate with the given probability each epoch.
    Random(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReallocSource {
    Learned,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutSpec {
    pub ita: ItaSource,
    pub condition: ConditionSource,
    pub realloc: ReallocSource,
    /// Run the reconstructors; otherwise policies see raw observations.
    pub reconstruct: bool,
    /// Sample actions (training) or take arg-max (evaluation). Also selects
    /// the cVAE latent mode.
    pub stochastic: bool,
    /// Keep observation windows of this length and the ground truth for
    /// reconstructor regression.
    pub recon_window: Option<usize>,
}

impl RolloutSpec {
    pub fn training() -> Self {
        Self {
            ita: ItaSource::Learned,
            condition: ConditionSource::Learned,
            realloc: ReallocSource::Learned,
            reconstruct: true,
            stochastic: true,
            recon_window: None,
        }
    }

    pub fn needs_model(&self) -> bool {
        self.ita == ItaSource::Learned
            || self.condition == ConditionSource::Learned
            || (self.realloc == ReallocSource::Learned && self.condition != ConditionSource::Never)
    }
}

#[derive(Clone, Debug)]
pub struct ItaRecord {
    pub bundle: ObservationBundle,
    pub mask: ActionMask,
    pub tasks: Vec<usize>,
    pub choices: Vec<HeadChoice>,
    pub log_prob: f64,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct ConditionRecord {
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
    pub hidden_in: Tensor,
}

#[derive(Clone, Debug)]
pub struct ReallocRecord {
    pub tasks: Vec<usize>,
    pub choices: Vec<HeadChoice>,
    pub log_prob: f64,
    pub value: f64,
    pub hidden_in: Tensor,
}

#[derive(Clone, Debug)]
pub struct EpochRecord {
    pub epoch: u32,
    pub bundle: ObservationBundle,
    /// Robot and task state tables after fusion with reconstructions.
    pub robot_state: Tensor,
    pub task_state: Tensor,
    pub mask: ActionMask,
    pub cvae_noise: Option<Tensor>,
    /// Present when the condition decision came from the learned head.
    pub condition: Option<ConditionRecord>,
    pub reallocated: bool,
    /// Present when the learned reallocation head ran.
    pub realloc: Option<ReallocRecord>,
    pub allocation: Allocation,
    pub r_perf: i64,
    pub events: Vec<RandomEvent>,
}

/// Windows of observed tables and the ground truth at one epoch.
#[derive(Clone, Debug)]
pub struct ReconSample {
    pub robot_window: Vec<Tensor>,
    pub robot_truth: Tensor,
    pub task_window: Vec<Tensor>,
    pub task_truth: Tensor,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub ita: Option<ItaRecord>,
    pub initial_allocation: Allocation,
    pub initial_r_perf: i64,
    pub initial_events: Vec<RandomEvent>,
    pub epochs: Vec<EpochRecord>,
    pub returns: EpisodeReturns,
    pub score: i64,
    /// Whether the reallocation stack saw reconstructed state.
    pub reconstructed: bool,
    pub recon_samples: Vec<ReconSample>,
}

impl Trajectory {
    pub fn reallocation_count(&self) -> usize {
        self.returns.reallocations.len()
    }

    /// Reallocations per execution epoch.
    pub fn reallocation_frequency(&self) -> f64 {
        match self.epochs.len() {
            0 => 0.0,
            n => self.reallocation_count() as f64 / n as f64,
        }
    }

    /// The learned reallocation head never ran in an epoch whose condition
    /// decision was keep.
    pub fn hierarchy_respected(&self) -> bool {
        self.epochs.iter().all(|e| {
            let chose_keep = e.condition.as_ref().is_some_and(|c| c.action == KEEP);
            !(chose_keep && (e.reallocated || e.realloc.is_some())) && (e.realloc.is_none() || e.reallocated)
        })
    }
}

fn table(rows: impl Iterator<Item = Vec<f64>>, cols: usize) -> Tensor {
    let data: Vec<f64> = rows.flatten().collect();
    Tensor::from_vec(data.len() / cols, cols, data).expect("fixed width")
}

fn truth_tables(scenario: &Scenario, truth: &Observation) -> (Tensor, Tensor) {
    (
        table(truth.robots.iter().map(|r| robot_state_vector(r, scenario.world_size).to_vec()), ROBOT_STATE_DIM),
        table(truth.tasks.iter().map(|t| task_state_vector(t).to_vec()), TASK_STATE_DIM),
    )
}

fn pick<R: Rng + ?Sized>(log_probs: &Tensor, stochastic: bool, rng: &mut R) -> Result<(usize, f64), TrainError> {
    let lp = log_probs.row_slice(0);
    let allowed = vec![true; lp.len()];
    let (a, _) = if stochastic { categorical_sample(lp, &allowed, rng)? } else { masked_argmax(lp, &allowed)? };
    Ok((a, lp[a]))
}

/// Runs one episode. `episode_seed` drives the world (events, noise,
/// latency, classification outcomes) and is shared across methods for
/// paired comparisons; `policy_seed` drives action sampling.
pub fn collect_rollout(
    scenario: &Scenario,
    constants: &ModelConstants,
    model: Option<&AtaHrl>,
    spec: &RolloutSpec,
    episode_seed: u64,
    policy_seed: u64,
) -> Result<Trajectory, TrainError> {
    if spec.needs_model() && model.is_none() {
        return Err(TrainError::MissingModel);
    }
    let u = scenario.uncertainty;
    let (i, j, k) = (scenario.num_humans(), scenario.num_robots(), scenario.num_tasks());
    let mut world = init_episode(scenario);
    let mut erng = EpisodeRng::new(episode_seed);
    let mut prng = ChaCha8Rng::seed_from_u64(policy_seed);
    let latent = if spec.stochastic { LatentMode::Sample } else { LatentMode::Mean };

    let obs0 = observe(&world, None, &u, &mut erng);
    let empty = Allocation::empty(k, j, i);
    let bundle0 = assemble_policy_input(scenario, &obs0, &empty, 0)?;
    let mask0 = build_action_mask(&world);
    let (initial, ita) = match spec.ita {
        ItaSource::Greedy => (greedy_ita(scenario), None),
        ItaSource::Random => {
            let (tasks, choices) = random_choices(&mask0, &mut prng);
            (compose_allocation(&empty, &tasks, &choices), None)
        }
        ItaSource::Learned => {
            let m = model.expect("checked");
            let mut g = Graph::new(&m.params);
            let out = m.ita.forward(&mut g, &m.heterogeneity, &m.positional, &bundle0, &mask0)?;
            let heads = out.heads.expect("nothing is locked before execution");
            let choices = heads.choose(&g, spec.stochastic.then_some(&mut prng))?;
            let lp = heads.log_prob(&mut g, &choices)?;
            let rec = ItaRecord {
                tasks: heads.tasks.clone(),
                log_prob: g.value(lp).item(),
                value: g.value(out.value).item(),
                bundle: bundle0.clone(),
                mask: mask0.clone(),
                choices,
            };
            (compose_allocation(&empty, &rec.tasks, &rec.choices), Some(rec))
        }
    };

    let initial_r_perf = step(scenario, constants, &mut world, &initial, &erng)?.r_perf;
    let initial_events =
        if world.terminal { Vec::new() } else { apply_random_events(&mut world, u.event_probability, &mut erng.events) };
    let mut r_perf = vec![initial_r_perf as f64];
    let mut reallocations = Vec::new();
    let mut in_force = initial.clone();
    let mut robot_hist = vec![bundle0.robot_state.clone()];
    let mut task_hist = vec![bundle0.task_state.clone()];
    let mut prev_obs = obs0;
    let mut epochs = Vec::new();
    let mut recon_samples = Vec::new();
    let hidden = model.map_or(1, |m| m.config.ctr_hidden);
    let mut h_cond = Tensor::zeros(1, hidden);
    let mut h_tr = Tensor::zeros(1, hidden);

    while !world.terminal {
        if spec.condition == ConditionSource::Never && is_quiescent(&world) {
            break;
        }
        let t = world.time;
        let obs = observe(&world, Some(&prev_obs), &u, &mut erng);
        let bundle = assemble_policy_input(scenario, &obs, &in_force, t)?;
        robot_hist.push(bundle.robot_state.clone());
        task_hist.push(bundle.task_state.clone());
        let mask = build_action_mask(&world);

        if let Some(w) = spec.recon_window {
            let (rt, tt) = truth_tables(scenario, &Observation::truth(&world));
            recon_samples.push(ReconSample {
                robot_window: padded_window(&robot_hist, w)?,
                robot_truth: rt,
                task_window: padded_window(&task_hist, w)?,
                task_truth: tt,
            });
        }
        let (robot_state, task_state) = match model {
            Some(m) if spec.reconstruct => {
                let w = m.config.window;
                let rw = padded_window(&robot_hist, w)?;
                let tw = padded_window(&task_hist, w)?;
                (
                    fuse(&m.robot_recon.reconstruct(&m.recon_params, &rw)?, &bundle.robot_state)?,
                    fuse(&m.task_recon.reconstruct(&m.recon_params, &tw)?, &bundle.task_state)?,
                )
            }
            _ => (bundle.robot_state.clone(), bundle.task_state.clone()),
        };
        let cvae_noise = match model {
            Some(m) if spec.reconstruct && spec.stochastic => Some(m.cvae.draw_noise(i, &mut prng)),
            _ => None,
        };

        let mut condition = None;
        let mut realloc = None;
        let mut next = None;
        let uses_model = spec.condition == ConditionSource::Learned
            || (spec.realloc == ReallocSource::Learned && spec.condition != ConditionSource::Never);
        if uses_model {
            let m = model.expect("checked");
            let mut g = Graph::new(&m.params);
            let input = CtrInput {
                bundle: &bundle,
                robot_state: &robot_state,
                task_state: &task_state,
                fatigue: if spec.reconstruct { FatigueMode::Cvae(latent) } else { FatigueMode::Raw },
                noise: cvae_noise.as_ref(),
                max_epochs: scenario.sim.max_epochs,
            };
            let enc = m.ctr.encode(&mut g, &m.heterogeneity, &m.positional, &m.cvae, &input)?;
            let reallocate = match spec.condition {
                ConditionSource::Learned => {
                    let c = m.ctr.condition(&mut g, &enc, &h_cond)?;
                    let (action, log_prob) = pick(g.value(c.log_probs), spec.stochastic, &mut prng)?;
                    condition = Some(ConditionRecord {
                        action,
                        log_prob,
                        value: g.value(c.value).item(),
                        hidden_in: std::mem::replace(&mut h_cond, g.value(c.hidden).clone()),
                    });
                    action == REALLOCATE
                }
                ConditionSource::Always => true,
                ConditionSource::Never => false,
                ConditionSource::Random(p) => prng.random::<f64>() < p,
            };
            if reallocate {
                match spec.realloc {
                    ReallocSource::Learned => {
                        let r = m.ctr.realloc(&mut g, &enc, &h_tr, &bundle, &mask)?;
                        let hidden_in = std::mem::replace(&mut h_tr, g.value(r.hidden).clone());
                        let value = g.value(r.value).item();
                        let (tasks, choices, log_prob) = match &r.heads {
                            Some(heads) => {
                                let choices = heads.choose(&g, spec.stochastic.then_some(&mut prng))?;
                                let lp = heads.log_prob(&mut g, &choices)?;
                                (heads.tasks.clone(), choices, g.value(lp).item())
                            }
                            None => (Vec::new(), Vec::new(), 0.0),
                        };
                        next = Some(compose_allocation(&in_force, &tasks, &choices));
                        realloc = Some(ReallocRecord { tasks, choices, log_prob, value, hidden_in });
                    }
                    ReallocSource::Random => {
                        let (tasks, choices) = random_choices(&mask, &mut prng);
                        next = Some(compose_allocation(&in_force, &tasks, &choices));
                    }
                }
            }
        } else {
            let reallocate = match spec.condition {
                ConditionSource::Always => true,
                ConditionSource::Random(p) => prng.random::<f64>() < p,
                _ => false,
            };
            if reallocate {
                let (tasks, choices) = random_choices(&mask, &mut prng);
                next = Some(compose_allocation(&in_force, &tasks, &choices));
            }
        }

        let reallocated = next.is_some();
        if let Some(a) = next {
            reallocations.push(ReallocEvent {
                epoch: t as usize,
                diff_from_initial: allocation_diff_frobenius(&a, &initial)?,
                diff_from_previous: allocation_diff_frobenius(&a, &in_force)?,
            });
            in_force = a;
        }
        let out = step(scenario, constants, &mut world, &in_force, &erng)?;
        r_perf.push(out.r_perf as f64);
        let events =
            if world.terminal { Vec::new() } else { apply_random_events(&mut world, u.event_probability, &mut erng.events) };
        epochs.push(EpochRecord {
            epoch: t,
            bundle,
            robot_state,
            task_state,
            mask,
            cvae_noise,
            condition,
            reallocated,
            realloc,
            allocation: in_force.clone(),
            r_perf: out.r_perf,
            events,
        });
        prev_obs = obs;
    }

    Ok(Trajectory {
        ita,
        initial_allocation: initial,
        initial_r_perf,
        initial_events,
        epochs,
        returns: EpisodeReturns { r_perf, reallocations },
        score: world.cumulative_score,
        reconstructed: spec.reconstruct && model.is_some(),
        recon_samples,
    })
}
