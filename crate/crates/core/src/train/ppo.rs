//! Clipped-surrogate policy optimization of the three policies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, Graph, Grads, Var};
use crate::policy::{AtaHrl, CtrInput, FatigueMode, LatentMode};
use crate::policy::recon::cvae_loss_graph;

use super::reward::{reward_condition, reward_ita, reward_realloc, RewardConfig};
use super::rollout::Trajectory;
use super::TrainError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub lr: f64,
    pub clip: f64,
    pub epochs: usize,
    pub discount: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Weight of the cVAE objective in the joint loss; 0 disables it.
    pub aux_weight: f64,
    /// Multiplies rewards before they become value targets.
    pub reward_scale: f64,
    pub grad_clip: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            clip: 0.2,
            epochs: 4,
            discount: 1.0,
            entropy_coef: 0.01,
            value_coef: 0.5,
            aux_weight: 1.0,
            reward_scale: 0.01,
            grad_clip: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub aux_loss: f64,
    pub grad_norm: f64,
    /// Fraction of decisions whose surrogate was clipped, last pass.
    pub clip_fraction: f64,
    pub decisions: [usize; 3],
}

/// Return and advantage of one recorded decision.
#[derive(Clone, Copy, Debug)]
struct Target {
    ret: f64,
    adv: f64,
}

struct Targets {
    ita: Option<Target>,
    cond: Vec<Option<Target>>,
    realloc: Vec<Option<Target>>,
}

fn normalize(xs: &mut [&mut Target]) {
    let n = xs.len();
    if n < 2 {
        return;
    }
    let mean = xs.iter().map(|t| t.adv).sum::<f64>() / n as f64;
    let var = xs.iter().map(|t| (t.adv - mean).powi(2)).sum::<f64>() / n as f64;
    let sd = var.sqrt().max(1e-8);
    for t in xs.iter_mut() {
        t.adv = (t.adv - mean) / sd;
    }
}

fn targets(trajs: &[Trajectory], cfg: &PpoConfig, reward: &RewardConfig) -> Result<Vec<Targets>, TrainError> {
    let mut out = Vec::with_capacity(trajs.len());
    for tr in trajs {
        let horizon = tr.epochs.len();
        let r_ita = reward_ita(&tr.returns, reward) * cfg.reward_scale;
        let (r_c, r_tr) = if horizon == 0 {
            (0.0, 0.0)
        } else {
            (reward_condition(&tr.returns, reward)? * cfg.reward_scale, reward_realloc(&tr.returns, reward)? * cfg.reward_scale)
        };
        let disc = |e: usize| cfg.discount.powi((horizon - 1 - e) as i32);
        out.push(Targets {
            ita: tr.ita.as_ref().map(|r| Target { ret: r_ita, adv: r_ita - r.value }),
            cond: tr
                .epochs
                .iter()
                .enumerate()
                .map(|(e, ep)| ep.condition.as_ref().map(|c| Target { ret: r_c * disc(e), adv: r_c * disc(e) - c.value }))
                .collect(),
            realloc: tr
                .epochs
                .iter()
                .enumerate()
                .map(|(e, ep)| {
                    ep.realloc
                        .as_ref()
                        .filter(|r| !r.tasks.is_empty())
                        .map(|r| Target { ret: r_tr * disc(e), adv: r_tr * disc(e) - r.value })
                })
                .collect(),
        });
    }
    {
        let mut ita: Vec<&mut Target> = Vec::new();
        let mut cond: Vec<&mut Target> = Vec::new();
        let mut tr: Vec<&mut Target> = Vec::new();
        for t in &mut out {
            ita.extend(t.ita.as_mut());
            cond.extend(t.cond.iter_mut().flatten());
            tr.extend(t.realloc.iter_mut().flatten());
        }
        normalize(&mut ita);
        normalize(&mut cond);
        normalize(&mut tr);
    }
    Ok(out)
}

/// Accumulates `term` into an optional running sum.
fn acc(g: &mut Graph, total: &mut Option<Var>, term: Var) -> Result<(), TrainError> {
    *total = Some(match *total {
        None => term,
        Some(t) => g.add(t, term)?,
    });
    Ok(())
}

#[derive(Default)]
struct PassStats {
    policy: f64,
    value: f64,
    entropy: f64,
    aux: f64,
    clipped: usize,
}

struct Weights {
    per_policy: [f64; 3],
    aux: f64,
}

/// Clipped surrogate written so that a clipped decision contributes a
/// constant: gradient flows only while the ratio can still move towards the
/// advantage inside the trust region.
fn surrogate(
    g: &mut Graph,
    log_prob: Var,
    old: f64,
    adv: f64,
    clip: f64,
    weight: f64,
    stats: &mut PassStats,
) -> Result<Option<Var>, TrainError> {
    let shifted = g.add_scalar(log_prob, -old);
    let ratio = g.exp(shifted);
    let rho = g.value(ratio).item();
    let clipped_rho = rho.clamp(1.0 - clip, 1.0 + clip);
    stats.policy -= weight * (rho * adv).min(clipped_rho * adv);
    let active = (adv >= 0.0 && rho < 1.0 + clip) || (adv < 0.0 && rho > 1.0 - clip);
    if !active {
        stats.clipped += 1;
        return Ok(None);
    }
    Ok(Some(g.scale(ratio, -adv * weight)))
}

fn value_term(g: &mut Graph, value: Var, target: f64, weight: f64, stats: &mut PassStats) -> Result<Var, TrainError> {
    let d = g.add_scalar(value, -target);
    stats.value += weight * g.value(d).item().powi(2);
    let sq = g.square(d);
    Ok(g.scale(sq, weight))
}

fn trajectory_grads(
    model: &AtaHrl,
    tr: &Trajectory,
    tg: &Targets,
    cfg: &PpoConfig,
    reward: &RewardConfig,
    w: &Weights,
    max_epochs: u32,
) -> Result<(Grads, PassStats), TrainError> {
    let mut g = Graph::new(&model.params);
    let mut stats = PassStats::default();
    let mut loss = None;

    if let (Some(rec), Some(t)) = (&tr.ita, tg.ita) {
        let wi = w.per_policy[0];
        let out = model.ita.forward(&mut g, &model.heterogeneity, &model.positional, &rec.bundle, &rec.mask)?;
        let heads = out.heads.expect("recorded initial allocation had decidable tasks");
        let lp = heads.log_prob(&mut g, &rec.choices)?;
        if let Some(s) = surrogate(&mut g, lp, rec.log_prob, t.adv, cfg.clip, wi, &mut stats)? {
            acc(&mut g, &mut loss, s)?;
        }
        let v = value_term(&mut g, out.value, t.ret, cfg.value_coef * wi, &mut stats)?;
        acc(&mut g, &mut loss, v)?;
        let h = heads.entropy(&mut g)?;
        stats.entropy += wi * g.value(h).item();
        let h = g.scale(h, -cfg.entropy_coef * wi);
        acc(&mut g, &mut loss, h)?;
    }

    for (e, ep) in tr.epochs.iter().enumerate() {
        let (ct, rt) = (tg.cond[e], tg.realloc[e]);
        let wants_aux = tr.reconstructed && cfg.aux_weight > 0.0 && w.aux > 0.0;
        if ct.is_none() && rt.is_none() && !wants_aux {
            continue;
        }
        let fatigue = match (&ep.cvae_noise, tr.reconstructed) {
            (Some(_), _) => FatigueMode::Cvae(LatentMode::Sample),
            (None, true) => FatigueMode::Cvae(LatentMode::Mean),
            (None, false) => FatigueMode::Raw,
        };
        let input = CtrInput {
            bundle: &ep.bundle,
            robot_state: &ep.robot_state,
            task_state: &ep.task_state,
            fatigue,
            noise: ep.cvae_noise.as_ref(),
            max_epochs,
        };
        let enc = model.ctr.encode(&mut g, &model.heterogeneity, &model.positional, &model.cvae, &input)?;
        if wants_aux {
            if let Some(c) = &enc.cvae {
                let l = cvae_loss_graph(&mut g, enc.fatigue_obs, c.recon, c.mu, c.logvar, reward.kl_weight)?;
                stats.aux += w.aux * g.value(l).item();
                let l = g.scale(l, cfg.aux_weight * w.aux);
                acc(&mut g, &mut loss, l)?;
            }
        }
        if let (Some(rec), Some(t)) = (&ep.condition, ct) {
            let wc = w.per_policy[1];
            let out = model.ctr.condition(&mut g, &enc, &rec.hidden_in)?;
            let lp = g.pick(out.log_probs, &[rec.action])?;
            if let Some(s) = surrogate(&mut g, lp, rec.log_prob, t.adv, cfg.clip, wc, &mut stats)? {
                acc(&mut g, &mut loss, s)?;
            }
            let v = value_term(&mut g, out.value, t.ret, cfg.value_coef * wc, &mut stats)?;
            acc(&mut g, &mut loss, v)?;
            let p = g.exp(out.log_probs);
            let plp = g.mul(p, out.log_probs)?;
            let h = g.sum_all(plp);
            stats.entropy -= wc * g.value(h).item();
            let h = g.scale(h, cfg.entropy_coef * wc);
            acc(&mut g, &mut loss, h)?;
        }
        if let (Some(rec), Some(t)) = (&ep.realloc, rt) {
            let wr = w.per_policy[2];
            let out = model.ctr.realloc(&mut g, &enc, &rec.hidden_in, &ep.bundle, &ep.mask)?;
            let heads = out.heads.expect("recorded reallocation had decidable tasks");
            let lp = heads.log_prob(&mut g, &rec.choices)?;
            if let Some(s) = surrogate(&mut g, lp, rec.log_prob, t.adv, cfg.clip, wr, &mut stats)? {
                acc(&mut g, &mut loss, s)?;
            }
            let v = value_term(&mut g, out.value, t.ret, cfg.value_coef * wr, &mut stats)?;
            acc(&mut g, &mut loss, v)?;
            let h = heads.entropy(&mut g)?;
            stats.entropy += wr * g.value(h).item();
            let h = g.scale(h, -cfg.entropy_coef * wr);
            acc(&mut g, &mut loss, h)?;
        }
    }

    let grads = match loss {
        Some(l) => g.backward(l)?,
        None => Grads::zeros_like(&model.params),
    };
    Ok((grads, stats))
}

/// Runs `cfg.epochs` passes over `trajs`, one Adam step per pass. Each
/// policy's loss is averaged over its decisions in the batch. Per-trajectory
/// gradients are computed in parallel on `pool` and summed in a fixed order,
/// so results do not depend on the worker count.
pub fn update_policies(
    model: &mut AtaHrl,
    adam: &mut Adam,
    trajs: &[Trajectory],
    cfg: &PpoConfig,
    reward: &RewardConfig,
    max_epochs: u32,
    pool: &rayon::ThreadPool,
) -> Result<UpdateStats, TrainError> {
    let tgs = targets(trajs, cfg, reward)?;
    let decisions = [
        tgs.iter().filter(|t| t.ita.is_some()).count(),
        tgs.iter().map(|t| t.cond.iter().flatten().count()).sum(),
        tgs.iter().map(|t| t.realloc.iter().flatten().count()).sum(),
    ];
    let recon_epochs: usize = trajs.iter().filter(|t| t.reconstructed).map(|t| t.epochs.len()).sum();
    let inv = |n: usize| if n == 0 { 0.0 } else { 1.0 / n as f64 };
    let w = Weights {
        per_policy: [inv(decisions[0]), inv(decisions[1]), inv(decisions[2])],
        aux: inv(recon_epochs),
    };
    let mut stats = UpdateStats { decisions, ..Default::default() };
    for _ in 0..cfg.epochs {
        let results: Vec<Result<(Grads, PassStats), TrainError>> = pool.install(|| {
            trajs
                .par_iter()
                .zip(tgs.par_iter())
                .map(|(tr, tg)| trajectory_grads(model, tr, tg, cfg, reward, &w, max_epochs))
                .collect()
        });
        let mut total = Grads::zeros_like(&model.params);
        let mut pass = PassStats::default();
        for r in results {
            let (gr, s) = r?;
            total.accumulate(&gr);
            pass.policy += s.policy;
            pass.value += s.value;
            pass.entropy += s.entropy;
            pass.aux += s.aux;
            pass.clipped += s.clipped;
        }
        if !total.all_finite() {
            return Err(TrainError::NonFinite("gradient".into()));
        }
        stats.grad_norm = total.clip_norm(cfg.grad_clip);
        adam.apply(&mut model.params, &total, cfg.lr);
        if !model.params.all_finite() {
            return Err(TrainError::NonFinite("parameters".into()));
        }
        stats.policy_loss = pass.policy;
        stats.value_loss = pass.value;
        stats.entropy = pass.entropy;
        stats.aux_loss = pass.aux;
        let n: usize = decisions.iter().sum();
        stats.clip_fraction = if n == 0 { 0.0 } else { pass.clipped as f64 / n as f64 };
    }
    Ok(stats)
}
