//! Regression pretraining of the robot and task state reconstructors.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::ModelConstants;
use crate::autodiff::{Adam, AdamConfig, Graph, Grads, ParamStore, Tensor};
use crate::policy::{fuse, AtaHrl, GruReconstructor};
use crate::sim::{derive_seed, Scenario};

use super::rollout::{collect_rollout, ConditionSource, ItaSource, ReallocSource, ReconSample, RolloutSpec};
use super::TrainError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub episodes: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    /// Fraction of samples held out for reporting.
    pub holdout: f64,
    /// Per-epoch reallocation probability of the data-collection policy.
    pub realloc_prob: f64,
    /// Learning-rate multiplier applied after every epoch.
    pub lr_decay: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { episodes: 64, epochs: 10, lr: 1e-3, batch: 32, holdout: 0.2, realloc_prob: 0.1, lr_decay: 1.0 }
    }
}

/// Held-out mean squared errors against the true state, per element.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub train_samples: usize,
    pub holdout_samples: usize,
    pub robot_mse_observed: f64,
    pub robot_mse_reconstructed: f64,
    pub robot_mse_fused: f64,
    pub task_mse_observed: f64,
    pub task_mse_reconstructed: f64,
    pub task_mse_fused: f64,
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Windows and ground truth from random-policy episodes cycled over
/// `scenarios`.
pub fn recon_dataset(
    scenarios: &[Scenario],
    constants: &ModelConstants,
    cfg: &PretrainConfig,
    window: usize,
    seed: u64,
) -> Result<Vec<ReconSample>, TrainError> {
    if scenarios.is_empty() {
        return Err(TrainError::Config("no scenarios for reconstructor data".into()));
    }
    let spec = RolloutSpec {
        ita: ItaSource::Random,
        condition: ConditionSource::Random(cfg.realloc_prob),
        realloc: ReallocSource::Random,
        reconstruct: false,
        stochastic: true,
        recon_window: Some(window),
    };
    let mut out = Vec::new();
    for e in 0..cfg.episodes {
        let s = &scenarios[e % scenarios.len()];
        let tr = collect_rollout(s, constants, None, &spec, derive_seed(seed, &[e as u64, 0]), derive_seed(seed, &[e as u64, 1]))?;
        out.extend(tr.recon_samples);
    }
    Ok(out)
}

fn mse(a: &Tensor, b: &Tensor) -> f64 {
    a.zip_map(b, |x, y| (x - y).powi(2)).sum() / a.len().max(1) as f64
}

fn sample_grads(
    net: &GruReconstructor,
    store: &ParamStore,
    window: &[Tensor],
    truth: &Tensor,
) -> Result<(Grads, f64), TrainError> {
    let mut g = Graph::new(store);
    let out = net.forward(&mut g, window)?;
    let t = g.constant(truth.clone());
    let d = g.sub(out, t)?;
    let d2 = g.square(d);
    let loss = g.mean_all(d2);
    let v = g.value(loss).item();
    Ok((g.backward(loss)?, v))
}

struct Errors {
    observed: f64,
    reconstructed: f64,
    fused: f64,
}

fn errors<'a>(
    net: &GruReconstructor,
    store: &ParamStore,
    items: impl Iterator<Item = (&'a [Tensor], &'a Tensor)>,
) -> Result<Errors, TrainError> {
    let mut e = Errors { observed: 0.0, reconstructed: 0.0, fused: 0.0 };
    let mut n = 0usize;
    for (w, truth) in items {
        let raw = w.last().expect("non-empty window");
        let rec = net.reconstruct(store, w)?;
        e.observed += mse(raw, truth);
        e.reconstructed += mse(&rec, truth);
        e.fused += mse(&fuse(&rec, raw)?, truth);
        n += 1;
    }
    let n = n.max(1) as f64;
    Ok(Errors { observed: e.observed / n, reconstructed: e.reconstructed / n, fused: e.fused / n })
}

/// Fits both reconstructors by minibatch regression onto the true state and
/// reports held-out errors.
pub fn pretrain_reconstructors(
    model: &mut AtaHrl,
    samples: &[ReconSample],
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<PretrainReport, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::Config("reconstructor dataset is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut rng);
    let held = ((samples.len() as f64) * cfg.holdout).round() as usize;
    let (hold, train) = idx.split_at(held.min(samples.len()));
    let mut train = train.to_vec();
    let mut adam = Adam::new(AdamConfig { lr: cfg.lr, ..Default::default() }, &model.recon_params);
    let batch = cfg.batch.max(1);
    let mut lr = cfg.lr;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        train.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in train.chunks(batch) {
            let mut total = Grads::zeros_like(&model.recon_params);
            for &s in chunk {
                let sm = &samples[s];
                let (gr, l) = sample_grads(&model.robot_recon, &model.recon_params, &sm.robot_window, &sm.robot_truth)?;
                total.accumulate(&gr);
                epoch_loss += l;
                let (gr, l) = sample_grads(&model.task_recon, &model.recon_params, &sm.task_window, &sm.task_truth)?;
                total.accumulate(&gr);
                epoch_loss += l;
            }
            total.scale(1.0 / chunk.len() as f64);
            if !total.all_finite() {
                return Err(TrainError::NonFinite("reconstructor gradient".into()));
            }
            adam.apply(&mut model.recon_params, &total, lr);
        }
        epoch_losses.push(epoch_loss / train.len().max(1) as f64);
        lr *= cfg.lr_decay;
    }

    let eval_set: &[usize] = if hold.is_empty() { &train } else { hold };
    let r = errors(
        &model.robot_recon,
        &model.recon_params,
        eval_set.iter().map(|&s| (samples[s].robot_window.as_slice(), &samples[s].robot_truth)),
    )?;
    let t = errors(
        &model.task_recon,
        &model.recon_params,
        eval_set.iter().map(|&s| (samples[s].task_window.as_slice(), &samples[s].task_truth)),
    )?;
    Ok(PretrainReport {
        train_samples: train.len(),
        holdout_samples: hold.len(),
        robot_mse_observed: r.observed,
        robot_mse_reconstructed: r.reconstructed,
        robot_mse_fused: r.fused,
        task_mse_observed: t.observed,
        task_mse_reconstructed: t.reconstructed,
        task_mse_fused: t.fused,
        epoch_losses,
    })
}
