//! Episode-level rewards of the three policies and the cVAE objective.

use serde::{Deserialize, Serialize};

use super::TrainError;

/// Penalty coefficients of the three rewards and the KL weight of the cVAE
/// loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub ita_penalty: f64,
    pub condition_penalty: f64,
    pub realloc_penalty: f64,
    pub kl_weight: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { ita_penalty: 0.2, condition_penalty: 0.4, realloc_penalty: 0.2, kl_weight: 0.1 }
    }
}

/// One reallocation during execution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReallocEvent {
    pub epoch: usize,
    /// Distance of the new allocation from the initial one.
    pub diff_from_initial: f64,
    /// Distance of the new allocation from the one it replaced.
    pub diff_from_previous: f64,
}

/// The reward-relevant summary of an episode: `r_perf[t]` for
/// `t = 0..=T` and the reallocations in order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReturns {
    pub r_perf: Vec<f64>,
    pub reallocations: Vec<ReallocEvent>,
}

impl EpisodeReturns {
    /// Number of execution epochs `T` (the initial epoch excluded).
    pub fn horizon(&self) -> usize {
        self.r_perf.len().saturating_sub(1)
    }

    pub fn total(&self) -> f64 {
        self.r_perf.iter().sum()
    }

    /// Sum of performance differences between consecutive reallocation
    /// epochs, with epoch 0 as the first reference.
    pub fn realloc_gain(&self) -> f64 {
        let mut prev = self.r_perf.first().copied().unwrap_or(0.0);
        let mut gain = 0.0;
        for e in &self.reallocations {
            let cur = self.r_perf[e.epoch];
            gain += cur - prev;
            prev = cur;
        }
        gain
    }

    fn checked_horizon(&self) -> Result<f64, TrainError> {
        match self.horizon() {
            0 => Err(TrainError::EmptyHorizon),
            t => Ok(t as f64),
        }
    }
}

pub fn reward_ita(ep: &EpisodeReturns, cfg: &RewardConfig) -> f64 {
    ep.total() - cfg.ita_penalty * ep.reallocations.iter().map(|e| e.diff_from_initial).sum::<f64>()
}

pub fn reward_condition(ep: &EpisodeReturns, cfg: &RewardConfig) -> Result<f64, TrainError> {
    let t = ep.checked_horizon()?;
    Ok(ep.total() + ep.realloc_gain() - cfg.condition_penalty * ep.reallocations.len() as f64 / t)
}

pub fn reward_realloc(ep: &EpisodeReturns, cfg: &RewardConfig) -> Result<f64, TrainError> {
    let t = ep.checked_horizon()?;
    let drift: f64 = ep.reallocations.iter().map(|e| e.diff_from_previous).sum();
    Ok(ep.total() + ep.realloc_gain() - cfg.realloc_penalty * drift / t)
}

/// `‖x − x̂‖² + kl_weight · KL(N(μ, σ²) ‖ N(0, I))`.
pub fn cvae_loss(x: &[f64], recon: &[f64], mu: &[f64], logvar: &[f64], kl_weight: f64) -> Result<f64, TrainError> {
    if x.len() != recon.len() || mu.len() != logvar.len() {
        return Err(TrainError::Shape(format!(
            "cvae_loss: x {} vs x̂ {}, μ {} vs logvar {}",
            x.len(),
            recon.len(),
            mu.len(),
            logvar.len()
        )));
    }
    let rec: f64 = x.iter().zip(recon).map(|(a, b)| (a - b).powi(2)).sum();
    let kl: f64 = 0.5 * mu.iter().zip(logvar).map(|(m, lv)| m * m + lv.exp() - 1.0 - lv).sum::<f64>();
    Ok(rec + kl_weight * kl)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ep(r: &[f64], re: &[(usize, f64, f64)]) -> EpisodeReturns {
        EpisodeReturns {
            r_perf: r.to_vec(),
            reallocations: re
                .iter()
                .map(|&(epoch, a, b)| ReallocEvent { epoch, diff_from_initial: a, diff_from_previous: b })
                .collect(),
        }
    }

    #[test]
    fn ita_examples() {
        let c = RewardConfig::default();
        assert_eq!(reward_ita(&ep(&[10.0, 5.0, 5.0], &[]), &c), 20.0);
        let r = reward_ita(&ep(&[10.0, 5.0, 5.0], &[(1, 2f64.sqrt(), 2f64.sqrt())]), &c);
        assert!((r - 19.717).abs() < 1e-3);
        assert_eq!(reward_ita(&ep(&[10.0, 5.0, 5.0], &[(1, 0.0, 1.0), (2, 0.0, 1.0)]), &c), 20.0);
    }

    #[test]
    fn condition_examples() {
        let c = RewardConfig::default();
        let mut r = vec![0.0; 11];
        r[0] = 3.0;
        r[4] = 7.0;
        r[9] = 6.0;
        r[10] = 34.0;
        let e = ep(&r, &[(4, 0.0, 0.0), (9, 0.0, 0.0)]);
        assert!((reward_condition(&e, &c).unwrap() - 52.92).abs() < 1e-12);
        assert_eq!(reward_condition(&ep(&[1.0, 2.0], &[]), &c).unwrap(), 3.0);
        let all = ep(&[0.0, 0.0, 0.0], &[(1, 0.0, 0.0), (2, 0.0, 0.0)]);
        assert!((reward_condition(&all, &c).unwrap() + 0.4).abs() < 1e-15);
        assert!(matches!(reward_condition(&ep(&[1.0], &[]), &c), Err(TrainError::EmptyHorizon)));
    }

    #[test]
    fn realloc_examples() {
        let c = RewardConfig::default();
        let mut r = vec![0.0; 11];
        r[3] = 2.0;
        r[10] = 28.0;
        let e = ep(&r, &[(3, 1.0, 2f64.sqrt())]);
        assert!((reward_realloc(&e, &c).unwrap() - 31.972).abs() < 1e-3);
        assert_eq!(reward_realloc(&ep(&[4.0, 6.0], &[]), &c).unwrap(), 10.0);
    }

    #[test]
    fn cvae_examples() {
        let z = [0.0; 8];
        assert_eq!(cvae_loss(&[0.3], &[0.3], &z, &z, 0.1).unwrap(), 0.0);
        assert_eq!(cvae_loss(&[1.0, 0.0], &[0.0, 0.0], &z, &z, 0.1).unwrap(), 1.0);
        let mut mu = z;
        mu[0] = 1.0;
        assert!((cvae_loss(&[0.5], &[0.5], &mu, &z, 0.1).unwrap() - 0.05).abs() < 1e-15);
    }
}
