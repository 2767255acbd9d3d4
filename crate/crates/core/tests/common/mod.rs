//! Independent straight-line evaluations of the reward, loss and
//! probability formulas, plus random synthetic inputs for them.

#![allow(dead_code)]

use atahrl::alloc::{allocation_diff_frobenius, Allocation};
use atahrl::train::{EpisodeReturns, ReallocEvent};
use rand::Rng;

pub mod grad;

pub const TASKS: usize = 5;
pub const ROBOTS: usize = 3;
pub const HUMANS: usize = 2;

/// Per-task choices: robot (None = unassigned), navigator, classifier
/// (None = autonomous / onboard).
pub type Choices = Vec<(Option<usize>, Option<usize>, Option<usize>)>;

pub fn random_choices<R: Rng>(rng: &mut R) -> Choices {
    let opt = |rng: &mut R, n: usize| {
        let v = rng.random_range(0..=n);
        (v < n).then_some(v)
    };
    (0..TASKS).map(|_| (opt(rng, ROBOTS), opt(rng, HUMANS), opt(rng, HUMANS))).collect()
}

pub fn to_allocation(c: &Choices) -> Allocation {
    let r: Vec<_> = c.iter().map(|x| x.0).collect();
    let n: Vec<_> = c.iter().map(|x| x.1).collect();
    let k: Vec<_> = c.iter().map(|x| x.2).collect();
    Allocation::from_choices(ROBOTS, HUMANS, &r, &n, &k)
}

/// Distance between two choice sets counted directly: a changed one-hot
/// choice flips two entries, a robot gained or lost flips one.
pub fn choice_distance(a: &Choices, b: &Choices) -> f64 {
    let mut flips = 0usize;
    for (x, y) in a.iter().zip(b) {
        flips += match (x.0, y.0) {
            (Some(p), Some(q)) if p != q => 2,
            (Some(_), None) | (None, Some(_)) => 1,
            _ => 0,
        };
        flips += if x.1 != y.1 { 2 } else { 0 };
        flips += if x.2 != y.2 { 2 } else { 0 };
    }
    (flips as f64).sqrt()
}

pub struct SyntheticEpisode {
    pub r_perf: Vec<f64>,
    pub initial: Choices,
    /// Reallocation epochs (strictly increasing, in `1..=T`) and the
    /// allocation chosen at each.
    pub reallocs: Vec<(usize, Choices)>,
}

pub fn random_episode<R: Rng>(rng: &mut R) -> SyntheticEpisode {
    let horizon = rng.random_range(1..=30);
    let r_perf = (0..=horizon).map(|_| rng.random_range(-35..=35) as f64).collect();
    let epochs: Vec<usize> = (1..=horizon).filter(|_| rng.random_bool(0.3)).collect();
    SyntheticEpisode {
        r_perf,
        initial: random_choices(rng),
        reallocs: epochs.into_iter().map(|e| (e, random_choices(rng))).collect(),
    }
}

impl SyntheticEpisode {
    /// The module-side summary, built through the library's own distance.
    pub fn returns(&self) -> EpisodeReturns {
        let init = to_allocation(&self.initial);
        let mut prev = init.clone();
        let mut reallocations = Vec::new();
        for (epoch, c) in &self.reallocs {
            let a = to_allocation(c);
            reallocations.push(ReallocEvent {
                epoch: *epoch,
                diff_from_initial: allocation_diff_frobenius(&a, &init).unwrap(),
                diff_from_previous: allocation_diff_frobenius(&a, &prev).unwrap(),
            });
            prev = a;
        }
        EpisodeReturns { r_perf: self.r_perf.clone(), reallocations }
    }

    fn horizon(&self) -> f64 {
        (self.r_perf.len() - 1) as f64
    }

    fn perf(&self) -> f64 {
        let mut s = 0.0;
        for v in &self.r_perf {
            s += v;
        }
        s
    }

    /// Successive differences telescope to last-minus-first.
    fn gain(&self) -> f64 {
        match self.reallocs.last() {
            Some((e, _)) => self.r_perf[*e] - self.r_perf[0],
            None => 0.0,
        }
    }

    pub fn oracle_ita(&self, rho: f64) -> f64 {
        let mut pen = 0.0;
        for (_, c) in &self.reallocs {
            pen += choice_distance(c, &self.initial);
        }
        self.perf() - rho * pen
    }

    pub fn oracle_condition(&self, rho: f64) -> f64 {
        self.perf() + self.gain() - rho * (self.reallocs.len() as f64 / self.horizon())
    }

    pub fn oracle_realloc(&self, rho: f64) -> f64 {
        let mut drift = 0.0;
        let mut prev = &self.initial;
        for (_, c) in &self.reallocs {
            drift += choice_distance(c, prev);
            prev = c;
        }
        self.perf() + self.gain() - rho * drift / self.horizon()
    }
}

/// Squared error plus weighted KL divergence of a diagonal Gaussian from
/// the standard normal, written per coordinate.
pub fn oracle_cvae(x: &[f64], recon: &[f64], mu: &[f64], logvar: &[f64], beta: f64) -> f64 {
    let mut rec = 0.0;
    for i in 0..x.len() {
        let d = x[i] - recon[i];
        rec += d * d;
    }
    let mut kl = 0.0;
    for i in 0..mu.len() {
        let var = logvar[i].exp();
        kl += -0.5 * (1.0 + var.ln() - mu[i] * mu[i] - var);
    }
    rec + beta * kl
}

pub fn oracle_phc(eta: f64, lambda: f64, ff: f64, fw: f64, fd: f64) -> f64 {
    let gain = eta * lambda;
    0.5 + gain * ff * fw * fd
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}
