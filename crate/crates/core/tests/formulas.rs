mod common;

use atahrl::agents::phc;
use atahrl::train::{cvae_loss, reward_condition, reward_ita, reward_realloc, EpisodeReturns, RewardConfig};
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn rewards_match_straight_line_evaluation() {
    let cfg = RewardConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..1000 {
        let ep = random_episode(&mut rng);
        let r = ep.returns();
        assert!(rel_err(reward_ita(&r, &cfg), ep.oracle_ita(cfg.ita_penalty)) < 1e-9);
        assert!(rel_err(reward_condition(&r, &cfg).unwrap(), ep.oracle_condition(cfg.condition_penalty)) < 1e-9);
        assert!(rel_err(reward_realloc(&r, &cfg).unwrap(), ep.oracle_realloc(cfg.realloc_penalty)) < 1e-9);
    }
}

#[test]
fn cvae_loss_matches_straight_line_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..1000 {
        let n = rng.random_range(1..6);
        let l = rng.random_range(1..9);
        let v = |rng: &mut ChaCha8Rng, k: usize, s: f64| (0..k).map(|_| rng.random_range(-s..s)).collect::<Vec<f64>>();
        let (x, xr, mu, lv) = (v(&mut rng, n, 1.0), v(&mut rng, n, 1.0), v(&mut rng, l, 2.0), v(&mut rng, l, 2.0));
        let beta = rng.random_range(0.0..1.0);
        assert!(rel_err(cvae_loss(&x, &xr, &mu, &lv, beta).unwrap(), oracle_cvae(&x, &xr, &mu, &lv, beta)) < 1e-9);
    }
}

#[test]
fn classification_probability_matches_straight_line_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..1000 {
        let (e, l) = (rng.random_range(0.0..0.7071), rng.random_range(0.0..0.7071));
        let (ff, fw, fd) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        assert!(rel_err(phc(e, l, ff, fw, fd), oracle_phc(e, l, ff, fw, fd)) < 1e-9);
    }
}

#[test]
fn zero_reallocations_make_all_rewards_the_performance_sum() {
    let cfg = RewardConfig::default();
    let r = EpisodeReturns { r_perf: vec![3.0, -5.0, 25.0, 0.0], reallocations: vec![] };
    assert_eq!(reward_ita(&r, &cfg), 23.0);
    assert_eq!(reward_condition(&r, &cfg).unwrap(), 23.0);
    assert_eq!(reward_realloc(&r, &cfg).unwrap(), 23.0);
}

#[test]
fn worked_example_human_probability() {
    assert!((phc(0.5, 0.5, 0.8, 0.5, 0.5) - 0.55).abs() < 1e-15);
}

proptest! {
    #[test]
    fn scaling_performance_scales_only_performance_terms(seed in 0u64..10_000, c in 0.1f64..10.0) {
        let cfg = RewardConfig::default();
        let ep = random_episode(&mut ChaCha8Rng::seed_from_u64(seed));
        let base = ep.returns();
        let mut scaled = base.clone();
        scaled.r_perf.iter_mut().for_each(|v| *v *= c);
        let zero = RewardConfig { ita_penalty: 0.0, condition_penalty: 0.0, realloc_penalty: 0.0, ..cfg };
        let pen = |f: &dyn Fn(&EpisodeReturns, &RewardConfig) -> f64, r: &EpisodeReturns| f(r, &zero) - f(r, &cfg);
        let ita = |r: &EpisodeReturns, k: &RewardConfig| reward_ita(r, k);
        let cond = |r: &EpisodeReturns, k: &RewardConfig| reward_condition(r, k).unwrap();
        let tr = |r: &EpisodeReturns, k: &RewardConfig| reward_realloc(r, k).unwrap();
        for f in [&ita as &dyn Fn(&EpisodeReturns, &RewardConfig) -> f64, &cond, &tr] {
            prop_assert!((f(&scaled, &zero) - c * f(&base, &zero)).abs() < 1e-9 * (1.0 + f(&scaled, &zero).abs()));
            prop_assert!((pen(f, &scaled) - pen(f, &base)).abs() < 1e-9);
        }
    }

    #[test]
    fn more_reallocations_lower_the_condition_reward(seed in 0u64..10_000) {
        let cfg = RewardConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ep = random_episode(&mut rng);
        let r = ep.returns();
        prop_assume!(r.reallocations.len() < r.horizon());
        let mut more = r.clone();
        // An extra reallocation at an epoch matching the last one's
        // performance leaves the gain term unchanged.
        let last = r.reallocations.last().map_or(0, |e| e.epoch);
        let free = (last + 1..=r.horizon()).find(|&t| r.r_perf[t] == r.r_perf[last]);
        if let Some(t) = free {
            more.reallocations.push(atahrl::train::ReallocEvent { epoch: t, diff_from_initial: 0.0, diff_from_previous: 0.0 });
            prop_assert!(reward_condition(&more, &cfg).unwrap() < reward_condition(&r, &cfg).unwrap());
        }
    }

    #[test]
    fn cvae_loss_is_nonnegative(x in prop::collection::vec(-2.0f64..2.0, 1..5), shift in -1.0f64..1.0,
                                mu in prop::collection::vec(-2.0f64..2.0, 8), lv in prop::collection::vec(-3.0f64..3.0, 8)) {
        let xr: Vec<f64> = x.iter().map(|v| v + shift).collect();
        prop_assert!(cvae_loss(&x, &xr, &mu, &lv, 0.1).unwrap() >= 0.0);
        prop_assert_eq!(cvae_loss(&x, &x, &[0.0; 8], &[0.0; 8], 0.1).unwrap(), 0.0);
    }
}
