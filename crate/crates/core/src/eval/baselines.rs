//! Heuristic allocation baselines.

use rand::Rng;

use crate::agents::{Difficulty, PollutionType, RobotKind, SkillClass};
use crate::alloc::{build_action_mask, ActionMask, Allocation};
use crate::sim::{Scenario, WorldState};
use crate::policy::{compose_allocation, HeadChoice};

fn uniform_allowed<R: Rng + ?Sized>(allowed: &[bool], rng: &mut R) -> usize {
    let idx: Vec<usize> = allowed.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i).collect();
    idx[rng.random_range(0..idx.len())]
}

/// Uniform choices for every decidable task under `mask`.
pub fn random_choices<R: Rng + ?Sized>(mask: &ActionMask, rng: &mut R) -> (Vec<usize>, Vec<HeadChoice>) {
    let tasks: Vec<usize> = mask.decidable().collect();
    let choices = tasks
        .iter()
        .map(|&t| HeadChoice {
            robot: uniform_allowed(&mask.robot[t], rng),
            nav: uniform_allowed(&mask.nav[t], rng),
            cls: uniform_allowed(&mask.cls[t], rng),
        })
        .collect();
    (tasks, choices)
}

/// A uniformly random valid allocation for the world's current mask.
pub fn random_allocation<R: Rng + ?Sized>(scenario: &Scenario, world: &WorldState, rng: &mut R) -> Allocation {
    let mask = build_action_mask(world);
    let base = world
        .allocation
        .clone()
        .unwrap_or_else(|| Allocation::empty(scenario.num_tasks(), scenario.num_robots(), scenario.num_humans()));
    let (tasks, choices) = random_choices(&mask, rng);
    compose_allocation(&base, &tasks, &choices)
}

/// Initial allocation drawn uniformly at random.
pub fn random_ita<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Allocation {
    random_allocation(scenario, &crate::sim::init_episode(scenario), rng)
}

/// Hardest tasks first; each goes to the nearest robot of the matching kind
/// (UAV for air, UGV for ground, any robot if none matches), measured from
/// where that robot will be after its earlier assignments. High-difficulty
/// tasks get the most skilled H-HS navigator (or the most skilled human)
/// and the most skilled human as classifier; the rest run autonomously and
/// are classified onboard. Ties go to the lowest id.
pub fn greedy_ita(scenario: &Scenario) -> Allocation {
    let mut alloc = Allocation::empty(scenario.num_tasks(), scenario.num_robots(), scenario.num_humans());
    let mut order: Vec<usize> = (0..scenario.num_tasks()).collect();
    order.sort_by_key(|&t| (std::cmp::Reverse(scenario.tasks[t].difficulty.index()), t));
    let mut projected = vec![scenario.sim.depot; scenario.num_robots()];

    let best_by_lambda = |pred: &dyn Fn(usize) -> bool| -> Option<usize> {
        (0..scenario.num_humans())
            .filter(|&h| pred(h))
            .min_by(|&a, &b| scenario.humans[b].lambda.total_cmp(&scenario.humans[a].lambda).then(a.cmp(&b)))
    };
    let top = best_by_lambda(&|_| true);
    let top_hs = best_by_lambda(&|h| scenario.humans[h].skill_class == SkillClass::High).or(top);

    for t in order {
        let spec = &scenario.tasks[t];
        let want = match spec.pollution_type {
            PollutionType::Air => RobotKind::Uav,
            PollutionType::Ground => RobotKind::Ugv,
        };
        let matching: Vec<usize> = (0..scenario.num_robots()).filter(|&r| scenario.robots[r].kind == want).collect();
        let pool: Vec<usize> = if matching.is_empty() { (0..scenario.num_robots()).collect() } else { matching };
        let d = |r: usize| {
            let p = projected[r];
            (p[0] - spec.location[0]).powi(2) + (p[1] - spec.location[1]).powi(2)
        };
        let r = *pool.iter().min_by(|&&a, &&b| d(a).total_cmp(&d(b)).then(a.cmp(&b))).expect("at least one robot");
        projected[r] = spec.location;
        alloc.set_robot(t, Some(r));
        if spec.difficulty == Difficulty::High {
            alloc.set_nav(t, top_hs);
            alloc.set_cls(t, top);
        }
    }
    alloc
}
