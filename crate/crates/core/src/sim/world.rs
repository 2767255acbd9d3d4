use rand::Rng;

use super::rng::EpisodeRng;
use super::{RandomEvent, Scenario, SimError, StepOutcome, TaskProgress, TaskStatus, WorldState};
use crate::agents::{
    image_quality, Difficulty, HumanState, ModelConstants, NavMode, PollutionType, RobotCondition, RobotState,
};
use crate::alloc::{validate_allocation, Allocation};

/// Signed points for one resolved classification.
pub fn score_classification(difficulty: Difficulty, correct: bool) -> i64 {
    if correct {
        difficulty.points()
    } else {
        -difficulty.points()
    }
}

pub fn init_episode(scenario: &Scenario) -> WorldState {
    WorldState {
        time: 0,
        human_states: vec![HumanState::default(); scenario.num_humans()],
        robot_states: vec![RobotState::at(scenario.sim.depot); scenario.num_robots()],
        task_progress: scenario
            .tasks
            .iter()
            .map(|t| TaskProgress {
                status: TaskStatus::Pending,
                classified_correct: None,
                current_spec: t.clone(),
                robot: None,
                quality: None,
            })
            .collect(),
        cumulative_score: 0,
        allocation: None,
        terminal: false,
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn nav_mode(scenario: &Scenario, alloc: &Allocation, task: usize) -> NavMode {
    match alloc.nav_of(task) {
        Some(h) => NavMode::Collaborative(scenario.humans[h].skill_class),
        None => NavMode::Auto,
    }
}

/// Advances one decision epoch under `alloc`.
///
/// Idle robots start the nearest pending task assigned to them, robots move
/// toward their POI, arrivals capture an image and are either classified
/// onboard or queued for their human, and each human resolves at most one
/// queued request.
pub fn step(
    scenario: &Scenario,
    constants: &ModelConstants,
    world: &mut WorldState,
    alloc: &Allocation,
    rng: &EpisodeRng,
) -> Result<StepOutcome, SimError> {
    if world.terminal {
        return Err(SimError::Terminal);
    }
    let violations = validate_allocation(alloc, scenario, world);
    if !violations.is_empty() {
        return Err(SimError::InvalidAllocation(violations));
    }

    if let Some(prev) = &world.allocation {
        for (task, p) in world.task_progress.iter().enumerate() {
            if p.status != TaskStatus::Pending {
                continue;
            }
            let mut touched = Vec::with_capacity(2);
            if alloc.nav_of(task) != prev.nav_of(task) {
                touched.extend(alloc.nav_of(task));
            }
            if alloc.cls_of(task) != prev.cls_of(task) {
                touched.extend(alloc.cls_of(task));
            }
            touched.dedup();
            for h in touched {
                let s = &mut world.human_states[h];
                s.reassignments_received += 1;
                s.situational_awareness = constants.situational_awareness(s.reassignments_received);
            }
        }
    }
    world.allocation = Some(alloc.clone());

    let mut outcome = StepOutcome::default();
    let epoch = scenario.sim.epoch_seconds;

    for r in 0..world.robot_states.len() {
        let robot = &world.robot_states[r];
        if !robot.is_operational() || robot.current_task.is_some() {
            continue;
        }
        let pos = robot.position;
        let next = world
            .task_progress
            .iter()
            .enumerate()
            .filter(|(t, p)| p.status == TaskStatus::Pending && alloc.robot_of(*t) == Some(r))
            .map(|(t, p)| (t, dist(pos, p.current_spec.location)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        if let Some((t, _)) = next {
            let p = &mut world.task_progress[t];
            p.status = TaskStatus::Navigating;
            p.robot = Some(r);
            let robot = &mut world.robot_states[r];
            robot.current_task = Some(t);
            robot.idle = false;
        }
    }

    for r in 0..world.robot_states.len() {
        let Some(t) = world.robot_states[r].current_task else { continue };
        let nav = nav_mode(scenario, alloc, t);
        let speed = constants.robot_speed(&scenario.robots[r], &world.robot_states[r], nav)?;
        let target = world.task_progress[t].current_spec.location;
        let robot = &mut world.robot_states[r];
        let d = dist(robot.position, target);
        let reach = speed * epoch;
        if d > reach {
            let f = reach / d;
            robot.position[0] += (target[0] - robot.position[0]) * f;
            robot.position[1] += (target[1] - robot.position[1]) * f;
            continue;
        }
        robot.position = target;
        robot.current_task = None;
        robot.idle = true;

        let p = &mut world.task_progress[t];
        let quality = image_quality(scenario.robots[r].kind, p.current_spec.pollution_type, nav);
        p.quality = Some(quality);
        match alloc.cls_of(t) {
            None => {
                let prob = constants.robot_classification_prob(quality, p.current_spec.difficulty);
                let correct = rng.outcome(t).random::<f64>() < prob;
                p.status = TaskStatus::Classified;
                p.classified_correct = Some(correct);
                outcome.r_perf += score_classification(p.current_spec.difficulty, correct);
                outcome.completed_task_ids.push(t);
            }
            Some(h) => {
                p.status = TaskStatus::ImageCaptured;
                world.human_states[h].queue.push_back(t);
            }
        }
    }

    for h in 0..world.human_states.len() {
        let mut outcome_rng = match world.human_states[h].queue.front() {
            Some(&t) => rng.outcome(t),
            None => rng.outcome(usize::MAX),
        };
        let progress = &world.task_progress;
        let resolved = constants.advance_human_queue(
            &scenario.humans[h],
            &mut world.human_states[h],
            |t| progress[t].current_spec.difficulty,
            &mut outcome_rng,
        );
        if let Some((t, correct)) = resolved {
            let p = &mut world.task_progress[t];
            p.status = TaskStatus::Classified;
            p.classified_correct = Some(correct);
            outcome.r_perf += score_classification(p.current_spec.difficulty, correct);
            outcome.completed_task_ids.push(t);
        }
    }

    world.time += 1;
    world.cumulative_score += outcome.r_perf;
    world.terminal = world.classified_count() == world.task_progress.len()
        || world.time >= scenario.sim.max_epochs
        || (world.operational_robots() == 0 && world.human_states.iter().all(|h| h.queue.is_empty()));
    Ok(outcome)
}

/// With probability `event_probability`, redraws one unclassified task's
/// attributes or fails one operational robot. The kind is chosen uniformly;
/// when it has no valid target the other kind is used.
pub fn apply_random_events<R: Rng + ?Sized>(
    world: &mut WorldState,
    event_probability: f64,
    rng: &mut R,
) -> Vec<RandomEvent> {
    if !(rng.random::<f64>() < event_probability) {
        return Vec::new();
    }
    let want_failure = rng.random::<bool>();
    let open_tasks: Vec<usize> = (0..world.task_progress.len())
        .filter(|&t| world.task_progress[t].status != TaskStatus::Classified)
        .collect();
    let live_robots: Vec<usize> = (0..world.robot_states.len()).filter(|&r| world.robot_states[r].is_operational()).collect();
    let failure = match (want_failure, open_tasks.is_empty(), live_robots.is_empty()) {
        (_, true, true) => return Vec::new(),
        (true, _, false) | (false, true, false) => true,
        _ => false,
    };
    if failure {
        let r = live_robots[rng.random_range(0..live_robots.len())];
        let robot = &mut world.robot_states[r];
        robot.condition = RobotCondition::Failed;
        robot.idle = false;
        if let Some(t) = robot.current_task.take() {
            let p = &mut world.task_progress[t];
            p.status = TaskStatus::Pending;
            p.robot = None;
        }
        vec![RandomEvent::RobotFailure { target_id: r }]
    } else {
        let t = open_tasks[rng.random_range(0..open_tasks.len())];
        let pollution_type = PollutionType::ALL[rng.random_range(0..2)];
        let difficulty = Difficulty::ALL[rng.random_range(0..3)];
        let spec = &mut world.task_progress[t].current_spec;
        spec.pollution_type = pollution_type;
        spec.difficulty = difficulty;
        vec![RandomEvent::PoiAttributeChange { target_id: t, pollution_type, difficulty }]
    }
}

/// No robot is travelling, no human has queued work, and every pending task
/// is assigned to a failed robot or to none. Under an unchanged allocation
/// the score can no longer move.
pub fn is_quiescent(world: &WorldState) -> bool {
    let Some(alloc) = &world.allocation else { return false };
    world.robot_states.iter().all(|r| r.current_task.is_none())
        && world.human_states.iter().all(|h| h.queue.is_empty())
        && world.task_progress.iter().enumerate().all(|(t, p)| {
            p.status != TaskStatus::Pending
                || alloc.robot_of(t).is_none_or(|r| !world.robot_states[r].is_operational())
        })
}
