use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::rng::EpisodeRng;
use super::{TaskStatus, UncertaintyConfig, WorldState};
use crate::agents::{Difficulty, PollutionType};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanObs {
    pub working_time: u32,
    /// Noisy fatigue clamped to `[0, 1]`.
    pub fatigue: f64,
    /// Noisy fatigue before clamping.
    pub fatigue_raw: f64,
    pub idleness: u32,
    pub queue_len: usize,
    pub situational_awareness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotObs {
    pub position: [f64; 2],
    pub operational: bool,
    pub idle: bool,
    pub current_task: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskObs {
    pub status: TaskStatus,
    pub pollution_type: PollutionType,
    pub difficulty: Difficulty,
}

/// What the policies see at one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub time: u32,
    pub humans: Vec<HumanObs>,
    pub robots: Vec<RobotObs>,
    pub tasks: Vec<TaskObs>,
    /// Per robot: position, condition, idle, current-task staleness flags.
    pub robot_delayed: Vec<[bool; 4]>,
    /// Per task: status, pollution type, difficulty staleness flags.
    pub task_delayed: Vec<[bool; 3]>,
}

impl Observation {
    /// The uncorrupted view of `world`.
    pub fn truth(world: &WorldState) -> Self {
        Self {
            time: world.time,
            humans: world
                .human_states
                .iter()
                .map(|h| HumanObs {
                    working_time: h.working_time,
                    fatigue: h.fatigue_true,
                    fatigue_raw: h.fatigue_true,
                    idleness: h.idleness,
                    queue_len: h.queue.len(),
                    situational_awareness: h.situational_awareness,
                })
                .collect(),
            robots: world
                .robot_states
                .iter()
                .map(|r| RobotObs {
                    position: r.position,
                    operational: r.is_operational(),
                    idle: r.idle,
                    current_task: r.current_task,
                })
                .collect(),
            tasks: world
                .task_progress
                .iter()
                .map(|t| TaskObs {
                    status: t.status,
                    pollution_type: t.current_spec.pollution_type,
                    difficulty: t.current_spec.difficulty,
                })
                .collect(),
            robot_delayed: vec![[false; 4]; world.robot_states.len()],
            task_delayed: vec![[false; 3]; world.task_progress.len()],
        }
    }
}

fn stale<R: Rng + ?Sized, T: Clone>(fresh: &mut T, prev: Option<&T>, p: f64, rng: &mut R) -> bool {
    // Always draw so the latency stream stays aligned across epochs.
    let hit = rng.random::<f64>() < p;
    match prev {
        Some(old) if hit => {
            *fresh = old.clone();
            true
        }
        _ => false,
    }
}

/// Corrupts the ground truth: Gaussian noise on fatigue and per-field
/// staleness on robot and task fields. Human working time and idleness are
/// always exact. Without `prev` no field can be stale.
pub fn observe(
    world: &WorldState,
    prev: Option<&Observation>,
    uncertainty: &UncertaintyConfig,
    rng: &mut EpisodeRng,
) -> Observation {
    let mut obs = Observation::truth(world);
    let sd = uncertainty.fatigue_noise_variance.max(0.0).sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    for h in &mut obs.humans {
        let raw = h.fatigue + sd * normal.sample(&mut rng.noise);
        h.fatigue_raw = raw;
        h.fatigue = raw.clamp(0.0, 1.0);
    }
    let p = uncertainty.latency_probability;
    let rng = &mut rng.latency;
    for (r, robot) in obs.robots.iter_mut().enumerate() {
        let old = prev.map(|o| &o.robots[r]);
        obs.robot_delayed[r] = [
            stale(&mut robot.position, old.map(|o| &o.position), p, rng),
            stale(&mut robot.operational, old.map(|o| &o.operational), p, rng),
            stale(&mut robot.idle, old.map(|o| &o.idle), p, rng),
            stale(&mut robot.current_task, old.map(|o| &o.current_task), p, rng),
        ];
    }
    for (t, task) in obs.tasks.iter_mut().enumerate() {
        let old = prev.map(|o| &o.tasks[t]);
        obs.task_delayed[t] = [
            stale(&mut task.status, old.map(|o| &o.status), p, rng),
            stale(&mut task.pollution_type, old.map(|o| &o.pollution_type), p, rng),
            stale(&mut task.difficulty, old.map(|o| &o.difficulty), p, rng),
        ];
    }
    obs
}
