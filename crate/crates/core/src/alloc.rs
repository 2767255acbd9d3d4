//! Allocation matrices, validity masks and policy input assembly.
//!
//! An allocation is three 0/1 matrices with one row per task: the carrying
//! robot (an all-zero row leaves the task unassigned), the navigation mode
//! (column 0 is autonomous, column `h + 1` is human `h`) and the
//! classification mode (column 0 is onboard, column `h + 1` is human `h`).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agents::WEIGHT_MAX;
use crate::autodiff::Tensor;
use crate::sim::{Observation, Scenario, TaskStatus, WorldState};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AllocError {
    #[error("allocation shapes differ: {left:?} vs {right:?}")]
    ShapeMismatch { left: [usize; 3], right: [usize; 3] },
    #[error("{what}: expected {expected}, found {found}")]
    Cardinality { what: &'static str, expected: usize, found: usize },
    #[error("invalid allocation json: {0}")]
    Json(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AllocationJson", into = "AllocationJson")]
pub struct Allocation {
    tasks: usize,
    robots: usize,
    humans: usize,
    robot_assign: Vec<u8>,
    nav_assign: Vec<u8>,
    cls_assign: Vec<u8>,
}

/// Index-array wire form; `-1` marks unassigned, autonomous or onboard.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct AllocationJson {
    robots: usize,
    humans: usize,
    robot: Vec<i64>,
    nav: Vec<i64>,
    cls: Vec<i64>,
}

impl From<Allocation> for AllocationJson {
    fn from(a: Allocation) -> Self {
        let enc = |v: Option<usize>| v.map_or(-1, |x| x as i64);
        Self {
            robots: a.robots,
            humans: a.humans,
            robot: (0..a.tasks).map(|t| enc(a.robot_of(t))).collect(),
            nav: (0..a.tasks).map(|t| enc(a.nav_of(t))).collect(),
            cls: (0..a.tasks).map(|t| enc(a.cls_of(t))).collect(),
        }
    }
}

impl TryFrom<AllocationJson> for Allocation {
    type Error = AllocError;

    fn try_from(j: AllocationJson) -> Result<Self, AllocError> {
        let k = j.robot.len();
        if j.nav.len() != k || j.cls.len() != k {
            return Err(AllocError::Json("index arrays differ in length".into()));
        }
        let dec = |v: &[i64], bound: usize, what: &str| -> Result<Vec<Option<usize>>, AllocError> {
            v.iter()
                .map(|&x| match x {
                    -1 => Ok(None),
                    x if x >= 0 && (x as usize) < bound => Ok(Some(x as usize)),
                    x => Err(AllocError::Json(format!("{what} index {x} out of range"))),
                })
                .collect()
        };
        Ok(Allocation::from_choices(
            j.robots,
            j.humans,
            &dec(&j.robot, j.robots, "robot")?,
            &dec(&j.nav, j.humans, "nav")?,
            &dec(&j.cls, j.humans, "cls")?,
        ))
    }
}

fn first_one(row: &[u8]) -> Option<usize> {
    row.iter().position(|&x| x != 0)
}

impl Allocation {
    /// Every task unassigned, autonomous and onboard.
    pub fn empty(tasks: usize, robots: usize, humans: usize) -> Self {
        let mut nav_assign = vec![0; tasks * (humans + 1)];
        for t in 0..tasks {
            nav_assign[t * (humans + 1)] = 1;
        }
        Self {
            tasks,
            robots,
            humans,
            robot_assign: vec![0; tasks * robots],
            cls_assign: nav_assign.clone(),
            nav_assign,
        }
    }

    /// Builds from per-task choices: a robot index, and a human index for
    /// navigation and classification (`None` = autonomous / onboard).
    pub fn from_choices(
        robots: usize,
        humans: usize,
        robot: &[Option<usize>],
        nav: &[Option<usize>],
        cls: &[Option<usize>],
    ) -> Self {
        assert!(robot.len() == nav.len() && nav.len() == cls.len(), "choice vectors differ in length");
        let mut a = Self::empty(robot.len(), robots, humans);
        for t in 0..robot.len() {
            a.set_robot(t, robot[t]);
            a.set_nav(t, nav[t]);
            a.set_cls(t, cls[t]);
        }
        a
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    pub fn robots(&self) -> usize {
        self.robots
    }

    pub fn humans(&self) -> usize {
        self.humans
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.tasks, self.robots, self.humans]
    }

    pub fn robot_row(&self, task: usize) -> &[u8] {
        &self.robot_assign[task * self.robots..(task + 1) * self.robots]
    }

    pub fn nav_row(&self, task: usize) -> &[u8] {
        let w = self.humans + 1;
        &self.nav_assign[task * w..(task + 1) * w]
    }

    pub fn cls_row(&self, task: usize) -> &[u8] {
        let w = self.humans + 1;
        &self.cls_assign[task * w..(task + 1) * w]
    }

    /// Mutable access to raw matrix entries, mainly for constructing
    /// deliberately malformed allocations.
    pub fn row_mut(&mut self, matrix: Matrix, task: usize) -> &mut [u8] {
        let w = self.humans + 1;
        match matrix {
            Matrix::Robot => &mut self.robot_assign[task * self.robots..(task + 1) * self.robots],
            Matrix::Nav => &mut self.nav_assign[task * w..(task + 1) * w],
            Matrix::Cls => &mut self.cls_assign[task * w..(task + 1) * w],
        }
    }

    pub fn robot_of(&self, task: usize) -> Option<usize> {
        first_one(self.robot_row(task))
    }

    /// Navigation collaborator, `None` for autonomous.
    pub fn nav_of(&self, task: usize) -> Option<usize> {
        first_one(self.nav_row(task)).and_then(|c| c.checked_sub(1))
    }

    /// Classifying human, `None` for onboard.
    pub fn cls_of(&self, task: usize) -> Option<usize> {
        first_one(self.cls_row(task)).and_then(|c| c.checked_sub(1))
    }

    pub fn set_robot(&mut self, task: usize, robot: Option<usize>) {
        let row = self.row_mut(Matrix::Robot, task);
        row.fill(0);
        if let Some(r) = robot {
            row[r] = 1;
        }
    }

    pub fn set_nav(&mut self, task: usize, human: Option<usize>) {
        let row = self.row_mut(Matrix::Nav, task);
        row.fill(0);
        row[human.map_or(0, |h| h + 1)] = 1;
    }

    pub fn set_cls(&mut self, task: usize, human: Option<usize>) {
        let row = self.row_mut(Matrix::Cls, task);
        row.fill(0);
        row[human.map_or(0, |h| h + 1)] = 1;
    }

    /// Copies task `task`'s three rows from `other`.
    pub fn copy_row(&mut self, other: &Allocation, task: usize) {
        for m in Matrix::ALL {
            let src = other.row(m, task).to_vec();
            self.row_mut(m, task).copy_from_slice(&src);
        }
    }

    fn row(&self, matrix: Matrix, task: usize) -> &[u8] {
        match matrix {
            Matrix::Robot => self.robot_row(task),
            Matrix::Nav => self.nav_row(task),
            Matrix::Cls => self.cls_row(task),
        }
    }

    pub fn rows_equal(&self, other: &Allocation, task: usize) -> bool {
        Matrix::ALL.iter().all(|&m| self.row(m, task) == other.row(m, task))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("allocation serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Matrix {
    Robot,
    Nav,
    Cls,
}

impl Matrix {
    pub const ALL: [Matrix; 3] = [Matrix::Robot, Matrix::Nav, Matrix::Cls];

    fn name(self) -> &'static str {
        match self {
            Matrix::Robot => "robot_assign",
            Matrix::Nav => "nav_assign",
            Matrix::Cls => "cls_assign",
        }
    }
}

/// Frobenius norm of the stacked differences of the three sub-matrices.
pub fn allocation_diff_frobenius(a: &Allocation, b: &Allocation) -> Result<f64, AllocError> {
    if a.shape() != b.shape() {
        return Err(AllocError::ShapeMismatch { left: a.shape(), right: b.shape() });
    }
    let sq = |x: &[u8], y: &[u8]| x.iter().zip(y).map(|(&p, &q)| (p as f64 - q as f64).powi(2)).sum::<f64>();
    Ok((sq(&a.robot_assign, &b.robot_assign) + sq(&a.nav_assign, &b.nav_assign) + sq(&a.cls_assign, &b.cls_assign))
        .sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    ShapeMismatch { expected: [usize; 3], found: [usize; 3] },
    NonOneHotRow { matrix: String, task: usize },
    FailedRobotAssignment { task: usize, robot: usize },
    LockedRowChanged { task: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ShapeMismatch { expected, found } => {
                write!(f, "shape mismatch: expected {expected:?}, found {found:?}")
            }
            Violation::NonOneHotRow { matrix, task } => write!(f, "non-one-hot row: {matrix} row {task}"),
            Violation::FailedRobotAssignment { task, robot } => {
                write!(f, "failed-robot assignment: task {task} to robot {robot}")
            }
            Violation::LockedRowChanged { task } => write!(f, "locked row changed: task {task} is already in progress"),
        }
    }
}

/// Lists every problem with `alloc` against the current world.
///
/// Rows of tasks already in progress must match the allocation in force.
/// A pending task may stay on a robot that failed after it was assigned
/// (the task simply stalls), but a new or changed row must not name a
/// failed robot.
pub fn validate_allocation(alloc: &Allocation, scenario: &Scenario, world: &WorldState) -> Vec<Violation> {
    let expected = [scenario.num_tasks(), scenario.num_robots(), scenario.num_humans()];
    if alloc.shape() != expected {
        return vec![Violation::ShapeMismatch { expected, found: alloc.shape() }];
    }
    let mut out = Vec::new();
    for t in 0..alloc.tasks {
        for m in Matrix::ALL {
            let s: u32 = alloc.row(m, t).iter().map(|&x| x as u32).sum();
            let ok = alloc.row(m, t).iter().all(|&x| x <= 1) && if m == Matrix::Robot { s <= 1 } else { s == 1 };
            if !ok {
                out.push(Violation::NonOneHotRow { matrix: m.name().into(), task: t });
            }
        }
        let in_force = world.allocation.as_ref();
        let status = world.task_progress[t].status;
        let unchanged = in_force.is_some_and(|a| a.rows_equal(alloc, t));
        if status != TaskStatus::Pending {
            if !unchanged {
                out.push(Violation::LockedRowChanged { task: t });
            }
            continue;
        }
        if let Some(r) = alloc.robot_of(t) {
            if !world.robot_states[r].is_operational() && !unchanged {
                out.push(Violation::FailedRobotAssignment { task: t, robot: r });
            }
        }
    }
    out
}

/// Which choices a policy may make for each task. Locked tasks (already in
/// progress) have no choices; their rows are carried over unchanged.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionMask {
    pub locked: Vec<bool>,
    /// `k × (j + 1)`: robots, then the "none" option in the last column.
    pub robot: Vec<Vec<bool>>,
    pub nav: Vec<Vec<bool>>,
    pub cls: Vec<Vec<bool>>,
}

impl ActionMask {
    pub fn decidable(&self) -> impl Iterator<Item = usize> + '_ {
        self.locked.iter().enumerate().filter(|(_, &l)| !l).map(|(t, _)| t)
    }
}

/// Operational robots are selectable for every pending task; "none" only
/// when no robot is operational. All humans are always selectable.
pub fn build_action_mask(world: &WorldState) -> ActionMask {
    let j = world.robot_states.len();
    let i = world.human_states.len();
    let live: Vec<bool> = world.robot_states.iter().map(|r| r.is_operational()).collect();
    let any_live = live.iter().any(|&x| x);
    let mut mask = ActionMask { locked: Vec::new(), robot: Vec::new(), nav: Vec::new(), cls: Vec::new() };
    for p in &world.task_progress {
        let locked = p.status != TaskStatus::Pending;
        mask.locked.push(locked);
        let mut row = if locked { vec![false; j] } else { live.clone() };
        row.push(!locked && !any_live);
        mask.robot.push(row);
        mask.nav.push(vec![!locked; i + 1]);
        mask.cls.push(vec![!locked; i + 1]);
    }
    mask
}

pub const HUMAN_STATIC_DIM: usize = 5;
pub const ROBOT_STATIC_DIM: usize = 3;
pub const TASK_STATIC_DIM: usize = 7;
pub const HUMAN_STATE_DIM: usize = 5;
pub const ROBOT_STATE_DIM: usize = 5;
pub const TASK_STATE_DIM: usize = 9;
pub const TASK_ALLOC_DIM: usize = 4;
/// Column of the fatigue feature in the human state vector.
pub const FATIGUE_COL: usize = 1;

/// Numeric policy input for one epoch. Static and dynamic features are
/// grouped per entity category in the order humans, robots, tasks.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationBundle {
    pub counts: [usize; 3],
    pub human_static: Tensor,
    pub robot_static: Tensor,
    pub task_static: Tensor,
    pub human_state: Tensor,
    pub robot_state: Tensor,
    pub task_state: Tensor,
    /// Per task: has robot, robot observed failed, autonomous nav, onboard cls.
    pub task_alloc: Tensor,
    /// Normalized robot-to-task distance, `k × j`.
    pub distance: Tensor,
    pub prev_allocation: Allocation,
    pub epoch: u32,
}

fn one_hot(n: usize, i: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |c| if c == i { 1.0 } else { 0.0 })
}

fn table(rows: Vec<Vec<f64>>, cols: usize) -> Tensor {
    let n = rows.len();
    Tensor::from_vec(n, cols, rows.into_iter().flatten().collect()).expect("row widths are fixed")
}

/// Static per-category features of a scenario.
pub fn heterogeneity_features(scenario: &Scenario, speed_scale: f64) -> [Tensor; 3] {
    let [w, h] = scenario.world_size;
    let humans = scenario
        .humans
        .iter()
        .map(|p| {
            let mut v = vec![p.eta / WEIGHT_MAX, p.lambda / WEIGHT_MAX];
            v.extend(one_hot(3, p.skill_class.index()));
            v
        })
        .collect();
    let robots = scenario
        .robots
        .iter()
        .map(|r| {
            let mut v: Vec<f64> = one_hot(2, r.kind.index()).collect();
            v.push(r.base_speed / speed_scale);
            v
        })
        .collect();
    let tasks = scenario
        .tasks
        .iter()
        .map(|t| {
            let mut v = vec![t.location[0] / w, t.location[1] / h];
            v.extend(one_hot(2, t.pollution_type.index()));
            v.extend(one_hot(3, t.difficulty.index()));
            v
        })
        .collect();
    [table(humans, HUMAN_STATIC_DIM), table(robots, ROBOT_STATIC_DIM), table(tasks, TASK_STATIC_DIM)]
}

pub fn robot_state_vector(r: &crate::sim::RobotObs, world_size: [f64; 2]) -> [f64; ROBOT_STATE_DIM] {
    let b = |x: bool| if x { 1.0 } else { 0.0 };
    [
        r.position[0] / world_size[0],
        r.position[1] / world_size[1],
        b(r.operational),
        b(r.idle),
        b(r.current_task.is_some()),
    ]
}

pub fn task_state_vector(t: &crate::sim::TaskObs) -> [f64; TASK_STATE_DIM] {
    let mut v = [0.0; TASK_STATE_DIM];
    v[t.status.index()] = 1.0;
    v[4 + t.pollution_type.index()] = 1.0;
    v[6 + t.difficulty.index()] = 1.0;
    v
}

/// Flattens the heterogeneity profile, an observation and the previous
/// allocation into per-category feature tables.
pub fn assemble_policy_input(
    scenario: &Scenario,
    observation: &Observation,
    prev_allocation: &Allocation,
    epoch: u32,
) -> Result<ObservationBundle, AllocError> {
    let (i, j, k) = (scenario.num_humans(), scenario.num_robots(), scenario.num_tasks());
    let checks = [
        ("observed humans", i, observation.humans.len()),
        ("observed robots", j, observation.robots.len()),
        ("observed tasks", k, observation.tasks.len()),
    ];
    for (what, expected, found) in checks {
        if expected != found {
            return Err(AllocError::Cardinality { what, expected, found });
        }
    }
    if prev_allocation.shape() != [k, j, i] {
        return Err(AllocError::ShapeMismatch { left: prev_allocation.shape(), right: [k, j, i] });
    }
    let t_max = scenario.sim.max_epochs as f64;
    let [human_static, robot_static, task_static] = heterogeneity_features(scenario, 15.0);
    let human_state = table(
        observation
            .humans
            .iter()
            .map(|h| {
                vec![
                    h.working_time as f64 / t_max,
                    h.fatigue,
                    h.idleness as f64 / t_max,
                    h.queue_len as f64 / k as f64,
                    h.situational_awareness,
                ]
            })
            .collect(),
        HUMAN_STATE_DIM,
    );
    let robot_state =
        table(observation.robots.iter().map(|r| robot_state_vector(r, scenario.world_size).to_vec()).collect(), ROBOT_STATE_DIM);
    let task_state = table(observation.tasks.iter().map(|t| task_state_vector(t).to_vec()).collect(), TASK_STATE_DIM);
    let task_alloc = table(
        (0..k)
            .map(|t| {
                let r = prev_allocation.robot_of(t);
                vec![
                    r.is_some() as u8 as f64,
                    r.is_some_and(|r| !observation.robots[r].operational) as u8 as f64,
                    prev_allocation.nav_of(t).is_none() as u8 as f64,
                    prev_allocation.cls_of(t).is_none() as u8 as f64,
                ]
            })
            .collect(),
        TASK_ALLOC_DIM,
    );
    let diag = (scenario.world_size[0].powi(2) + scenario.world_size[1].powi(2)).sqrt();
    let mut distance = Tensor::zeros(k, j);
    for t in 0..k {
        let loc = scenario.tasks[t].location;
        for r in 0..j {
            let p = observation.robots[r].position;
            distance.set(t, r, ((loc[0] - p[0]).powi(2) + (loc[1] - p[1]).powi(2)).sqrt() / diag);
        }
    }
    Ok(ObservationBundle {
        counts: [i, j, k],
        human_static,
        robot_static,
        task_static,
        human_state,
        robot_state,
        task_state,
        task_alloc,
        distance,
        prev_allocation: prev_allocation.clone(),
        epoch,
    })
}
