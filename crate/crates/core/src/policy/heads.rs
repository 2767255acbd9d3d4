//! Per-task factored decision heads shared by initial allocation and
//! reallocation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alloc::{ActionMask, Allocation, ObservationBundle};
use crate::autodiff::{categorical_sample, masked_argmax, Activation, AutodiffError, Dense, Graph, ParamId, ParamStore, Tensor, Var};

use super::embedding::split_tokens;
use super::PolicyError;

/// Scores (task, candidate) pairs with a small MLP over both tokens, their
/// elementwise product and hand-made pair features.
#[derive(Clone, Debug)]
pub struct PairHead {
    pub hidden: Dense,
    pub out: Dense,
    pub pair_dim: usize,
}

impl PairHead {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d: usize, pair_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            hidden: Dense::new(store, &format!("{name}.hidden"), 3 * d + pair_dim, hidden, Activation::Tanh, rng),
            out: Dense::new(store, &format!("{name}.out"), hidden, 1, Activation::Identity, rng),
            pair_dim,
        }
    }

    /// `rows` is `t × d`, `cands` is `c × d`, `pair` is `(t·c) × pair_dim`
    /// in row-major (task, candidate) order. Returns `t × c` logits.
    pub fn logits(&self, g: &mut Graph, rows: Var, cands: Var, pair: Tensor) -> Result<Var, AutodiffError> {
        let t = g.value(rows).rows();
        let c = g.value(cands).rows();
        let ri: Vec<usize> = (0..t).flat_map(|r| std::iter::repeat_n(r, c)).collect();
        let ci: Vec<usize> = (0..t).flat_map(|_| 0..c).collect();
        let a = g.gather_rows(rows, &ri)?;
        let b = g.gather_rows(cands, &ci)?;
        let ab = g.mul(a, b)?;
        let pf = g.constant(pair);
        let x = g.concat_cols(&[a, b, ab, pf])?;
        let h = self.hidden.forward(g, x)?;
        let o = self.out.forward(g, h)?;
        g.reshape(o, t, c)
    }
}

/// Column choices for one task: robot index (`j` = none), navigation column
/// (0 = autonomous), classification column (0 = onboard).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadChoice {
    pub robot: usize,
    pub nav: usize,
    pub cls: usize,
}

/// Masked log-probabilities for the decidable tasks.
pub struct HeadLogProbs {
    pub tasks: Vec<usize>,
    pub robot: Var,
    pub nav: Var,
    pub cls: Var,
    robot_mask: Vec<bool>,
    nav_mask: Vec<bool>,
    cls_mask: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct AllocationHeads {
    pub robot: PairHead,
    pub nav: PairHead,
    pub cls: PairHead,
    pub none_token: ParamId,
    pub auto_token: ParamId,
    pub onboard_token: ParamId,
}

impl AllocationHeads {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            robot: PairHead::new(store, &format!("{name}.robot"), d, 3, hidden, rng),
            nav: PairHead::new(store, &format!("{name}.nav"), d, 1, hidden, rng),
            cls: PairHead::new(store, &format!("{name}.cls"), d, 1, hidden, rng),
            none_token: store.add_uniform(format!("{name}.none_token"), 1, d, d, rng),
            auto_token: store.add_uniform(format!("{name}.auto_token"), 1, d, d, rng),
            onboard_token: store.add_uniform(format!("{name}.onboard_token"), 1, d, d, rng),
        }
    }

    /// `None` when every task is locked.
    pub fn log_probs(
        &self,
        g: &mut Graph,
        tokens: Var,
        bundle: &ObservationBundle,
        mask: &ActionMask,
    ) -> Result<Option<HeadLogProbs>, PolicyError> {
        let tasks: Vec<usize> = mask.decidable().collect();
        if tasks.is_empty() {
            return Ok(None);
        }
        let [i, j, _] = bundle.counts;
        let prev = &bundle.prev_allocation;
        let [humans, robots, all_tasks] = split_tokens(g, tokens, bundle.counts)?;
        let rows = g.gather_rows(all_tasks, &tasks)?;

        let none = g.param(self.none_token);
        let robot_c = g.concat_rows(&[robots, none])?;
        let mut pf = Vec::with_capacity(tasks.len() * (j + 1) * 3);
        for &t in &tasks {
            let cur = prev.robot_of(t);
            for r in 0..j {
                pf.extend([bundle.distance.get(t, r), (cur == Some(r)) as u8 as f64, 0.0]);
            }
            pf.extend([0.0, cur.is_none() as u8 as f64, 1.0]);
        }
        let pf = Tensor::from_vec(tasks.len() * (j + 1), 3, pf)?;
        let robot_logits = self.robot.logits(g, rows, robot_c, pf)?;

        let prev_cols = |row: &[u8]| -> Vec<f64> { row.iter().map(|&x| x as f64).collect() };
        let auto = g.param(self.auto_token);
        let nav_c = g.concat_rows(&[auto, humans])?;
        let nav_pf: Vec<f64> = tasks.iter().flat_map(|&t| prev_cols(prev.nav_row(t))).collect();
        let nav_logits = self.nav.logits(g, rows, nav_c, Tensor::from_vec(tasks.len() * (i + 1), 1, nav_pf)?)?;

        let onboard = g.param(self.onboard_token);
        let cls_c = g.concat_rows(&[onboard, humans])?;
        let cls_pf: Vec<f64> = tasks.iter().flat_map(|&t| prev_cols(prev.cls_row(t))).collect();
        let cls_logits = self.cls.logits(g, rows, cls_c, Tensor::from_vec(tasks.len() * (i + 1), 1, cls_pf)?)?;

        let flat = |m: &[Vec<bool>]| -> Vec<bool> { tasks.iter().flat_map(|&t| m[t].iter().copied()).collect() };
        let (robot_mask, nav_mask, cls_mask) = (flat(&mask.robot), flat(&mask.nav), flat(&mask.cls));
        Ok(Some(HeadLogProbs {
            robot: g.log_softmax_masked(robot_logits, &robot_mask)?,
            nav: g.log_softmax_masked(nav_logits, &nav_mask)?,
            cls: g.log_softmax_masked(cls_logits, &cls_mask)?,
            tasks,
            robot_mask,
            nav_mask,
            cls_mask,
        }))
    }
}

impl HeadLogProbs {
    /// Samples each head independently, or takes the arg-max when `rng` is
    /// `None`.
    pub fn choose<R: Rng + ?Sized>(&self, g: &Graph, mut rng: Option<&mut R>) -> Result<Vec<HeadChoice>, AutodiffError> {
        let mut pick = |v: Var, mask: &[bool], row: usize| -> Result<usize, AutodiffError> {
            let t = g.value(v);
            let c = t.cols();
            let lp = t.row_slice(row);
            let m = &mask[row * c..(row + 1) * c];
            Ok(match rng.as_deref_mut() {
                Some(r) => categorical_sample(lp, m, r)?.0,
                None => masked_argmax(lp, m)?.0,
            })
        };
        (0..self.tasks.len())
            .map(|row| {
                Ok(HeadChoice {
                    robot: pick(self.robot, &self.robot_mask, row)?,
                    nav: pick(self.nav, &self.nav_mask, row)?,
                    cls: pick(self.cls, &self.cls_mask, row)?,
                })
            })
            .collect()
    }

    /// Joint log-probability (sum over tasks and heads), `1 × 1`.
    pub fn log_prob(&self, g: &mut Graph, choices: &[HeadChoice]) -> Result<Var, AutodiffError> {
        let r = g.pick(self.robot, &choices.iter().map(|c| c.robot).collect::<Vec<_>>())?;
        let n = g.pick(self.nav, &choices.iter().map(|c| c.nav).collect::<Vec<_>>())?;
        let c = g.pick(self.cls, &choices.iter().map(|c| c.cls).collect::<Vec<_>>())?;
        let s = g.add(r, n)?;
        let s = g.add(s, c)?;
        Ok(g.sum_all(s))
    }

    /// Sum of the per-head entropies, `1 × 1`. Masked entries hold log-prob
    /// 0, so `exp(lp)·lp` vanishes there without an explicit mask.
    pub fn entropy(&self, g: &mut Graph) -> Result<Var, AutodiffError> {
        let mut total = None;
        for v in [self.robot, self.nav, self.cls] {
            let p = g.exp(v);
            let plp = g.mul(p, v)?;
            let s = g.sum_all(plp);
            total = Some(match total {
                None => s,
                Some(t) => g.add(t, s)?,
            });
        }
        Ok(g.scale(total.expect("three heads"), -1.0))
    }
}

/// Starts from `base` and overwrites the rows of the decided tasks.
pub fn compose_allocation(base: &Allocation, tasks: &[usize], choices: &[HeadChoice]) -> Allocation {
    let mut a = base.clone();
    let j = a.robots();
    for (&t, c) in tasks.iter().zip(choices) {
        a.set_robot(t, (c.robot < j).then_some(c.robot));
        a.set_nav(t, c.nav.checked_sub(1));
        a.set_cls(t, c.cls.checked_sub(1));
    }
    a
}
