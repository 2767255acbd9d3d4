use rand::Rng;

use crate::alloc::{
    HUMAN_STATE_DIM, HUMAN_STATIC_DIM, ROBOT_STATE_DIM, ROBOT_STATIC_DIM, TASK_ALLOC_DIM, TASK_STATE_DIM, TASK_STATIC_DIM,
};
use crate::autodiff::{Activation, AutodiffError, Dense, Graph, ParamId, ParamStore, Var};

use super::PolicyError;

/// Learned position table with separate offsets for humans, robots and tasks.
#[derive(Clone, Debug)]
pub struct Positional {
    pub table: ParamId,
    pub max: [usize; 3],
}

impl Positional {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, max: [usize; 3], dim: usize, rng: &mut R) -> Self {
        let rows = max.iter().sum();
        Self { table: store.add_uniform(format!("{name}.table"), rows, dim, dim, rng), max }
    }

    pub fn rows(&self, counts: [usize; 3]) -> Result<Vec<usize>, PolicyError> {
        let mut idx = Vec::with_capacity(counts.iter().sum());
        let mut offset = 0;
        for (c, (&n, &m)) in counts.iter().zip(&self.max).enumerate() {
            if n > m {
                return Err(PolicyError::TooMany { category: ["humans", "robots", "tasks"][c], count: n, max: m });
            }
            idx.extend(offset..offset + n);
            offset += m;
        }
        Ok(idx)
    }
}

/// One affine embedding per entity category plus positional offsets.
#[derive(Clone, Debug)]
pub struct CategoryEmbedding {
    pub human: Dense,
    pub robot: Dense,
    pub task: Dense,
}

impl CategoryEmbedding {
    fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, dims: [usize; 3], d: usize, rng: &mut R) -> Self {
        Self {
            human: Dense::new(store, &format!("{name}.human"), dims[0], d, Activation::Identity, rng),
            robot: Dense::new(store, &format!("{name}.robot"), dims[1], d, Activation::Identity, rng),
            task: Dense::new(store, &format!("{name}.task"), dims[2], d, Activation::Identity, rng),
        }
    }

    pub fn heterogeneity<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d: usize, rng: &mut R) -> Self {
        Self::new(store, name, [HUMAN_STATIC_DIM, ROBOT_STATIC_DIM, TASK_STATIC_DIM], d, rng)
    }

    pub fn state<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d: usize, rng: &mut R) -> Self {
        Self::new(store, name, [HUMAN_STATE_DIM, ROBOT_STATE_DIM, TASK_STATE_DIM + TASK_ALLOC_DIM], d, rng)
    }

    /// Token matrix `(i + j + k) × d`, humans then robots then tasks.
    pub fn forward(&self, g: &mut Graph, pos: &Positional, inputs: [Var; 3]) -> Result<Var, PolicyError> {
        let counts = inputs.map(|v| g.value(v).rows());
        let rows = pos.rows(counts)?;
        let parts = [
            self.human.forward(g, inputs[0])?,
            self.robot.forward(g, inputs[1])?,
            self.task.forward(g, inputs[2])?,
        ];
        let emb = g.concat_rows(&parts)?;
        let table = g.param(pos.table);
        let p = g.gather_rows(table, &rows)?;
        Ok(g.add(emb, p)?)
    }
}

/// Splits a token matrix back into its three category blocks.
pub fn split_tokens(g: &mut Graph, tokens: Var, counts: [usize; 3]) -> Result<[Var; 3], AutodiffError> {
    let [i, j, k] = counts;
    Ok([g.slice_rows(tokens, 0, i)?, g.slice_rows(tokens, i, j)?, g.slice_rows(tokens, i + j, k)?])
}
