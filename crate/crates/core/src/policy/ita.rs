use rand::Rng;

use crate::alloc::{ActionMask, ObservationBundle};
use crate::autodiff::{Activation, Dense, EncoderBlock, Graph, ParamStore, Var};

use super::embedding::{CategoryEmbedding, Positional};
use super::heads::{AllocationHeads, HeadLogProbs};
use super::{PolicyConfig, PolicyError};

/// Scalar value estimate from a `1 × n` input.
#[derive(Clone, Debug)]
pub struct ValueHead {
    pub hidden: Dense,
    pub out: Dense,
}

impl ValueHead {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            hidden: Dense::new(store, &format!("{name}.hidden"), input, hidden, Activation::Tanh, rng),
            out: Dense::new(store, &format!("{name}.out"), hidden, 1, Activation::Identity, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, PolicyError> {
        let h = self.hidden.forward(g, x)?;
        Ok(self.out.forward(g, h)?)
    }
}

/// Attention encoder over heterogeneity tokens with per-task heads. Acts
/// once, before execution.
#[derive(Clone, Debug)]
pub struct ItaPolicy {
    pub blocks: Vec<EncoderBlock>,
    pub heads: AllocationHeads,
    pub value: ValueHead,
}

pub struct ItaOutput {
    pub heads: Option<HeadLogProbs>,
    pub value: Var,
}

impl ItaPolicy {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cfg: &PolicyConfig, rng: &mut R) -> Self {
        let d = cfg.d_model;
        Self {
            blocks: (0..cfg.layers)
                .map(|l| EncoderBlock::new(store, &format!("{name}.block{l}"), d, cfg.heads, cfg.ff_hidden, rng))
                .collect(),
            heads: AllocationHeads::new(store, &format!("{name}.heads"), d, cfg.head_hidden, rng),
            value: ValueHead::new(store, &format!("{name}.value"), d, cfg.head_hidden, rng),
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        emb: &CategoryEmbedding,
        pos: &Positional,
        bundle: &ObservationBundle,
        mask: &ActionMask,
    ) -> Result<ItaOutput, PolicyError> {
        let inputs = [
            g.constant(bundle.human_static.clone()),
            g.constant(bundle.robot_static.clone()),
            g.constant(bundle.task_static.clone()),
        ];
        let mut x = emb.forward(g, pos, inputs)?;
        for b in &self.blocks {
            x = b.forward(g, x)?;
        }
        let heads = self.heads.log_probs(g, x, bundle, mask)?;
        let pooled = g.mean_rows(x);
        let value = self.value.forward(g, pooled)?;
        Ok(ItaOutput { heads, value })
    }
}
