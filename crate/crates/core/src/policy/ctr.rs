//! Conditional reallocation: a recurrent condition head deciding whether to
//! reallocate and a recurrent reallocation head deciding how.

use rand::Rng;

use crate::alloc::{ActionMask, ObservationBundle, FATIGUE_COL, HUMAN_STATE_DIM};
use crate::autodiff::{Activation, Dense, EncoderBlock, Graph, GruCell, ParamStore, Tensor, Var};

use super::embedding::{CategoryEmbedding, Positional};
use super::heads::{AllocationHeads, HeadLogProbs};
use super::ita::ValueHead;
use super::recon::{fuse_graph, CvaeOutput, CvaeReconstructor, LatentMode};
use super::{PolicyConfig, PolicyError};

/// Hand-made global features appended to the pooled summary.
pub const GLOBAL_DIM: usize = 4;

/// Epoch fraction, share of pending tasks whose robot is missing or seen as
/// failed, share of pending tasks, share of robots seen as operational.
pub fn global_features(bundle: &ObservationBundle, max_epochs: u32) -> Tensor {
    let [_, j, k] = bundle.counts;
    let mut stranded = 0.0;
    let mut pending = 0.0;
    for t in 0..k {
        if bundle.task_state.get(t, 0) > 0.5 {
            pending += 1.0;
            if bundle.task_alloc.get(t, 0) < 0.5 || bundle.task_alloc.get(t, 1) > 0.5 {
                stranded += 1.0;
            }
        }
    }
    let live: f64 = (0..j).map(|r| bundle.robot_state.get(r, 2)).sum();
    Tensor::row(&[
        bundle.epoch as f64 / max_epochs as f64,
        if pending > 0.0 { stranded / pending } else { 0.0 },
        pending / k as f64,
        live / j as f64,
    ])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FatigueMode {
    /// Use the observed fatigue as is.
    Raw,
    Cvae(LatentMode),
}

/// Per-epoch input to the reallocation stack. `robot_state` and
/// `task_state` are the (possibly fused) tables replacing the bundle's raw
/// ones.
pub struct CtrInput<'a> {
    pub bundle: &'a ObservationBundle,
    pub robot_state: &'a Tensor,
    pub task_state: &'a Tensor,
    pub fatigue: FatigueMode,
    pub noise: Option<&'a Tensor>,
    pub max_epochs: u32,
}

pub struct CtrEncoding {
    pub tokens: Var,
    pub summary: Var,
    /// Observed fatigue and the cVAE output, when it ran.
    pub fatigue_obs: Var,
    pub cvae: Option<CvaeOutput>,
}

pub struct ConditionOutput {
    /// `1 × 2` log-probabilities of keep, reallocate.
    pub log_probs: Var,
    pub hidden: Var,
    pub value: Var,
}

pub struct ReallocOutput {
    pub heads: Option<HeadLogProbs>,
    pub hidden: Var,
    pub value: Var,
}

#[derive(Clone, Debug)]
pub struct CtrPolicy {
    /// Present when heterogeneity embeddings are not shared with the
    /// initial-allocation policy.
    pub own_heterogeneity: Option<CategoryEmbedding>,
    pub state: CategoryEmbedding,
    pub token: Dense,
    pub cond_gru: GruCell,
    pub cond_logits: Dense,
    pub cond_value: ValueHead,
    pub tr_gru: GruCell,
    pub tr_context: Dense,
    pub tr_block: EncoderBlock,
    pub tr_heads: AllocationHeads,
    pub tr_value: ValueHead,
}

impl CtrPolicy {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cfg: &PolicyConfig, rng: &mut R) -> Self {
        let d = cfg.d_model;
        let h = cfg.ctr_hidden;
        let summary = 3 * d + GLOBAL_DIM;
        Self {
            own_heterogeneity: (!cfg.share_embeddings)
                .then(|| CategoryEmbedding::heterogeneity(store, &format!("{name}.hetero"), d, rng)),
            state: CategoryEmbedding::state(store, &format!("{name}.state"), d, rng),
            token: Dense::new(store, &format!("{name}.token"), 2 * d, d, Activation::Tanh, rng),
            cond_gru: GruCell::new(store, &format!("{name}.cond_gru"), summary, h, rng),
            cond_logits: Dense::new(store, &format!("{name}.cond_logits"), h, 2, Activation::Identity, rng),
            cond_value: ValueHead::new(store, &format!("{name}.cond_value"), h, cfg.head_hidden, rng),
            tr_gru: GruCell::new(store, &format!("{name}.tr_gru"), summary, h, rng),
            tr_context: Dense::new(store, &format!("{name}.tr_context"), h, d, Activation::Identity, rng),
            tr_block: EncoderBlock::new(store, &format!("{name}.tr_block"), d, cfg.heads, cfg.ff_hidden, rng),
            tr_heads: AllocationHeads::new(store, &format!("{name}.tr_heads"), d, cfg.head_hidden, rng),
            tr_value: ValueHead::new(store, &format!("{name}.tr_value"), h, cfg.head_hidden, rng),
        }
    }

    /// Embeds heterogeneity and (reconstructed) state into one token per
    /// entity and pools a per-category summary.
    pub fn encode(
        &self,
        g: &mut Graph,
        shared_heterogeneity: &CategoryEmbedding,
        pos: &Positional,
        cvae: &CvaeReconstructor,
        input: &CtrInput,
    ) -> Result<CtrEncoding, PolicyError> {
        let b = input.bundle;
        let hetero = self.own_heterogeneity.as_ref().unwrap_or(shared_heterogeneity);
        let statics = [
            g.constant(b.human_static.clone()),
            g.constant(b.robot_static.clone()),
            g.constant(b.task_static.clone()),
        ];
        let x_i = hetero.forward(g, pos, statics)?;

        let human_raw = g.constant(b.human_state.clone());
        let fatigue_obs = g.slice_cols(human_raw, FATIGUE_COL, 1)?;
        let (fatigue, cvae_out) = match input.fatigue {
            FatigueMode::Raw => (fatigue_obs, None),
            FatigueMode::Cvae(mode) => {
                let working = g.slice_cols(human_raw, 0, 1)?;
                let cog = g.constant(b.human_static.clone());
                let cog = g.slice_cols(cog, 0, 1)?;
                let out = cvae.forward(g, fatigue_obs, working, cog, mode, input.noise)?;
                (fuse_graph(g, out.recon, fatigue_obs)?, Some(out))
            }
        };
        let before = g.slice_cols(human_raw, 0, FATIGUE_COL)?;
        let after = g.slice_cols(human_raw, FATIGUE_COL + 1, HUMAN_STATE_DIM - FATIGUE_COL - 1)?;
        let human_state = g.concat_cols(&[before, fatigue, after])?;
        let robot_state = g.constant(input.robot_state.clone());
        let task_state = g.constant(input.task_state.clone());
        let alloc = g.constant(b.task_alloc.clone());
        let task_state = g.concat_cols(&[task_state, alloc])?;
        let x_s = self.state.forward(g, pos, [human_state, robot_state, task_state])?;

        let joined = g.concat_cols(&[x_i, x_s])?;
        let tokens = self.token.forward(g, joined)?;
        let [i, j, k] = b.counts;
        let hs = g.slice_rows(tokens, 0, i)?;
        let rs = g.slice_rows(tokens, i, j)?;
        let ts = g.slice_rows(tokens, i + j, k)?;
        let pooled = [g.mean_rows(hs), g.mean_rows(rs), g.mean_rows(ts)];
        let global = g.constant(global_features(b, input.max_epochs));
        let summary = g.concat_cols(&[pooled[0], pooled[1], pooled[2], global])?;
        Ok(CtrEncoding { tokens, summary, fatigue_obs, cvae: cvae_out })
    }

    pub fn condition(&self, g: &mut Graph, enc: &CtrEncoding, hidden: &Tensor) -> Result<ConditionOutput, PolicyError> {
        let h = g.constant(hidden.clone());
        let h = self.cond_gru.forward(g, enc.summary, h)?;
        let logits = self.cond_logits.forward(g, h)?;
        let log_probs = g.log_softmax_masked(logits, &[true, true])?;
        let value = self.cond_value.forward(g, h)?;
        Ok(ConditionOutput { log_probs, hidden: h, value })
    }

    pub fn realloc(
        &self,
        g: &mut Graph,
        enc: &CtrEncoding,
        hidden: &Tensor,
        bundle: &ObservationBundle,
        mask: &ActionMask,
    ) -> Result<ReallocOutput, PolicyError> {
        let h = g.constant(hidden.clone());
        let h = self.tr_gru.forward(g, enc.summary, h)?;
        let ctx = self.tr_context.forward(g, h)?;
        let tokens = g.add_row(enc.tokens, ctx)?;
        let tokens = self.tr_block.forward(g, tokens)?;
        let heads = self.tr_heads.log_probs(g, tokens, bundle, mask)?;
        let value = self.tr_value.forward(g, h)?;
        Ok(ReallocOutput { heads, hidden: h, value })
    }
}
