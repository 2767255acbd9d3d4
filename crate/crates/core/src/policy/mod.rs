//! Allocation policies and state reconstructors.

pub mod ctr;
pub mod embedding;
pub mod heads;
pub mod ita;
pub mod recon;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alloc::{ROBOT_STATE_DIM, TASK_STATE_DIM};
use crate::autodiff::{AutodiffError, Checkpoint, ParamStore};

pub use ctr::{CtrEncoding, CtrInput, CtrPolicy, FatigueMode};
pub use embedding::{CategoryEmbedding, Positional};
pub use heads::{compose_allocation, AllocationHeads, HeadChoice, HeadLogProbs, PairHead};
pub use ita::{ItaOutput, ItaPolicy, ValueHead};
pub use recon::{fuse, padded_window, CvaeReconstructor, GruReconstructor, LatentMode};

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("{count} {category} exceed the positional table size {max}")]
    TooMany { category: &'static str, count: usize, max: usize },
    #[error("reconstruction window is empty")]
    EmptyWindow,
    #[error("reallocation head invoked in an epoch where the condition head chose keep")]
    ReallocAfterKeep,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_hidden: usize,
    pub head_hidden: usize,
    /// Hidden size of the condition and reallocation GRUs.
    pub ctr_hidden: usize,
    pub latent_dim: usize,
    pub cvae_cond: usize,
    pub cvae_hidden: usize,
    pub window: usize,
    pub recon_hidden: usize,
    /// Positional table capacity for humans, robots, tasks.
    pub max_entities: [usize; 3],
    pub share_embeddings: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            heads: 4,
            layers: 2,
            ff_hidden: 128,
            head_hidden: 32,
            ctr_hidden: 64,
            latent_dim: 8,
            cvae_cond: 8,
            cvae_hidden: 32,
            window: 8,
            recon_hidden: 32,
            max_entities: [16, 32, 128],
            share_embeddings: true,
        }
    }
}

impl PolicyConfig {
    /// A tiny configuration for gradient checks and unit tests.
    pub fn tiny() -> Self {
        Self {
            d_model: 4,
            heads: 2,
            layers: 1,
            ff_hidden: 4,
            head_hidden: 3,
            ctr_hidden: 3,
            latent_dim: 2,
            cvae_cond: 2,
            cvae_hidden: 3,
            window: 3,
            recon_hidden: 3,
            max_entities: [4, 4, 6],
            share_embeddings: true,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(format!("policy.d_model ({}) must be a positive multiple of policy.heads ({})", self.d_model, self.heads));
        }
        let sizes = [
            ("ff_hidden", self.ff_hidden),
            ("head_hidden", self.head_hidden),
            ("ctr_hidden", self.ctr_hidden),
            ("latent_dim", self.latent_dim),
            ("cvae_cond", self.cvae_cond),
            ("cvae_hidden", self.cvae_hidden),
            ("window", self.window),
            ("recon_hidden", self.recon_hidden),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(format!("policy.{name} must be positive"));
            }
        }
        Ok(())
    }
}

/// All networks of the method. `params` is optimized by reinforcement
/// learning (together with the cVAE); `recon_params` holds the GRU
/// reconstructors, trained separately by regression and then frozen.
#[derive(Clone, Debug)]
pub struct AtaHrl {
    pub config: PolicyConfig,
    pub params: ParamStore,
    pub recon_params: ParamStore,
    pub positional: Positional,
    pub heterogeneity: CategoryEmbedding,
    pub ita: ItaPolicy,
    pub ctr: CtrPolicy,
    pub cvae: CvaeReconstructor,
    pub robot_recon: GruReconstructor,
    pub task_recon: GruReconstructor,
}

impl AtaHrl {
    pub fn new(config: PolicyConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::default();
        let c = &config;
        let positional = Positional::new(&mut params, "pos", c.max_entities, c.d_model, &mut rng);
        let heterogeneity = CategoryEmbedding::heterogeneity(&mut params, "hetero", c.d_model, &mut rng);
        let ita = ItaPolicy::new(&mut params, "ita", c, &mut rng);
        let ctr = CtrPolicy::new(&mut params, "ctr", c, &mut rng);
        let cvae = CvaeReconstructor::new(&mut params, "cvae", c.cvae_cond, c.cvae_hidden, c.latent_dim, &mut rng);
        let mut recon_params = ParamStore::default();
        let robot_recon = GruReconstructor::new(&mut recon_params, "robot_recon", ROBOT_STATE_DIM, c.recon_hidden, c.window, &mut rng);
        let task_recon = GruReconstructor::new(&mut recon_params, "task_recon", TASK_STATE_DIM, c.recon_hidden, c.window, &mut rng);
        Self { config, params, recon_params, positional, heterogeneity, ita, ctr, cvae, robot_recon, task_recon }
    }

    pub fn to_checkpoint(&self, metadata: serde_json::Value) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.insert_store("policy/", &self.params);
        ck.insert_store("recon/", &self.recon_params);
        let mut meta = serde_json::json!({ "policy_config": self.config });
        if let (Some(m), serde_json::Value::Object(extra)) = (meta.as_object_mut(), metadata) {
            m.extend(extra);
        }
        ck.metadata = meta;
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, PolicyError> {
        let config: PolicyConfig = serde_json::from_value(ck.metadata.get("policy_config").cloned().unwrap_or_default())
            .map_err(|e| PolicyError::Checkpoint(format!("policy_config: {e}")))?;
        let mut model = Self::new(config, 0);
        ck.load_store("policy/", &mut model.params)?;
        ck.load_store("recon/", &mut model.recon_params)?;
        Ok(model)
    }

    pub fn save(&self, dir: &Path, stem: &str, metadata: serde_json::Value) -> Result<(), PolicyError> {
        Ok(self.to_checkpoint(metadata).save(dir, stem)?)
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self, PolicyError> {
        Self::from_checkpoint(&Checkpoint::load(dir, stem)?)
    }
}
