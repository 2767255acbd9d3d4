//! Minimal differentiable-computation substrate.
//!
//! Tensors are 2-D `f64` arrays. Forward passes record onto a [`Graph`] whose
//! [`Graph::backward`] produces [`Grads`] for the parameters in a
//! [`ParamStore`].

mod check;
mod graph;
mod nn;
mod params;
mod sample;
mod tensor;

pub use check::{gradient_check, relative_error, GradCheckEntry, GradCheckReport};
pub use graph::{sigmoid, Graph, Var};
pub use nn::{Activation, Dense, EncoderBlock, GruCell, MultiHeadAttention};
pub use params::{Adam, AdamConfig, Checkpoint, CheckpointManifest, Grads, ParamId, ParamStore, TensorEntry, CHECKPOINT_SCHEMA_VERSION};
pub use sample::{categorical_sample, masked_argmax, masked_softmax};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch { op: &'static str, left: [usize; 2], right: [usize; 2] },
    #[error("index {index} out of range {bound} in {op}")]
    OutOfRange { op: &'static str, index: usize, bound: usize },
    #[error("non-finite values produced by {op}")]
    NonFinite { op: &'static str },
    #[error("every entry of row {row} is masked")]
    AllMasked { row: usize },
    #[error("loss must be scalar, got shape {shape:?}")]
    NonScalarLoss { shape: [usize; 2] },
    #[error("gradient check failed on {param}[{index}]: relative error {rel_error:.3e} > {tol:.1e}")]
    GradCheck { param: String, index: usize, rel_error: f64, tol: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
