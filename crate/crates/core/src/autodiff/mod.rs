//! Small reverse-mode automatic differentiation engine.
//!
//! Values live on a [`Tape`] as row-major `f64` matrices. Parameters are
//! owned by a [`ParamStore`] and copied onto a tape when a forward pass binds
//! them, so a store can be read by many concurrent forward passes while one
//! updater owns it mutably between passes.

mod checkpoint;
mod gradcheck;
mod layers;
mod optim;
mod params;
mod tape;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointManifest, ManifestEntry};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use layers::{dense_forward, lstm_cell_forward, Activation, Dense, LstmCell, LstmCellState, LstmVars};
pub use optim::{clip_grad_norm, global_norm, AdamConfig, AdamState};
pub use params::{orthogonal, Gradients, ParamStore};
pub use tape::{Grads, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tensor::gemm;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("tensor of shape {shape:?} cannot hold {len} values")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward called on an empty tape")]
    EmptyTape,
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("gradient for `{name}` has shape {got:?}, parameter has {expected:?}")]
    GradientShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("attempted to update frozen parameter `{0}`")]
    FrozenUpdate(String),
    #[error("missing input: {0}")]
    MissingInput(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
