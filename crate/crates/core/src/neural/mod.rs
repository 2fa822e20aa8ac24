//! Small reverse-mode differentiation core with dense and (B)LSTM layers.
//!
//! Sequence values are matrices with one row per (time step, batch element),
//! time-major: row `t * batch + b`. A [`Tape`] records one forward pass over
//! one mini-batch.

mod gradcheck;
mod layers;
mod lstm;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, ParamCheck};
pub use layers::{
    blstm_forward, concat_features, dense_forward, lstm_forward, Activation, Blstm, Dense, Lstm,
};
pub use params::{Gradients, Init, Param, ParamId, ParamMeta, ParamStore};
pub use tape::{backward, Tape, Var};
pub use tensor::{Dtype, Real, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("variable belongs to a different tape")]
    ForeignVar,
    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("non-finite value produced by {0}")]
    NonFiniteValue(String),
    #[error(transparent)]
    Loss(#[from] crate::losses::LossError),
}
