//! Audio-visual speech in-painting.
//!
//! A sequence-to-sequence BLSTM encoder reads lip-motion features and feeds a
//! BLSTM decoder that restores masked regions of a log-Mel spectrogram. The
//! crate contains every stage needed to reproduce that method at desk scale:
//! signal processing ([`dsp`]), gap simulation ([`corruption`]), visual
//! features ([`visual`]), a small reverse-mode autodiff core ([`neural`]),
//! MSE/CTC objectives ([`losses`]), the model variants ([`models`]), the
//! training loop ([`training`]), evaluation ([`metrics`]) and file-based
//! orchestration ([`pipeline`]).

pub mod corruption;
pub mod dsp;
mod inf_repr;
pub mod losses;
pub mod models;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod seed;
pub mod training;
pub mod visual;
