//! Spectrogram MSE, CTC with a brute-force oracle, and the joint objective.

mod ctc;
mod lexicon;

pub use ctc::{ctc_brute_force, ctc_loss, is_feasible, CtcOutput, BRUTE_FORCE_LIMIT};
pub use lexicon::{LabelMode, Lexicon, Vocabulary, ARPABET};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("label {label} outside vocabulary of {vocab}")]
    LabelOutOfRange { label: usize, vocab: usize },
    #[error("brute force over {paths} paths exceeds the limit")]
    TooLarge { paths: f64 },
    #[error("non-finite loss input: {0}")]
    NonFinite(String),
    #[error("invalid loss weights: {0}")]
    InvalidWeights(String),
    #[error("unknown word {0:?}")]
    UnknownWord(String),
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),
    #[error("lexicon: {0}")]
    Lexicon(String),
}

/// Trade-off between the reconstruction and recognition terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda: 0.001 }
    }
}

impl LossWeights {
    pub fn new(lambda: f64) -> Result<Self, LossError> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(LossError::InvalidWeights(format!("lambda = {lambda}")));
        }
        Ok(Self { lambda })
    }
}

/// Mean squared difference over all cells and its gradient `2 (y - x) / N`.
pub fn mse_loss(y: &[f64], x: &[f64]) -> Result<(f64, Vec<f64>), LossError> {
    if y.len() != x.len() || y.is_empty() {
        return Err(LossError::Shape(format!(
            "{} vs {} cells",
            y.len(),
            x.len()
        )));
    }
    let n = y.len() as f64;
    let loss = y.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
    let grad = y.iter().zip(x).map(|(a, b)| 2.0 * (a - b) / n).collect();
    Ok((loss, grad))
}

/// `mse + lambda * ctc`.
pub fn joint_loss(mse: f64, ctc: f64, w: LossWeights) -> Result<f64, LossError> {
    if !mse.is_finite() || !ctc.is_finite() {
        return Err(LossError::NonFinite(format!("mse = {mse}, ctc = {ctc}")));
    }
    LossWeights::new(w.lambda)?;
    Ok(mse + w.lambda * ctc)
}
