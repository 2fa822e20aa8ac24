//! File formats and the command implementations behind the CLI.

pub mod checkpoint;
pub mod config;
pub mod diagnostics;
pub mod evaluate;
pub mod inpaint;
pub mod manifest;
pub mod mask;
pub mod png;
pub mod prepare;
pub mod synth;
pub mod tensorfile;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{Precision, RunConfig};
pub use diagnostics::gradcheck_suite;
pub use evaluate::cmd_evaluate;
pub use inpaint::{cmd_inpaint, Baseline, InpaintOptions, Source};
pub use manifest::{Manifest, ManifestEntry, Split};
pub use mask::{cmd_mask, load_samples, Labeler, MaskMeta};
pub use prepare::{cmd_prepare, CacheIndex, PrepareSummary};
pub use synth::{cmd_synth, SynthConfig};
pub use train::{cmd_train, TrainSummary};

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed file: {0}")]
    Format(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("inconsistent data: {0}")]
    Data(String),
    #[error("missing counterpart: {0}")]
    Missing(String),
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
    #[error(transparent)]
    Visual(#[from] crate::visual::VisualError),
    #[error(transparent)]
    Mask(#[from] crate::corruption::MaskError),
    #[error(transparent)]
    Loss(#[from] crate::losses::LossError),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Train(#[from] crate::training::TrainError),
    #[error(transparent)]
    Neural(#[from] crate::neural::NeuralError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
