//! Spectrogram fidelity (PSNR, MSE), intelligibility (STOI) and an adapter
//! for an external PESQ binary, collected into a [`MetricsReport`].

mod pesq;
mod report;
mod stoi;

pub use pesq::{pesq_adapter, pesq_tool_from_env, PESQ_ENV};
pub use report::{MetricsReport, MetricMeans, SampleMetrics, PSNR_CAP_DB};
pub use stoi::{stoi, third_octave_bands, SEGMENT_FRAMES, STOI_RATE};

use thiserror::Error;

use crate::dsp::MelSpectrogram;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("only {frames} STFT frames after silence removal, need {needed}")]
    TooShort { frames: usize, needed: usize },
    #[error("PESQ tool failed: {0}")]
    Pesq(String),
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("report export: {0}")]
    Export(String),
}

fn check_shapes(x: &MelSpectrogram, o: &MelSpectrogram) -> Result<(), MetricError> {
    if x.frames() != o.frames() || x.n_mels() != o.n_mels() {
        return Err(MetricError::Shape(format!(
            "{}x{} vs {}x{}",
            x.frames(),
            x.n_mels(),
            o.frames(),
            o.n_mels()
        )));
    }
    Ok(())
}

/// Mean squared difference over all cells.
pub fn mse_metric(x: &MelSpectrogram, o: &MelSpectrogram) -> Result<f64, MetricError> {
    check_shapes(x, o)?;
    let n = x.values().len();
    if n == 0 {
        return Ok(0.0);
    }
    let s: f64 = x.values().iter().zip(o.values()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / n as f64)
}

/// PSNR for unit-peak data from a mean squared error. Zero error gives
/// `f64::INFINITY`.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

pub fn psnr(x: &MelSpectrogram, o: &MelSpectrogram) -> Result<f64, MetricError> {
    Ok(psnr_from_mse(mse_metric(x, o)?))
}
