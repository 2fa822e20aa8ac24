//! Waveform and spectrogram processing: resampling, pre-emphasis, STFT,
//! Mel projection with dB normalization, Mel inversion and Griffin-Lim
//! phase recovery.
//!
//! Everything here works in `f64`; models consume the normalized Mel grid
//! after conversion to their own precision.

mod emphasis;
mod features;
mod griffin_lim;
mod mel;
mod resample;
mod stft;
mod wave;

pub use emphasis::{deemphasize, preemphasize, DEFAULT_PREEMPHASIS};
pub use features::{AudioFrontend, FeatureParams};
pub use griffin_lim::{griffin_lim, griffin_lim_traced, inconsistency, GriffinLimTrace};
pub use mel::{
    hz_to_mel, invert_mel, invert_mel_with, mel_matrix, mel_to_hz, to_mel, to_mel_with_floor,
    MelFilterbank, MelInversion, MelScale, MelSpectrogram, NormalizationParams, DEFAULT_DB_FLOOR,
    MIN_REFERENCE_POWER,
};
pub use resample::{kaiser_lowpass, resample, resample_poly};
pub use stft::{istft, stft, ComplexSpectrogram, MagnitudeSpectrogram, Stft, StftParams, WindowFn};
pub use wave::{read_wav, write_wav, Waveform};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("sample rate must be positive, got {0}")]
    InvalidRate(u32),
    #[error("filter coefficient {0} outside [0, 1)")]
    InvalidCoefficient(f64),
    #[error("signal of {len} samples is shorter than one {win}-sample window")]
    SignalTooShort { len: usize, win: usize },
    #[error("invalid frame parameters: {0}")]
    InvalidFrameParams(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{n_mels} Mel filters exceed {bins} frequency bins")]
    TooManyMels { n_mels: usize, bins: usize },
    #[error("Mel spectrogram has no normalization parameters")]
    MissingNormalization,
    #[error("magnitude spectrogram contains a negative or non-finite value at index {0}")]
    NegativeMagnitude(usize),
    #[error("overlap-add denominator vanishes at sample {0}")]
    ZeroOverlapAdd(usize),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("iteration count must be at least 1")]
    NoIterations,
    #[error("unsupported WAV format: {0}")]
    UnsupportedWav(String),
    #[error(transparent)]
    Wav(#[from] hound::Error),
}
