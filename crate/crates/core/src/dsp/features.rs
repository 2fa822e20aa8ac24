use serde::{Deserialize, Serialize};

use super::{
    deemphasize, griffin_lim, invert_mel, mel_matrix, preemphasize, resample, to_mel_with_floor,
    DspError, MelFilterbank, MelSpectrogram, Stft, StftParams, Waveform, DEFAULT_DB_FLOOR,
    DEFAULT_PREEMPHASIS,
};

/// Analysis settings shared by feature extraction and resynthesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureParams {
    pub sample_rate: u32,
    pub preemphasis: f64,
    pub stft: StftParams,
    pub n_mels: usize,
    pub db_floor: f64,
    pub griffin_lim_iters: usize,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            sample_rate: 8000,
            preemphasis: DEFAULT_PREEMPHASIS,
            stft: StftParams::default(),
            n_mels: 64,
            db_floor: DEFAULT_DB_FLOOR,
            griffin_lim_iters: 300,
        }
    }
}

impl FeatureParams {
    /// Milliseconds per spectrogram frame.
    pub fn hop_ms(&self) -> f64 {
        1000.0 * self.stft.hop as f64 / self.sample_rate as f64
    }
}

/// Waveform to normalized log-Mel grid and back.
pub struct AudioFrontend {
    params: FeatureParams,
    plan: Stft,
    fb: MelFilterbank,
}

impl AudioFrontend {
    pub fn new(params: FeatureParams) -> Result<Self, DspError> {
        Ok(Self {
            plan: Stft::new(params.stft)?,
            fb: mel_matrix(params.n_mels, params.stft.fft_len, params.sample_rate)?,
            params,
        })
    }

    pub fn params(&self) -> &FeatureParams {
        &self.params
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.fb
    }

    /// Brings `w` to the working rate without other processing.
    pub fn conform(&self, w: &Waveform) -> Result<Waveform, DspError> {
        resample(w, self.params.sample_rate)
    }

    /// Resample, pre-emphasize, STFT, Mel projection and normalization.
    pub fn analyze(&self, w: &Waveform) -> Result<MelSpectrogram, DspError> {
        let w = preemphasize(&self.conform(w)?, self.params.preemphasis)?;
        let c = self.plan.forward(w.samples(), w.sample_rate())?;
        to_mel_with_floor(&c, &self.fb, self.params.db_floor)
    }

    /// Mel inversion, Griffin-Lim and de-emphasis.
    pub fn synthesize(&self, m: &MelSpectrogram) -> Result<Waveform, DspError> {
        let mag = invert_mel(m, &self.fb)?.magnitude();
        let w = griffin_lim(&mag, self.params.griffin_lim_iters, &self.params.stft)?;
        deemphasize(&w, self.params.preemphasis)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_second_clip_shape() {
        let fe = AudioFrontend::new(FeatureParams::default()).unwrap();
        let x: Vec<f64> = (0..24000).map(|n| (n as f64 * 0.3).sin() * 0.2).collect();
        let m = fe.analyze(&Waveform::new(x, 8000).unwrap()).unwrap();
        assert_eq!((m.frames(), m.n_mels()), (149, 64));
        assert_eq!(fe.params().hop_ms(), 20.0);
    }

    #[test]
    fn resynthesis_keeps_duration() {
        let params = FeatureParams {
            griffin_lim_iters: 5,
            ..Default::default()
        };
        let fe = AudioFrontend::new(params).unwrap();
        let x: Vec<f64> = (0..24000).map(|n| (n as f64 * 0.2).sin() * 0.3).collect();
        let m = fe.analyze(&Waveform::new(x, 8000).unwrap()).unwrap();
        let y = fe.synthesize(&m).unwrap();
        assert!((y.duration_secs() - 3.0).abs() <= 0.02);
    }
}
