use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{DspError, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowFn {
    /// Periodic Hann.
    Hann,
    /// Periodic Hamming.
    Hamming,
    Rectangular,
}

impl WindowFn {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let phase = 2.0 * PI * i as f64 / n;
                match self {
                    WindowFn::Hann => 0.5 - 0.5 * phase.cos(),
                    WindowFn::Hamming => 0.54 - 0.46 * phase.cos(),
                    WindowFn::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

/// Frame geometry for analysis and synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftParams {
    pub win: usize,
    pub hop: usize,
    pub fft_len: usize,
    pub window: WindowFn,
}

impl Default for StftParams {
    /// 40 ms Hann window, 20 ms hop, zero-padded to 510 points (8 kHz audio).
    fn default() -> Self {
        Self {
            win: 320,
            hop: 160,
            fft_len: 510,
            window: WindowFn::Hann,
        }
    }
}

impl StftParams {
    pub fn bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// `floor((n - win) / hop) + 1`, or zero when the signal is shorter than a window.
    pub fn frame_count(&self, n: usize) -> usize {
        if n < self.win {
            0
        } else {
            (n - self.win) / self.hop + 1
        }
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if self.win == 0 || self.hop == 0 {
            return Err(DspError::InvalidFrameParams(
                "window and hop must be positive".into(),
            ));
        }
        if self.win > self.fft_len {
            return Err(DspError::InvalidFrameParams(format!(
                "window {} longer than FFT length {}",
                self.win, self.fft_len
            )));
        }
        if self.hop > self.win {
            return Err(DspError::InvalidFrameParams(format!(
                "hop {} longer than window {}",
                self.hop, self.win
            )));
        }
        Ok(())
    }
}

/// One-sided STFT coefficients, `frames x bins`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    frames: usize,
    bins: usize,
    data: Vec<Complex64>,
    sample_rate: u32,
}

impl ComplexSpectrogram {
    pub fn new(
        frames: usize,
        bins: usize,
        data: Vec<Complex64>,
        sample_rate: u32,
    ) -> Result<Self, DspError> {
        if data.len() != frames * bins {
            return Err(DspError::DimensionMismatch(format!(
                "{} coefficients for {frames}x{bins}",
                data.len()
            )));
        }
        Ok(Self {
            frames,
            bins,
            data,
            sample_rate,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn magnitude(&self) -> MagnitudeSpectrogram {
        MagnitudeSpectrogram {
            frames: self.frames,
            bins: self.bins,
            data: self.data.iter().map(|c| c.norm()).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn phase(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.arg()).collect()
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self, DspError> {
        if self.frames != other.frames || self.bins != other.bins {
            return Err(DspError::DimensionMismatch(
                "spectrogram shapes differ".into(),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| x * a + y * b)
            .collect();
        Self::new(self.frames, self.bins, data, self.sample_rate)
    }
}

/// Non-negative STFT magnitudes, `frames x bins`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram {
    frames: usize,
    bins: usize,
    data: Vec<f64>,
    sample_rate: u32,
}

impl MagnitudeSpectrogram {
    pub fn new(
        frames: usize,
        bins: usize,
        data: Vec<f64>,
        sample_rate: u32,
    ) -> Result<Self, DspError> {
        if data.len() != frames * bins {
            return Err(DspError::DimensionMismatch(format!(
                "{} magnitudes for {frames}x{bins}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(DspError::NegativeMagnitude(i));
        }
        Ok(Self {
            frames,
            bins,
            data,
            sample_rate,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Attaches a per-cell phase (radians).
    pub fn with_phase(&self, phase: &[f64]) -> ComplexSpectrogram {
        assert_eq!(phase.len(), self.data.len(), "phase grid size");
        let data = self
            .data
            .iter()
            .zip(phase)
            .map(|(&m, &p)| Complex64::from_polar(m, p))
            .collect();
        ComplexSpectrogram {
            frames: self.frames,
            bins: self.bins,
            data,
            sample_rate: self.sample_rate,
        }
    }
}

/// A planned STFT/ISTFT pair for one frame geometry.
pub struct Stft {
    params: StftParams,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(params: StftParams) -> Result<Self, DspError> {
        params.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            window: params.window.coefficients(params.win),
            forward: planner.plan_fft_forward(params.fft_len),
            inverse: planner.plan_fft_inverse(params.fft_len),
            params,
        })
    }

    pub fn params(&self) -> &StftParams {
        &self.params
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn forward(&self, x: &[f64], sample_rate: u32) -> Result<ComplexSpectrogram, DspError> {
        let p = &self.params;
        if x.len() < p.win {
            return Err(DspError::SignalTooShort {
                len: x.len(),
                win: p.win,
            });
        }
        let frames = p.frame_count(x.len());
        let bins = p.bins();
        let mut data = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex64::new(0.0, 0.0); p.fft_len];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for t in 0..frames {
            let seg = &x[t * p.hop..t * p.hop + p.win];
            for (slot, (s, w)) in buf.iter_mut().zip(seg.iter().zip(&self.window)) {
                *slot = Complex64::new(s * w, 0.0);
            }
            buf[p.win..]
                .iter_mut()
                .for_each(|c| *c = Complex64::new(0.0, 0.0));
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            data.extend_from_slice(&buf[..bins]);
        }
        ComplexSpectrogram::new(frames, bins, data, sample_rate)
    }

    /// Weighted overlap-add inverse: each frame is inverted from its Hermitian
    /// extension, truncated to the window length, re-windowed and summed; the
    /// sum is divided by the overlapped squared window. This is the
    /// least-squares signal for a (possibly inconsistent) spectrogram.
    pub fn inverse(&self, c: &ComplexSpectrogram) -> Result<Vec<f64>, DspError> {
        let p = &self.params;
        if c.bins != p.bins() {
            return Err(DspError::DimensionMismatch(format!(
                "{} bins, expected {}",
                c.bins,
                p.bins()
            )));
        }
        if c.frames == 0 {
            return Ok(Vec::new());
        }
        let n = p.fft_len;
        let len = (c.frames - 1) * p.hop + p.win;
        let mut out = vec![0.0; len];
        let mut norm = vec![0.0; len];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        let scale = 1.0 / n as f64;
        for t in 0..c.frames {
            let frame = c.frame(t);
            buf[..c.bins].copy_from_slice(frame);
            for k in 1..n - c.bins + 1 {
                buf[n - k] = frame[k].conj();
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = t * p.hop;
            for i in 0..p.win {
                let w = self.window[i];
                out[start + i] += buf[i].re * scale * w;
                norm[start + i] += w * w;
            }
        }
        let peak = norm.iter().cloned().fold(0.0, f64::max);
        let tiny = peak * 1e-10;
        let interior = p.hop..len.saturating_sub(p.hop);
        for (i, (o, d)) in out.iter_mut().zip(&norm).enumerate() {
            if *d > tiny {
                *o /= d;
            } else if interior.contains(&i) {
                return Err(DspError::ZeroOverlapAdd(i));
            } else {
                *o = 0.0;
            }
        }
        Ok(out)
    }
}

pub fn stft(w: &Waveform, params: &StftParams) -> Result<ComplexSpectrogram, DspError> {
    Stft::new(*params)?.forward(w.samples(), w.sample_rate())
}

pub fn istft(c: &ComplexSpectrogram, params: &StftParams) -> Result<Waveform, DspError> {
    let samples = Stft::new(*params)?.inverse(c)?;
    Waveform::new(samples, c.sample_rate)
}
