use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::MetricError;
use crate::dsp::{resample, Waveform};

pub const STOI_RATE: u32 = 10_000;
const FRAME: usize = 256;
const HOP: usize = 128;
const NFFT: usize = 512;
const BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
/// Frames per intermediate intelligibility segment (384 ms).
pub const SEGMENT_FRAMES: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

/// Symmetric Hann of length `n` without its zero endpoints.
fn hanning(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n + 1) as f64).cos())
        .collect()
}

/// One-third octave band matrix over the `NFFT / 2 + 1` bins, each row a
/// 0/1 indicator of the bins in that band.
pub fn third_octave_bands() -> Vec<Vec<f64>> {
    let bins = NFFT / 2 + 1;
    let f: Vec<f64> = (0..bins).map(|j| j as f64 * (STOI_RATE as f64 / NFFT as f64)).collect();
    let nearest = |target: f64| {
        let mut best = 0;
        for j in 1..bins {
            if (f[j] - target).powi(2) < (f[best] - target).powi(2) {
                best = j;
            }
        }
        best
    };
    (0..BANDS)
        .map(|k| {
            let k = k as f64;
            let lo = nearest(MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0));
            let hi = nearest(MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0));
            (0..bins).map(|j| if j >= lo && j < hi { 1.0 } else { 0.0 }).collect()
        })
        .collect()
}

fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    (0..len.saturating_sub(FRAME)).step_by(HOP)
}

/// Drops frames of both signals where the clean frame is more than 40 dB
/// below the loudest clean frame, then overlap-adds what remains.
fn remove_silent_frames(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = hanning(FRAME);
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let energy: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let e: f64 = (0..FRAME).map(|i| (w[i] * x[s + i]).powi(2)).sum();
            20.0 * (e.sqrt() + EPS).log10()
        })
        .collect();
    let max = energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let keep: Vec<usize> = starts
        .iter()
        .zip(&energy)
        .filter(|(_, &e)| max - DYN_RANGE_DB - e < 0.0)
        .map(|(&s, _)| s)
        .collect();
    let out_len = if keep.is_empty() { 0 } else { (keep.len() - 1) * HOP + FRAME };
    let mut xs = vec![0.0; out_len];
    let mut ys = vec![0.0; out_len];
    for (j, &s) in keep.iter().enumerate() {
        for i in 0..FRAME {
            xs[j * HOP + i] += w[i] * x[s + i];
            ys[j * HOP + i] += w[i] * y[s + i];
        }
    }
    (xs, ys)
}

/// Band envelopes, `[band][frame]`.
fn band_envelopes(x: &[f64], fft: &Arc<dyn Fft<f64>>, obm: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let w = hanning(FRAME);
    let mut out = vec![Vec::new(); BANDS];
    let mut buf = vec![Complex64::new(0.0, 0.0); NFFT];
    for s in frame_starts(x.len()) {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for i in 0..FRAME {
            buf[i] = Complex64::new(w[i] * x[s + i], 0.0);
        }
        fft.process(&mut buf);
        for (b, row) in obm.iter().enumerate() {
            let p: f64 = row.iter().zip(&buf).map(|(m, c)| m * c.norm_sqr()).sum();
            out[b].push(p.sqrt());
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn center_unit(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|a| *a -= mean);
    let n = norm(v) + EPS;
    v.iter_mut().for_each(|a| *a /= n);
}

/// Short-time objective intelligibility of `degraded` against `clean`.
///
/// Signals at other rates are resampled to 10 kHz first. Errors when fewer
/// than 30 frames survive silent-frame removal.
pub fn stoi(clean: &Waveform, degraded: &Waveform) -> Result<f64, MetricError> {
    if clean.len() != degraded.len() {
        return Err(MetricError::Shape(format!(
            "clean has {} samples, degraded {}",
            clean.len(),
            degraded.len()
        )));
    }
    if clean.sample_rate() != degraded.sample_rate() {
        return Err(MetricError::Shape(format!(
            "sample rates differ: {} vs {}",
            clean.sample_rate(),
            degraded.sample_rate()
        )));
    }
    let x = resample(clean, STOI_RATE)?;
    let y = resample(degraded, STOI_RATE)?;
    let (x, y) = remove_silent_frames(x.samples(), y.samples());
    let fft = FftPlanner::new().plan_fft_forward(NFFT);
    let obm = third_octave_bands();
    let xt = band_envelopes(&x, &fft, &obm);
    let yt = band_envelopes(&y, &fft, &obm);
    let frames = xt[0].len();
    if frames < SEGMENT_FRAMES {
        return Err(MetricError::TooShort {
            frames,
            needed: SEGMENT_FRAMES,
        });
    }
    let clip = 10f64.powf(-BETA_DB / 20.0);
    let segments = frames - SEGMENT_FRAMES + 1;
    let mut total = 0.0;
    for m in 0..segments {
        for b in 0..BANDS {
            let mut xs = xt[b][m..m + SEGMENT_FRAMES].to_vec();
            let ys = &yt[b][m..m + SEGMENT_FRAMES];
            let scale = norm(&xs) / (norm(ys) + EPS);
            let mut yp: Vec<f64> = ys
                .iter()
                .zip(&xs)
                .map(|(y, x)| (y * scale).min(x * (1.0 + clip)))
                .collect();
            center_unit(&mut yp);
            center_unit(&mut xs);
            total += yp.iter().zip(&xs).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Ok(total / (segments * BANDS) as f64)
}
