use std::f64::consts::PI;

use super::{DspError, Waveform};

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Kaiser-windowed sinc anti-aliasing filter for a rational `up/down`
/// resampler, normalized to unit DC gain. Stopband rejection is 60 dB with a
/// transition width of a tenth of the cutoff (the Octave `resample` design).
pub fn kaiser_lowpass(up: usize, down: usize) -> Vec<f64> {
    let g = gcd(up as u64, down as u64) as usize;
    let (p, q) = (up / g, down / g);
    let rejection_db = 60.0;
    let cutoff = 1.0 / (2.0 * p.max(q) as f64);
    let roll_off = cutoff / 10.0;
    let half = ((rejection_db - 8.0) / (28.714 * roll_off)).ceil() as i64;
    let beta = 0.1102 * (rejection_db - 8.7);
    let m = (2 * half + 1) as f64;
    let i0_beta = bessel_i0(beta);
    let mut h: Vec<f64> = (-half..=half)
        .enumerate()
        .map(|(n, t)| {
            let r = 2.0 * n as f64 / (m - 1.0) - 1.0;
            let win = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
            win * 2.0 * p as f64 * cutoff * sinc(2.0 * cutoff * t as f64)
        })
        .collect();
    let total: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= total);
    h
}

/// Polyphase rational resampling with an odd-length, zero-phase FIR `h`.
///
/// Equivalent to zero-stuffing by `up`, filtering with `up * h` and keeping
/// every `down`-th sample, with the filter delay removed. Output length is
/// `ceil(len * up / down)`.
pub fn resample_poly(x: &[f64], up: usize, down: usize, h: &[f64]) -> Vec<f64> {
    assert!(up > 0 && down > 0, "resampling factors must be positive");
    assert!(h.len() % 2 == 1, "filter length must be odd");
    let half = (h.len() - 1) / 2;
    let n_out = (x.len() * up).div_ceil(down);
    let gain = up as f64;
    (0..n_out)
        .map(|m| {
            // y[m] = up * sum_k x[k] h[m*down + half - k*up]
            let centre = m * down + half;
            let k_hi = (centre / up).min(x.len().saturating_sub(1));
            let k_lo = centre.saturating_sub(h.len() - 1).div_ceil(up);
            let mut acc = 0.0;
            if x.is_empty() || k_lo > k_hi {
                return 0.0;
            }
            for k in k_lo..=k_hi {
                acc += x[k] * h[centre - k * up];
            }
            acc * gain
        })
        .collect()
}

/// Band-limited resampling to `target_rate` by the reduced ratio
/// `target_rate / source_rate`.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform, DspError> {
    if target_rate == 0 {
        return Err(DspError::InvalidRate(target_rate));
    }
    let src = w.sample_rate();
    if src == target_rate {
        return Ok(w.clone());
    }
    let g = gcd(src as u64, target_rate as u64);
    let up = (target_rate as u64 / g) as usize;
    let down = (src as u64 / g) as usize;
    if up.max(down) > 1000 {
        return Err(DspError::InvalidFrameParams(format!(
            "resampling ratio {up}/{down} is not a small rational"
        )));
    }
    let h = kaiser_lowpass(up, down);
    Waveform::new(resample_poly(w.samples(), up, down, &h), target_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, rate: u32, secs: f64) -> Waveform {
        let n = (rate as f64 * secs).round() as usize;
        let s = (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / rate as f64).sin() * 0.5)
            .collect();
        Waveform::new(s, rate).unwrap()
    }

    #[test]
    fn three_seconds_25k_to_8k() {
        let w = tone(440.0, 25_000, 3.0);
        let out = resample(&w, 8000).unwrap();
        assert_eq!(out.len(), 24_000);
        assert_eq!(out.sample_rate(), 8000);
        assert!((out.duration_secs() - w.duration_secs()).abs() <= 1.0 / 8000.0);
    }

    #[test]
    fn identity_rate_is_noop() {
        let w = tone(300.0, 8000, 0.1);
        assert_eq!(resample(&w, 8000).unwrap(), w);
    }

    #[test]
    fn rejects_zero_target() {
        assert!(resample(&tone(300.0, 8000, 0.1), 0).is_err());
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn tone_survives_downsampling() {
        let out = resample(&tone(1000.0, 25_000, 1.0), 8000).unwrap();
        let expected = tone(1000.0, 8000, 1.0);
        let c = correlation(out.samples(), expected.samples());
        assert!(c > 0.999, "correlation {c}");
    }

    #[test]
    fn content_above_target_nyquist_is_removed() {
        // 5 kHz cannot be represented at 8 kHz and must be attenuated.
        let out = resample(&tone(5000.0, 25_000, 1.0), 8000).unwrap();
        let interior = &out.samples()[400..7600];
        let rms = (interior.iter().map(|x| x * x).sum::<f64>() / interior.len() as f64).sqrt();
        assert!(rms < 0.5 / 2f64.sqrt() * 1e-2, "rms {rms}");
    }

    #[test]
    fn filter_has_unit_dc_gain() {
        let h = kaiser_lowpass(8, 25);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(h.len() % 2, 1);
        let dc = resample_poly(&vec![1.0; 2000], 8, 25, &h);
        assert!((dc[dc.len() / 2] - 1.0).abs() < 1e-3);
    }
}
