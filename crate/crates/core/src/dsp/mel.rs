use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ComplexSpectrogram, DspError};

/// Default lower clip of the dB range, relative to the utterance maximum.
pub const DEFAULT_DB_FLOOR: f64 = -80.0;

/// Smallest reference power used for normalization. Utterances whose peak Mel
/// power is below this are treated as silence rather than amplified.
pub const MIN_REFERENCE_POWER: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MelScale {
    /// `2595 * log10(1 + f / 700)`
    #[serde(rename = "htk")]
    Htk,
}

impl MelScale {
    pub fn id(self) -> &'static str {
        match self {
            MelScale::Htk => "htk",
        }
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters, `n_mels x bins`, with their pseudo-inverse cached.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    n_mels: usize,
    bins: usize,
    sample_rate: u32,
    weights: Vec<f64>,
    centers_hz: Vec<f64>,
    /// `bins x n_mels` pseudo-inverse of `weights`, row-major.
    pinv: Vec<f64>,
    /// `bins x bins` Gram matrix `weights^T weights`, row-major.
    gram: Vec<f64>,
}

impl MelFilterbank {
    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn scale(&self) -> MelScale {
        MelScale::Htk
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.bins..(m + 1) * self.bins]
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }
}

/// Builds `n_mels` triangular filters whose edges are equally spaced on the
/// Mel axis between 0 Hz and Nyquist. Filters peak at 1.
pub fn mel_matrix(n_mels: usize, fft_len: usize, rate: u32) -> Result<MelFilterbank, DspError> {
    let bins = fft_len / 2 + 1;
    if n_mels == 0 {
        return Err(DspError::InvalidFrameParams(
            "need at least one Mel filter".into(),
        ));
    }
    if rate == 0 {
        return Err(DspError::InvalidRate(rate));
    }
    if n_mels > bins {
        return Err(DspError::TooManyMels { n_mels, bins });
    }
    let nyquist = rate as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz: Vec<f64> = (0..bins)
        .map(|k| k as f64 * rate as f64 / fft_len as f64)
        .collect();
    let mut weights = vec![0.0; n_mels * bins];
    for m in 0..n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for (k, &f) in bin_hz.iter().enumerate() {
            let rise = (f - lo) / (mid - lo);
            let fall = (hi - f) / (hi - mid);
            weights[m * bins + k] = rise.min(fall).max(0.0);
        }
    }
    let fb = DMatrix::from_row_slice(n_mels, bins, &weights);
    let pinv = fb
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| DspError::InvalidFrameParams(format!("filterbank pseudo-inverse: {e}")))?;
    let mut pinv_rows = Vec::with_capacity(bins * n_mels);
    for k in 0..bins {
        for m in 0..n_mels {
            pinv_rows.push(pinv[(k, m)]);
        }
    }
    let gram_m = fb.transpose() * &fb;
    let mut gram = Vec::with_capacity(bins * bins);
    for i in 0..bins {
        for j in 0..bins {
            gram.push(gram_m[(i, j)]);
        }
    }
    Ok(MelFilterbank {
        n_mels,
        bins,
        sample_rate: rate,
        weights,
        centers_hz: edges[1..=n_mels].to_vec(),
        pinv: pinv_rows,
        gram,
    })
}

/// How Mel power is mapped back onto linear-frequency bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MelInversion {
    /// Non-negative least squares against the filterbank, so that the
    /// recovered power projects back onto the input Mel power.
    #[default]
    Nnls,
    /// Filterbank pseudo-inverse with negative power clipped to zero.
    PinvClip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationParams {
    pub db_floor: f64,
    pub reference_power: f64,
}

/// Normalized log-Mel magnitudes, `frames x n_mels`, row-major, in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    frames: usize,
    n_mels: usize,
    values: Vec<f64>,
    norm: Option<NormalizationParams>,
}

impl MelSpectrogram {
    /// Wraps an existing grid. Values must lie in [0, 1].
    pub fn new(
        frames: usize,
        n_mels: usize,
        values: Vec<f64>,
        norm: Option<NormalizationParams>,
    ) -> Result<Self, DspError> {
        if values.len() != frames * n_mels {
            return Err(DspError::DimensionMismatch(format!(
                "{} values for {frames}x{n_mels}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(DspError::DimensionMismatch(format!(
                "value {} at index {i} outside [0, 1]",
                values[i]
            )));
        }
        Ok(Self {
            frames,
            n_mels,
            values,
            norm,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_mels..(t + 1) * self.n_mels]
    }

    pub fn norm(&self) -> Option<NormalizationParams> {
        self.norm
    }

    pub fn with_norm(mut self, norm: Option<NormalizationParams>) -> Self {
        self.norm = norm;
        self
    }
}

fn mel_power(c: &ComplexSpectrogram, fb: &MelFilterbank) -> Result<Vec<f64>, DspError> {
    if c.bins() != fb.bins {
        return Err(DspError::DimensionMismatch(format!(
            "spectrogram has {} bins, filterbank {}",
            c.bins(),
            fb.bins
        )));
    }
    let mut out = vec![0.0; c.frames() * fb.n_mels];
    for t in 0..c.frames() {
        let power: Vec<f64> = c.frame(t).iter().map(|v| v.norm_sqr()).collect();
        for m in 0..fb.n_mels {
            out[t * fb.n_mels + m] = fb.row(m).iter().zip(&power).map(|(w, p)| w * p).sum();
        }
    }
    Ok(out)
}

/// Power Mel projection, dB compression relative to the utterance maximum,
/// clipping to `[DEFAULT_DB_FLOOR, 0]` and affine mapping to [0, 1].
pub fn to_mel(c: &ComplexSpectrogram, fb: &MelFilterbank) -> Result<MelSpectrogram, DspError> {
    to_mel_with_floor(c, fb, DEFAULT_DB_FLOOR)
}

pub fn to_mel_with_floor(
    c: &ComplexSpectrogram,
    fb: &MelFilterbank,
    db_floor: f64,
) -> Result<MelSpectrogram, DspError> {
    if db_floor >= 0.0 || !db_floor.is_finite() {
        return Err(DspError::InvalidFrameParams(format!(
            "dB floor must be negative, got {db_floor}"
        )));
    }
    let power = mel_power(c, fb)?;
    let reference_power = power.iter().cloned().fold(MIN_REFERENCE_POWER, f64::max);
    let values = power
        .iter()
        .map(|&p| {
            let db = if p > 0.0 {
                (10.0 * (p / reference_power).log10()).clamp(db_floor, 0.0)
            } else {
                db_floor
            };
            (db - db_floor) / -db_floor
        })
        .collect();
    Ok(MelSpectrogram {
        frames: c.frames(),
        n_mels: fb.n_mels,
        values,
        norm: Some(NormalizationParams {
            db_floor,
            reference_power,
        }),
    })
}

/// Undoes normalization and dB compression and maps Mel power back to
/// linear-frequency magnitudes with zero phase, using [`MelInversion::Nnls`].
/// Cells at the floor are silence.
pub fn invert_mel(m: &MelSpectrogram, fb: &MelFilterbank) -> Result<ComplexSpectrogram, DspError> {
    invert_mel_with(m, fb, MelInversion::Nnls)
}

pub fn invert_mel_with(
    m: &MelSpectrogram,
    fb: &MelFilterbank,
    method: MelInversion,
) -> Result<ComplexSpectrogram, DspError> {
    let norm = m.norm.ok_or(DspError::MissingNormalization)?;
    if m.n_mels != fb.n_mels {
        return Err(DspError::DimensionMismatch(format!(
            "spectrogram has {} Mel bands, filterbank {}",
            m.n_mels, fb.n_mels
        )));
    }
    let bins = fb.bins;
    let mut data = Vec::with_capacity(m.frames * bins);
    let mut power = vec![0.0; fb.n_mels];
    for t in 0..m.frames {
        for (p, &v) in power.iter_mut().zip(m.frame(t)) {
            *p = if v <= 0.0 {
                0.0
            } else {
                let db = v * -norm.db_floor + norm.db_floor;
                norm.reference_power * 10f64.powf(db / 10.0)
            };
        }
        let lin = match method {
            MelInversion::PinvClip => (0..bins)
                .map(|k| {
                    let row = &fb.pinv[k * fb.n_mels..(k + 1) * fb.n_mels];
                    row.iter()
                        .zip(&power)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        .max(0.0)
                })
                .collect(),
            MelInversion::Nnls => {
                // normal-equation right-hand side W^T p
                let mut rhs = vec![0.0; bins];
                for (mi, &p) in power.iter().enumerate() {
                    if p != 0.0 {
                        for (r, w) in rhs.iter_mut().zip(fb.row(mi)) {
                            *r += w * p;
                        }
                    }
                }
                nnls_gram(&fb.gram, &rhs, bins)
            }
        };
        data.extend(
            lin.iter()
                .map(|&v: &f64| Complex64::new(v.max(0.0).sqrt(), 0.0)),
        );
    }
    ComplexSpectrogram::new(m.frames, bins, data, fb.sample_rate)
}

/// Lawson-Hanson active-set NNLS in Gram form: minimizes `|Ax - b|^2` subject
/// to `x >= 0` given `G = A^T A` (`n x n`) and `r = A^T b`.
fn nnls_gram(gram: &[f64], rhs: &[f64], n: usize) -> Vec<f64> {
    let scale = rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut x = vec![0.0; n];
    if scale == 0.0 {
        return x;
    }
    let tol = scale * 1e-13;
    let mut passive = vec![false; n];
    let gradient = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                rhs[i]
                    - gram[i * n..(i + 1) * n]
                        .iter()
                        .zip(x)
                        .map(|(g, v)| g * v)
                        .sum::<f64>()
            })
            .collect()
    };
    let solve_passive = |passive: &[bool]| -> Option<Vec<f64>> {
        let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
        let k = idx.len();
        let sub = DMatrix::from_fn(k, k, |r, c| gram[idx[r] * n + idx[c]]);
        let b = nalgebra::DVector::from_iterator(k, idx.iter().map(|&i| rhs[i]));
        let sol = match sub.clone().cholesky() {
            Some(ch) => ch.solve(&b),
            None => sub.lu().solve(&b)?,
        };
        let mut z = vec![0.0; n];
        for (j, &i) in idx.iter().enumerate() {
            z[i] = sol[j];
        }
        Some(z)
    };
    for _ in 0..3 * n {
        let w = gradient(&x);
        let candidate = (0..n)
            .filter(|&i| !passive[i] && w[i] > tol)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(j) = candidate else { break };
        passive[j] = true;
        loop {
            let Some(z) = solve_passive(&passive) else {
                passive[j] = false;
                return x;
            };
            if (0..n).all(|i| !passive[i] || z[i] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for i in 0..n {
                if passive[i] && z[i] <= 0.0 {
                    alpha = alpha.min(x[i] / (x[i] - z[i]));
                }
            }
            for i in 0..n {
                x[i] += alpha * (z[i] - x[i]);
                if passive[i] && x[i] <= f64::EPSILON * scale {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
    }
    x
}
