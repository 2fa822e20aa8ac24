//! Random temporal gaps in spectrograms: sampling, masking and compositing.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::MelSpectrogram;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("invalid mask spec: {0}")]
    InvalidSpec(String),
    #[error("{frames} frames cannot host {needed} masked frames plus separators")]
    TooShort { frames: usize, needed: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("inconsistent mask: {0}")]
    Inconsistent(String),
}

/// Gap-sampling parameters, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskSpec {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub min_total_ms: f64,
    pub max_total_ms: f64,
    pub min_gaps: usize,
    pub max_gaps: usize,
    pub min_gap_ms: f64,
    pub hop_ms: f64,
}

impl Default for MaskSpec {
    fn default() -> Self {
        Self {
            mean_ms: 900.0,
            std_ms: 300.0,
            min_total_ms: 300.0,
            max_total_ms: 1500.0,
            min_gaps: 1,
            max_gaps: 8,
            min_gap_ms: 36.0,
            hop_ms: 20.0,
        }
    }
}

impl MaskSpec {
    pub fn validate(&self) -> Result<(), MaskError> {
        let bad = |m: &str| Err(MaskError::InvalidSpec(m.to_string()));
        if !(self.hop_ms > 0.0) {
            return bad("hop_ms must be positive");
        }
        if !(self.min_gap_ms > 0.0) {
            return bad("min_gap_ms must be positive");
        }
        if !(self.std_ms >= 0.0) {
            return bad("std_ms must be non-negative");
        }
        if !(self.min_total_ms <= self.mean_ms && self.mean_ms <= self.max_total_ms) {
            return bad("need min_total_ms <= mean_ms <= max_total_ms");
        }
        if self.min_gaps < 1 || self.max_gaps < self.min_gaps {
            return bad("need 1 <= min_gaps <= max_gaps");
        }
        if self.min_total_frames() < self.min_gaps * self.min_gap_frames() {
            return bad("minimum total cannot hold min_gaps gaps of minimum length");
        }
        Ok(())
    }

    /// Minimum gap length in frames, rounded up.
    pub fn min_gap_frames(&self) -> usize {
        (self.min_gap_ms / self.hop_ms).ceil() as usize
    }

    pub fn min_total_frames(&self) -> usize {
        (self.min_total_ms / self.hop_ms).round() as usize
    }

    pub fn max_total_frames(&self) -> usize {
        (self.max_total_ms / self.hop_ms).round() as usize
    }

    /// Shortest sequence that hosts every legal draw.
    pub fn required_frames(&self) -> usize {
        self.max_total_frames() + self.max_gaps - 1
    }
}

/// One masked run of frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Gap {
    pub start: usize,
    pub len: usize,
}

impl From<(usize, usize)> for Gap {
    fn from((start, len): (usize, usize)) -> Self {
        Gap { start, len }
    }
}

impl From<Gap> for (usize, usize) {
    fn from(g: Gap) -> Self {
        (g.start, g.len)
    }
}

impl Gap {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// Binary frame mask (1 = intact, 0 = masked) stored as a sorted gap list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mask {
    #[serde(rename = "T")]
    frames: usize,
    gaps: Vec<Gap>,
    hop_ms: f64,
}

impl Mask {
    /// Builds a mask from gaps, which must be sorted, disjoint, non-empty and
    /// inside `[0, frames)`.
    pub fn new(frames: usize, gaps: Vec<Gap>, hop_ms: f64) -> Result<Self, MaskError> {
        let mask = Self {
            frames,
            gaps,
            hop_ms,
        };
        mask.check()?;
        Ok(mask)
    }

    pub fn all_intact(frames: usize, hop_ms: f64) -> Self {
        Self {
            frames,
            gaps: Vec::new(),
            hop_ms,
        }
    }

    pub fn all_masked(frames: usize, hop_ms: f64) -> Self {
        let gaps = if frames == 0 {
            Vec::new()
        } else {
            vec![Gap {
                start: 0,
                len: frames,
            }]
        };
        Self {
            frames,
            gaps,
            hop_ms,
        }
    }

    fn check(&self) -> Result<(), MaskError> {
        let mut prev_end = None;
        for g in &self.gaps {
            if g.len == 0 {
                return Err(MaskError::Inconsistent("empty gap".into()));
            }
            if g.end() > self.frames {
                return Err(MaskError::Inconsistent(format!(
                    "gap [{}, {}) exceeds {} frames",
                    g.start,
                    g.end(),
                    self.frames
                )));
            }
            if let Some(end) = prev_end {
                if g.start < end {
                    return Err(MaskError::Inconsistent(
                        "gaps overlap or are unsorted".into(),
                    ));
                }
            }
            prev_end = Some(g.end());
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn gaps(&self) -> &[Gap] {
        &self.gaps
    }

    pub fn hop_ms(&self) -> f64 {
        self.hop_ms
    }

    pub fn masked_frames(&self) -> usize {
        self.gaps.iter().map(|g| g.len).sum()
    }

    /// Per-frame indicator `m_t`.
    pub fn indicator(&self) -> Vec<u8> {
        let mut m = vec![1u8; self.frames];
        for g in &self.gaps {
            m[g.start..g.end()].iter_mut().for_each(|v| *v = 0);
        }
        m
    }

    pub fn is_intact(&self, t: usize) -> bool {
        !self.gaps.iter().any(|g| (g.start..g.end()).contains(&t))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("mask serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, MaskError> {
        let mask: Mask =
            serde_json::from_str(s).map_err(|e| MaskError::Inconsistent(e.to_string()))?;
        mask.check()?;
        Ok(mask)
    }
}

/// Draws a gap layout. The total masked duration is Normal(mean, std) clipped
/// to `[min_total, max_total]`; the gap count is uniform over the feasible
/// range; lengths come from sorted uniform cuts of the surplus above the
/// per-gap minimum; placement is uniform over layouts with at least one intact
/// frame between consecutive gaps.
pub fn sample_mask(seed: u64, frames: usize, spec: &MaskSpec) -> Result<Mask, MaskError> {
    spec.validate()?;
    if frames < spec.required_frames() {
        return Err(MaskError::TooShort {
            frames,
            needed: spec.required_frames(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_gap = spec.min_gap_frames();
    let (lo, hi) = (spec.min_total_frames(), spec.max_total_frames());

    let mean = spec.mean_ms / spec.hop_ms;
    let std = spec.std_ms / spec.hop_ms;
    let draw = if std > 0.0 {
        Normal::new(mean, std)
            .map_err(|e| MaskError::InvalidSpec(e.to_string()))?
            .sample(&mut rng)
    } else {
        mean
    };
    let total = (draw.clamp(lo as f64, hi as f64).round() as usize).clamp(lo, hi);

    let k_max = spec.max_gaps.min(total / min_gap);
    let k = rng.random_range(spec.min_gaps..=k_max);

    let surplus = total - k * min_gap;
    let mut cuts: Vec<usize> = (0..k - 1).map(|_| rng.random_range(0..=surplus)).collect();
    cuts.sort_unstable();
    let mut lens = Vec::with_capacity(k);
    let mut prev = 0;
    for &c in cuts.iter().chain(std::iter::once(&surplus)) {
        lens.push(c - prev + min_gap);
        prev = c;
    }

    let slack = frames - total - (k - 1);
    let mut picks = index::sample(&mut rng, slack + k, k).into_vec();
    picks.sort_unstable();
    let mut gaps = Vec::with_capacity(k);
    let mut consumed = 0;
    for (&pick, &len) in picks.iter().zip(&lens) {
        let start = pick + consumed;
        gaps.push(Gap { start, len });
        consumed += len;
    }
    Mask::new(frames, gaps, spec.hop_ms)
}

/// A spectrogram with masked frames zeroed, plus the mask that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSpectrogram {
    pub values: MelSpectrogram,
    pub mask: Mask,
}

/// `a_t = m_t * x_t`.
pub fn apply_mask(x: &MelSpectrogram, mask: &Mask) -> Result<MaskedSpectrogram, MaskError> {
    if x.frames() != mask.frames() {
        return Err(MaskError::LengthMismatch(format!(
            "spectrogram has {} frames, mask {}",
            x.frames(),
            mask.frames()
        )));
    }
    let f = x.n_mels();
    let mut values = x.values().to_vec();
    for g in mask.gaps() {
        values[g.start * f..g.end() * f]
            .iter_mut()
            .for_each(|v| *v = 0.0);
    }
    let values = MelSpectrogram::new(x.frames(), f, values, x.norm())
        .expect("zeroing keeps values in range");
    Ok(MaskedSpectrogram {
        values,
        mask: mask.clone(),
    })
}

/// `o_t = m_t * x_t + (1 - m_t) * y_t`, with `y` clipped to [0, 1]. `y` is a
/// row-major `frames x n_mels` grid.
pub fn composite(x: &MelSpectrogram, y: &[f64], mask: &Mask) -> Result<MelSpectrogram, MaskError> {
    let f = x.n_mels();
    if x.frames() != mask.frames() || y.len() != x.frames() * f {
        return Err(MaskError::LengthMismatch(format!(
            "x {}x{f}, y {} values, mask {} frames",
            x.frames(),
            y.len(),
            mask.frames()
        )));
    }
    let mut out = x.values().to_vec();
    for g in mask.gaps() {
        let range = g.start * f..g.end() * f;
        for (o, &v) in out[range.clone()].iter_mut().zip(&y[range]) {
            *o = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
    }
    Ok(MelSpectrogram::new(x.frames(), f, out, x.norm()).expect("composite stays in range"))
}

/// Hard-invariant and moment summary of a batch of masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskAudit {
    pub count: usize,
    pub violations: Vec<String>,
    pub mean_total_frames: f64,
    pub std_total_frames: f64,
    pub gap_count_histogram: Vec<usize>,
    pub min_gap_len: usize,
}

pub fn audit_masks<'a>(masks: impl IntoIterator<Item = &'a Mask>, spec: &MaskSpec) -> MaskAudit {
    let (lo, hi) = (spec.min_total_frames(), spec.max_total_frames());
    let min_gap = spec.min_gap_frames();
    let mut violations = Vec::new();
    let mut totals = Vec::new();
    let mut hist = vec![0usize; spec.max_gaps + 1];
    let mut shortest = usize::MAX;
    for (i, m) in masks.into_iter().enumerate() {
        let total = m.masked_frames();
        totals.push(total as f64);
        if !(lo..=hi).contains(&total) {
            violations.push(format!("mask {i}: total {total} outside [{lo}, {hi}]"));
        }
        let k = m.gaps().len();
        if k < spec.min_gaps || k > spec.max_gaps {
            violations.push(format!("mask {i}: {k} gaps"));
        } else {
            hist[k] += 1;
        }
        for g in m.gaps() {
            shortest = shortest.min(g.len);
            if g.len < min_gap {
                violations.push(format!("mask {i}: gap of {} frames", g.len));
            }
            if g.end() > m.frames() {
                violations.push(format!("mask {i}: gap past the end"));
            }
        }
        for w in m.gaps().windows(2) {
            if w[1].start < w[0].end() + 1 {
                violations.push(format!("mask {i}: gaps not separated"));
            }
        }
    }
    let n = totals.len().max(1) as f64;
    let mean = totals.iter().sum::<f64>() / n;
    let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    MaskAudit {
        count: totals.len(),
        violations,
        mean_total_frames: mean,
        std_total_frames: var.sqrt(),
        gap_count_histogram: hist,
        min_gap_len: if shortest == usize::MAX { 0 } else { shortest },
    }
}
