//! Landmark motion features: mouth selection, frame differences, temporal
//! upsampling and min/max normalization.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FULL_LANDMARKS: usize = 68;
pub const MOUTH_START: usize = 48;
pub const MOUTH_LANDMARKS: usize = 20;
pub const DEFAULT_FPS: f64 = 25.0;

#[derive(Debug, Error)]
pub enum VisualError {
    #[error("expected {expected} landmarks per frame, got {got}")]
    LandmarkCount { expected: usize, got: usize },
    #[error("need at least {need} frames, got {got}")]
    TooFewFrames { need: usize, got: usize },
    #[error("target length {0} is below 2")]
    TargetTooShort(usize),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("malformed landmark file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which landmarks feed the motion features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkSet {
    #[default]
    Mouth,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    CubicSpline,
    Linear,
}

/// Per-frame 2-D landmark coordinates, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSequence {
    points: usize,
    fps: f64,
    coords: Vec<[f64; 2]>,
}

impl LandmarkSequence {
    pub fn new(points: usize, fps: f64, coords: Vec<[f64; 2]>) -> Result<Self, VisualError> {
        if points == 0 || coords.len() % points != 0 {
            return Err(VisualError::DimensionMismatch(format!(
                "{} coordinates do not split into frames of {points}",
                coords.len()
            )));
        }
        if let Some(i) = coords
            .iter()
            .position(|c| !c[0].is_finite() || !c[1].is_finite())
        {
            return Err(VisualError::NonFinite(i));
        }
        Ok(Self {
            points,
            fps,
            coords,
        })
    }

    pub fn frames(&self) -> usize {
        self.coords.len() / self.points
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frame(&self, f: usize) -> &[[f64; 2]] {
        &self.coords[f * self.points..(f + 1) * self.points]
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    /// Shifts every landmark by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let coords = self.coords.iter().map(|c| [c[0] + dx, c[1] + dy]).collect();
        Self {
            coords,
            ..self.clone()
        }
    }
}

/// Row-major `rows x cols` matrix of feature values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, VisualError> {
        if data.len() != rows * cols {
            return Err(VisualError::DimensionMismatch(format!(
                "{} values for {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Normalized motion features, every value in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct MotionFeatures(FeatureMatrix);

impl MotionFeatures {
    pub fn new(m: FeatureMatrix) -> Result<Self, VisualError> {
        if let Some(i) = m.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(VisualError::DimensionMismatch(format!(
                "value {} at {i} outside [0, 1]",
                m.data[i]
            )));
        }
        Ok(Self(m))
    }

    pub fn frames(&self) -> usize {
        self.0.rows
    }

    pub fn dim(&self) -> usize {
        self.0.cols
    }

    pub fn matrix(&self) -> &FeatureMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> FeatureMatrix {
        self.0
    }
}

/// Keeps landmarks 48..=67.
pub fn mouth_subset(l: &LandmarkSequence) -> Result<LandmarkSequence, VisualError> {
    if l.points != FULL_LANDMARKS {
        return Err(VisualError::LandmarkCount {
            expected: FULL_LANDMARKS,
            got: l.points,
        });
    }
    let coords = (0..l.frames())
        .flat_map(|f| {
            l.frame(f)[MOUTH_START..MOUTH_START + MOUTH_LANDMARKS]
                .iter()
                .copied()
        })
        .collect();
    LandmarkSequence::new(MOUTH_LANDMARKS, l.fps, coords)
}

/// Row `f` is the flattened `frame(f + 1) - frame(f)`.
pub fn motion_vectors(l: &LandmarkSequence) -> Result<FeatureMatrix, VisualError> {
    let n = l.frames();
    if n < 2 {
        return Err(VisualError::TooFewFrames { need: 2, got: n });
    }
    let mut data = Vec::with_capacity((n - 1) * l.points * 2);
    for f in 0..n - 1 {
        for (a, b) in l.frame(f).iter().zip(l.frame(f + 1)) {
            data.push(b[0] - a[0]);
            data.push(b[1] - a[1]);
        }
    }
    FeatureMatrix::new(n - 1, l.points * 2, data)
}

/// Second derivatives of the natural cubic spline through `y` at unit spacing.
fn natural_spline_m(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior system M[i-1] + 4 M[i] + M[i+1] = rhs
    let k = n - 2;
    let mut c = vec![0.0; k];
    let mut d = vec![0.0; k];
    for i in 0..k {
        let rhs = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]);
        let denom = if i == 0 { 4.0 } else { 4.0 - c[i - 1] };
        c[i] = 1.0 / denom;
        d[i] = if i == 0 {
            rhs / denom
        } else {
            (rhs - d[i - 1]) / denom
        };
    }
    m[k] = d[k - 1];
    for i in (0..k - 1).rev() {
        m[i + 1] = d[i] - c[i] * m[i + 2];
    }
    m
}

/// Resamples each column onto `target` uniformly spaced points spanning the
/// same interval; first and last rows map to first and last rows.
pub fn upsample_temporal(
    mv: &FeatureMatrix,
    target: usize,
    interp: Interpolation,
) -> Result<FeatureMatrix, VisualError> {
    if target < 2 {
        return Err(VisualError::TargetTooShort(target));
    }
    let n = mv.rows;
    if n < 2 {
        return Err(VisualError::TooFewFrames { need: 2, got: n });
    }
    let cols = mv.cols;
    let mut out = vec![0.0; target * cols];
    let mut column = vec![0.0; n];
    for c in 0..cols {
        for (r, v) in column.iter_mut().enumerate() {
            *v = mv.data[r * cols + c];
        }
        let m = match interp {
            Interpolation::CubicSpline => natural_spline_m(&column),
            Interpolation::Linear => vec![0.0; n],
        };
        for j in 0..target {
            // position j * (n-1) / (target-1) split exactly into index + fraction
            let num = j * (n - 1);
            let i = num / (target - 1);
            let rem = num % (target - 1);
            out[j * cols + c] = if rem == 0 {
                column[i]
            } else {
                let t = rem as f64 / (target - 1) as f64;
                let s = 1.0 - t;
                column[i] * s
                    + column[i + 1] * t
                    + ((s * s * s - s) * m[i] + (t * t * t - t) * m[i + 1]) / 6.0
            };
        }
    }
    FeatureMatrix::new(target, cols, out)
}

/// Per-dimension minimum and maximum, gathered on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    pub fn from_matrices<'a>(
        mats: impl IntoIterator<Item = &'a FeatureMatrix>,
    ) -> Result<Self, VisualError> {
        let mut stats: Option<NormStats> = None;
        for m in mats {
            let s = stats.get_or_insert_with(|| NormStats {
                min: vec![f64::INFINITY; m.cols],
                max: vec![f64::NEG_INFINITY; m.cols],
            });
            if s.min.len() != m.cols {
                return Err(VisualError::DimensionMismatch(format!(
                    "{} columns vs {}",
                    m.cols,
                    s.min.len()
                )));
            }
            for (i, &v) in m.data.iter().enumerate() {
                if v.is_nan() {
                    return Err(VisualError::NonFinite(i));
                }
                let c = i % m.cols;
                s.min[c] = s.min[c].min(v);
                s.max[c] = s.max[c].max(v);
            }
        }
        stats.ok_or_else(|| VisualError::DimensionMismatch("no training features".into()))
    }
}

/// `(v - min) / (max - min)`, clipped to [0, 1]; constant dimensions give 0.5.
pub fn normalize01(mv: &FeatureMatrix, stats: &NormStats) -> Result<MotionFeatures, VisualError> {
    if stats.min.len() != mv.cols || stats.max.len() != mv.cols {
        return Err(VisualError::DimensionMismatch(format!(
            "stats for {} dims, features have {}",
            stats.min.len(),
            mv.cols
        )));
    }
    let mut data = Vec::with_capacity(mv.data.len());
    for (i, &v) in mv.data.iter().enumerate() {
        if v.is_nan() {
            return Err(VisualError::NonFinite(i));
        }
        let c = i % mv.cols;
        let (lo, hi) = (stats.min[c], stats.max[c]);
        data.push(if hi > lo {
            ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            0.5
        });
    }
    MotionFeatures::new(FeatureMatrix::new(mv.rows, mv.cols, data)?)
}

/// Landmarks to un-normalized motion features of length `target`.
pub fn raw_motion_features(
    l: &LandmarkSequence,
    target: usize,
    set: LandmarkSet,
    interp: Interpolation,
) -> Result<FeatureMatrix, VisualError> {
    let sub = match set {
        LandmarkSet::Mouth => mouth_subset(l)?,
        LandmarkSet::Full => l.clone(),
    };
    upsample_temporal(&motion_vectors(&sub)?, target, interp)
}

/// Reads `frame,x0,y0,...,x67,y67`; rows are ordered by the frame column.
pub fn read_landmarks_csv(path: &Path) -> Result<LandmarkSequence, VisualError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || (headers.len() - 1) % 2 != 0 || &headers[0] != "frame" {
        return Err(VisualError::Format(format!(
            "unexpected header in {}",
            path.display()
        )));
    }
    let points = (headers.len() - 1) / 2;
    for p in 0..points {
        if headers[1 + 2 * p] != *format!("x{p}") || headers[2 + 2 * p] != *format!("y{p}") {
            return Err(VisualError::Format(format!(
                "bad column names near point {p}"
            )));
        }
    }
    let mut rows: Vec<(i64, Vec<[f64; 2]>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| VisualError::Format(format!("{s:?}: {e}")))
        };
        let frame = rec[0]
            .trim()
            .parse::<i64>()
            .map_err(|e| VisualError::Format(format!("frame index: {e}")))?;
        let mut pts = Vec::with_capacity(points);
        for p in 0..points {
            pts.push([parse(&rec[1 + 2 * p])?, parse(&rec[2 + 2 * p])?]);
        }
        rows.push((frame, pts));
    }
    rows.sort_by_key(|r| r.0);
    let coords = rows.into_iter().flat_map(|r| r.1).collect();
    LandmarkSequence::new(points, DEFAULT_FPS, coords)
}

pub fn write_landmarks_csv(path: &Path, l: &LandmarkSequence) -> Result<(), VisualError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["frame".to_string()];
    for p in 0..l.points {
        header.push(format!("x{p}"));
        header.push(format!("y{p}"));
    }
    w.write_record(&header)?;
    for f in 0..l.frames() {
        let mut rec = vec![f.to_string()];
        for c in l.frame(f) {
            rec.push(format!("{}", c[0]));
            rec.push(format!("{}", c[1]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
