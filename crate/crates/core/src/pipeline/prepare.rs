//! Feature cache: per-utterance normalized log-Mel and motion tensors plus
//! an index with digests that lets reruns skip unchanged inputs.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::VisualConfig;
use super::manifest::{Manifest, Split};
use super::tensorfile::{read_tensor, write_tensor};
use super::PipelineError;
use crate::dsp::{read_wav, AudioFrontend, FeatureParams, MelSpectrogram, NormalizationParams};
use crate::neural::Tensor;
use crate::visual::{normalize01, raw_motion_features, read_landmarks_csv, FeatureMatrix, MotionFeatures, NormStats};

pub const INDEX_FILE: &str = "index.json";

/// Largest tolerated gap between audio and landmark durations.
pub const MAX_AV_SKEW_S: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub utterance_id: String,
    pub split: Split,
    pub speaker_id: String,
    pub transcript: String,
    pub wav_path: PathBuf,
    pub frames: usize,
    pub mel_norm: Option<NormalizationParams>,
    pub input_digest: String,
    pub norm_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheIndex {
    pub dsp: FeatureParams,
    pub visual: VisualConfig,
    /// Motion statistics from the training split only.
    pub motion_stats: NormStats,
    pub entries: Vec<CacheEntry>,
}

impl CacheIndex {
    pub fn load(cache: &Path) -> Result<Self, PipelineError> {
        let p = cache.join(INDEX_FILE);
        let text = std::fs::read_to_string(&p).map_err(|e| PipelineError::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Format(format!("{}: {e}", p.display())))
    }

    pub fn split(&self, s: Split) -> impl Iterator<Item = &CacheEntry> {
        self.entries.iter().filter(move |e| e.split == s)
    }

    pub fn get(&self, id: &str) -> Option<&CacheEntry> {
        self.entries.iter().find(|e| e.utterance_id == id)
    }
}

pub fn spec_path(cache: &Path, id: &str) -> PathBuf {
    cache.join("features").join(format!("{id}.spec.avi"))
}

pub fn raw_motion_path(cache: &Path, id: &str) -> PathBuf {
    cache.join("features").join(format!("{id}.motion_raw.avi"))
}

pub fn motion_path(cache: &Path, id: &str) -> PathBuf {
    cache.join("features").join(format!("{id}.motion.avi"))
}

fn matrix_tensor(rows: usize, cols: usize, data: Vec<f64>) -> Tensor<f64> {
    Tensor::new(vec![rows, cols], data).expect("consistent shape")
}

fn read_matrix(path: &Path, cols: Option<usize>) -> Result<(usize, usize, Vec<f64>), PipelineError> {
    let t = read_tensor(path)?.cast::<f64>();
    let (r, c) = match t.shape() {
        [r, c] if cols.is_none_or(|want| want == *c) => (*r, *c),
        s => return Err(PipelineError::Format(format!("{}: unexpected shape {s:?}", path.display()))),
    };
    Ok((r, c, t.into_data()))
}

pub fn load_spec(cache: &Path, e: &CacheEntry, n_mels: usize) -> Result<MelSpectrogram, PipelineError> {
    let (r, c, d) = read_matrix(&spec_path(cache, &e.utterance_id), Some(n_mels))?;
    Ok(MelSpectrogram::new(r, c, d, e.mel_norm)?)
}

pub fn load_motion(cache: &Path, id: &str) -> Result<MotionFeatures, PipelineError> {
    let (r, c, d) = read_matrix(&motion_path(cache, id), None)?;
    Ok(MotionFeatures::new(FeatureMatrix::new(r, c, d)?)?)
}

fn digest_parts(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct PrepareSummary {
    pub extracted: usize,
    pub normalized: usize,
    pub skipped: usize,
}

struct Extracted {
    frames: usize,
    mel_norm: Option<NormalizationParams>,
    digest: String,
    fresh: bool,
}

/// Builds or refreshes the feature cache for every manifest entry.
pub fn cmd_prepare(
    manifest: &Manifest,
    dsp: &FeatureParams,
    visual: &VisualConfig,
    cache: &Path,
    workers: usize,
) -> Result<PrepareSummary, PipelineError> {
    let frontend = AudioFrontend::new(*dsp)?;
    let feat_dir = cache.join("features");
    std::fs::create_dir_all(&feat_dir).map_err(|e| PipelineError::io(&feat_dir, e))?;
    let old: HashMap<String, CacheEntry> = CacheIndex::load(cache)
        .map(|i| i.entries.into_iter().map(|e| (e.utterance_id.clone(), e)).collect())
        .unwrap_or_default();
    let settings = serde_json::to_vec(&(dsp, visual)).expect("settings serialize");

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let extracted: Vec<Extracted> = pool.install(|| {
        manifest
            .entries
            .par_iter()
            .map(|e| -> Result<Extracted, PipelineError> {
                let wav = manifest.resolve(&e.wav_path);
                let lm = manifest.resolve(&e.landmarks_path);
                let wav_bytes = std::fs::read(&wav).map_err(|err| PipelineError::io(&wav, err))?;
                let lm_bytes = std::fs::read(&lm).map_err(|err| PipelineError::io(&lm, err))?;
                let digest = digest_parts(&[&wav_bytes, &lm_bytes, &settings]);
                let id = &e.utterance_id;
                if let Some(prev) = old.get(id) {
                    if prev.input_digest == digest
                        && spec_path(cache, id).is_file()
                        && raw_motion_path(cache, id).is_file()
                    {
                        return Ok(Extracted {
                            frames: prev.frames,
                            mel_norm: prev.mel_norm,
                            digest,
                            fresh: false,
                        });
                    }
                }
                let audio = frontend.conform(&read_wav(&wav)?)?;
                let mel = frontend.analyze(&audio)?;
                let landmarks = read_landmarks_csv(&lm)?;
                let audio_s = audio.len() as f64 / audio.sample_rate() as f64;
                let video_s = landmarks.frames() as f64 / landmarks.fps();
                if (audio_s - video_s).abs() > MAX_AV_SKEW_S {
                    return Err(PipelineError::Data(format!(
                        "{id}: audio lasts {audio_s:.3} s but landmarks {video_s:.3} s"
                    )));
                }
                let raw = raw_motion_features(&landmarks, mel.frames(), visual.landmarks, visual.interpolation)?;
                write_tensor(&spec_path(cache, id), &matrix_tensor(mel.frames(), mel.n_mels(), mel.values().to_vec()))?;
                write_tensor(&raw_motion_path(cache, id), &matrix_tensor(raw.rows, raw.cols, raw.data))?;
                Ok(Extracted {
                    frames: mel.frames(),
                    mel_norm: mel.norm(),
                    digest,
                    fresh: true,
                })
            })
            .collect::<Result<_, _>>()
    })?;

    let mut train_raw = Vec::new();
    for e in manifest.split(Split::Train) {
        let (r, c, d) = read_matrix(&raw_motion_path(cache, &e.utterance_id), None)?;
        train_raw.push(FeatureMatrix::new(r, c, d)?);
    }
    if train_raw.is_empty() {
        return Err(PipelineError::Manifest("no training utterances to take motion statistics from".into()));
    }
    let stats = NormStats::from_matrices(&train_raw)?;
    drop(train_raw);
    let norm_digest = digest_parts(&[&serde_json::to_vec(&stats).expect("stats serialize")]);

    let mut summary = PrepareSummary::default();
    let mut entries = Vec::with_capacity(manifest.entries.len());
    for (e, x) in manifest.entries.iter().zip(extracted) {
        let id = &e.utterance_id;
        let stale = x.fresh
            || old.get(id).is_none_or(|p| p.norm_digest != norm_digest)
            || !motion_path(cache, id).is_file();
        if stale {
            let (r, c, d) = read_matrix(&raw_motion_path(cache, id), None)?;
            let m = normalize01(&FeatureMatrix::new(r, c, d)?, &stats)?.into_matrix();
            write_tensor(&motion_path(cache, id), &matrix_tensor(m.rows, m.cols, m.data))?;
            summary.normalized += 1;
        }
        if x.fresh {
            summary.extracted += 1;
        } else if !stale {
            summary.skipped += 1;
        }
        entries.push(CacheEntry {
            utterance_id: id.clone(),
            split: e.split,
            speaker_id: e.speaker_id.clone(),
            transcript: e.transcript.clone(),
            wav_path: manifest.resolve(&e.wav_path),
            frames: x.frames,
            mel_norm: x.mel_norm,
            input_digest: x.digest,
            norm_digest: norm_digest.clone(),
        });
    }
    let index = CacheIndex {
        dsp: *dsp,
        visual: *visual,
        motion_stats: stats,
        entries,
    };
    let p = cache.join(INDEX_FILE);
    let text = serde_json::to_string_pretty(&index).expect("index serializes") + "\n";
    std::fs::write(&p, text).map_err(|e| PipelineError::io(&p, e))?;
    Ok(summary)
}
