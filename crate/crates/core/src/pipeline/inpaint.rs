use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::load_checkpoint;
use super::config::Precision;
use super::manifest::Split;
use super::mask::load_samples;
use super::png::write_triptych;
use super::prepare::CacheIndex;
use super::tensorfile::write_tensor;
use super::PipelineError;
use crate::dsp::{read_wav, AudioFrontend, MelSpectrogram};
use crate::models::{Model, Sample, Variant};
use crate::neural::{Real, Tensor};

pub const INPAINT_META: &str = "inpaint.json";

/// Non-model outputs, for reference rows of an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// The corrupted input with masked frames left at zero.
    Masked,
    /// The clean spectrogram and the original audio.
    Clean,
}

impl std::str::FromStr for Baseline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "masked" => Ok(Baseline::Masked),
            "clean" => Ok(Baseline::Clean),
            other => Err(format!("unknown baseline {other:?}, expected masked or clean")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InpaintOptions {
    pub split: Split,
    pub png: bool,
    pub batch: usize,
    pub workers: usize,
}

impl Default for InpaintOptions {
    fn default() -> Self {
        Self {
            split: Split::Test,
            png: false,
            batch: 32,
            workers: 1,
        }
    }
}

/// Provenance written next to the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpaintMeta {
    pub source: String,
    pub config_digest: Option<String>,
    pub split: Split,
    pub utterances: Vec<String>,
}

pub fn spec_out_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.spec.avi"))
}

pub fn wav_out_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.wav"))
}

/// What to in-paint with: a checkpoint or a baseline.
#[derive(Debug, Clone, Copy)]
pub enum Source<'a> {
    Checkpoint(&'a Path),
    Baseline(Baseline),
}

/// Writes `<id>.spec.avi` (composited spectrogram), `<id>.wav`
/// (Griffin-Lim resynthesis at the feature rate) and optionally `<id>.png`
/// for each utterance of the split.
pub fn cmd_inpaint(source: Source, cache: &Path, out: &Path, opts: &InpaintOptions) -> Result<InpaintMeta, PipelineError> {
    let index = CacheIndex::load(cache)?;
    std::fs::create_dir_all(out).map_err(|e| PipelineError::io(out, e))?;
    let (restored, meta_source, digest) = match source {
        Source::Baseline(b) => {
            let samples = load_samples(cache, &index, opts.split, Variant::ASi, None)?;
            let outs = samples
                .iter()
                .map(|s| match b {
                    Baseline::Masked => s.masked.values.clone(),
                    Baseline::Clean => s.clean.clone(),
                })
                .collect();
            (pair(samples, outs), format!("baseline:{}", serde_json::to_string(&b).expect("name")), None)
        }
        Source::Checkpoint(p) => {
            let ck = load_checkpoint(p)?;
            let variant = ck.header.model.variant;
            if variant.uses_visual() && ck.header.model.visual_dim != ck.header.config.visual.feature_dim() {
                return Err(PipelineError::Config("checkpoint visual settings are inconsistent".into()));
            }
            if ck.header.config.dsp != index.dsp || (variant.uses_visual() && ck.header.config.visual != index.visual) {
                return Err(PipelineError::Config(
                    "checkpoint was trained on features with different settings than this cache".into(),
                ));
            }
            let samples = load_without_labels(cache, &index, opts.split, variant)?;
            let outs = match ck.header.precision {
                Precision::F32 => run_model(&ck.model::<f32>()?, &samples, opts.batch)?,
                Precision::F64 => run_model(&ck.model::<f64>()?, &samples, opts.batch)?,
            };
            (pair(samples, outs), p.display().to_string(), Some(ck.header.config.digest()))
        }
    };

    let frontend = AudioFrontend::new(index.dsp)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let clean_audio = matches!(source, Source::Baseline(Baseline::Clean));
    pool.install(|| {
        restored.par_iter().try_for_each(|(s, o)| -> Result<(), PipelineError> {
            let entry = index.get(&s.id).expect("sample comes from index");
            write_tensor(
                &spec_out_path(out, &s.id),
                &Tensor::new(vec![o.frames(), o.n_mels()], o.values().to_vec()).expect("shape"),
            )?;
            let wave = if clean_audio {
                frontend.conform(&read_wav(&entry.wav_path)?)?
            } else {
                frontend.synthesize(o)?
            };
            crate::dsp::write_wav(wav_out_path(out, &s.id), &wave)?;
            if opts.png {
                write_triptych(&out.join(format!("{}.png", s.id)), &s.masked.values, o, &s.clean, &s.masked.mask)?;
            }
            Ok(())
        })
    })?;
    let meta = InpaintMeta {
        source: meta_source,
        config_digest: digest,
        split: opts.split,
        utterances: restored.iter().map(|(s, _)| s.id.clone()).collect(),
    };
    let p = out.join(INPAINT_META);
    std::fs::write(&p, serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n")
        .map_err(|e| PipelineError::io(&p, e))?;
    Ok(meta)
}

fn pair(samples: Vec<Sample>, outs: Vec<MelSpectrogram>) -> Vec<(Sample, MelSpectrogram)> {
    samples.into_iter().zip(outs).collect()
}

fn load_without_labels(cache: &Path, index: &CacheIndex, split: Split, variant: Variant) -> Result<Vec<Sample>, PipelineError> {
    // inference never needs transcripts; drop them for CTC variants
    let av = if variant.uses_visual() { Variant::AvS2s } else { Variant::ASi };
    load_samples(cache, index, split, av, None)
}

fn run_model<R: Real>(model: &Model<R>, samples: &[Sample], batch: usize) -> Result<Vec<MelSpectrogram>, PipelineError> {
    let mut outs = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        outs.extend(model.inpaint_batch(&refs)?.into_iter().map(|r| r.o));
    }
    Ok(outs)
}
