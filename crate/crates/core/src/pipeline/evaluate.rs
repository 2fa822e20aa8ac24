use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::inpaint::{spec_out_path, wav_out_path, INPAINT_META};
use super::manifest::Split;
use super::prepare::{load_spec, CacheIndex};
use super::tensorfile::read_tensor;
use super::PipelineError;
use crate::dsp::{read_wav, AudioFrontend, MelSpectrogram, Waveform};
use crate::metrics::{mse_metric, pesq_adapter, psnr_from_mse, stoi, MetricsReport, SampleMetrics};

pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";

/// Pads with zeros or truncates to `len` samples.
fn fit_length(w: Waveform, len: usize) -> Result<Waveform, PipelineError> {
    let rate = w.sample_rate();
    let mut s = w.into_samples();
    s.resize(len, 0.0);
    Ok(Waveform::new(s, rate)?)
}

/// Scores every utterance of `split` in `inpainted` against the cache:
/// MSE and PSNR on normalized log-Mel grids, STOI and optional PESQ on
/// waveforms against the original audio. Writes `metrics.json` and
/// `metrics.csv` into `inpainted`.
pub fn cmd_evaluate(
    inpainted: &Path,
    cache: &Path,
    split: Split,
    pesq_tool: Option<&Path>,
    workers: usize,
) -> Result<MetricsReport, PipelineError> {
    let index = CacheIndex::load(cache)?;
    let frontend = AudioFrontend::new(index.dsp)?;
    let entries: Vec<_> = index.split(split).collect();
    if entries.is_empty() {
        return Err(PipelineError::Missing(format!("no {} utterances in the cache", split.name())));
    }
    for e in &entries {
        for p in [spec_out_path(inpainted, &e.utterance_id), wav_out_path(inpainted, &e.utterance_id)] {
            if !p.is_file() {
                return Err(PipelineError::Missing(p.display().to_string()));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let rows = pool.install(|| {
        entries
            .par_iter()
            .map(|e| -> Result<SampleMetrics, PipelineError> {
                let id = &e.utterance_id;
                let truth = load_spec(cache, e, index.dsp.n_mels)?;
                let t = read_tensor(&spec_out_path(inpainted, id))?.cast::<f64>();
                if t.shape() != [truth.frames(), truth.n_mels()] {
                    return Err(PipelineError::Data(format!("{id}: output shape {:?}", t.shape())));
                }
                let out = MelSpectrogram::new(truth.frames(), truth.n_mels(), t.into_data(), truth.norm())?;
                let mse = mse_metric(&truth, &out)?;
                let clean = frontend.conform(&read_wav(&e.wav_path)?)?;
                let degraded = frontend.conform(&read_wav(wav_out_path(inpainted, id))?)?;
                let degraded = fit_length(degraded, clean.len())?;
                Ok(SampleMetrics {
                    utterance_id: id.clone(),
                    pesq: pesq_adapter(&clean, &degraded, pesq_tool)?,
                    stoi: stoi(&clean, &degraded)?,
                    psnr_db: psnr_from_mse(mse),
                    mse,
                })
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let meta = std::fs::read(inpainted.join(INPAINT_META)).unwrap_or_default();
    let digest = hex::encode(Sha256::digest(&meta));
    let report = MetricsReport::new(rows, digest)?;
    let p = inpainted.join(METRICS_JSON);
    std::fs::write(&p, report.to_json() + "\n").map_err(|e| PipelineError::io(&p, e))?;
    report.write_csv(&inpainted.join(METRICS_CSV))?;
    Ok(report)
}
