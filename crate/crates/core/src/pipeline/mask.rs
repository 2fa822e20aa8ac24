use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::manifest::Split;
use super::prepare::{load_motion, load_spec, CacheIndex};
use super::PipelineError;
use crate::corruption::{apply_mask, audit_masks, sample_mask, Mask, MaskAudit, MaskSpec};
use crate::losses::{Lexicon, Vocabulary};
use crate::models::{Sample, Variant};
use crate::seed::derive_seed;

pub const MASK_META_FILE: &str = "masks/meta.json";

pub fn mask_path(cache: &Path, id: &str) -> PathBuf {
    cache.join("masks").join(format!("{id}.mask.json"))
}

/// Seed of the mask for one utterance.
pub fn mask_seed(seed: u64, id: &str) -> u64 {
    derive_seed(seed, &format!("mask/{id}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskMeta {
    pub seed: u64,
    pub spec: MaskSpec,
    pub count: usize,
}

/// Samples and stores one mask per cached utterance.
pub fn cmd_mask(cache: &Path, seed: u64, spec: &MaskSpec) -> Result<MaskMeta, PipelineError> {
    spec.validate()?;
    let index = CacheIndex::load(cache)?;
    let dir = cache.join("masks");
    std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
    for e in &index.entries {
        let m = sample_mask(mask_seed(seed, &e.utterance_id), e.frames, spec)?;
        let p = mask_path(cache, &e.utterance_id);
        std::fs::write(&p, m.to_json() + "\n").map_err(|err| PipelineError::io(&p, err))?;
    }
    let meta = MaskMeta {
        seed,
        spec: *spec,
        count: index.entries.len(),
    };
    let p = cache.join(MASK_META_FILE);
    std::fs::write(&p, serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n")
        .map_err(|e| PipelineError::io(&p, e))?;
    Ok(meta)
}

pub fn load_mask(cache: &Path, id: &str) -> Result<Mask, PipelineError> {
    let p = mask_path(cache, id);
    let text = std::fs::read_to_string(&p).map_err(|e| PipelineError::io(&p, e))?;
    Ok(Mask::from_json(&text)?)
}

/// Audits every stored mask of the cache.
pub fn audit_cache_masks(cache: &Path, spec: &MaskSpec) -> Result<MaskAudit, PipelineError> {
    let index = CacheIndex::load(cache)?;
    let masks = index
        .entries
        .iter()
        .map(|e| load_mask(cache, &e.utterance_id))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(audit_masks(&masks, spec))
}

/// Audits `count` freshly sampled masks of `frames` frames.
pub fn audit_sampled_masks(seed: u64, count: usize, frames: usize, spec: &MaskSpec) -> Result<MaskAudit, PipelineError> {
    let masks = (0..count)
        .map(|i| sample_mask(derive_seed(seed, &format!("audit/{i}")), frames, spec))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(audit_masks(&masks, spec))
}

/// How transcripts turn into CTC targets.
#[derive(Debug, Clone, Copy)]
pub enum Labeler<'a> {
    Lexicon(&'a Lexicon, &'a Vocabulary),
    Chars(&'a Vocabulary),
}

impl Labeler<'_> {
    pub fn encode(&self, transcript: &str) -> Result<Vec<usize>, PipelineError> {
        Ok(match self {
            Labeler::Lexicon(l, v) => l.encode(transcript, v)?,
            Labeler::Chars(v) => v.encode_chars(transcript)?,
        })
    }
}

/// Training/evaluation samples of one split, carrying only the inputs the
/// variant consumes.
pub fn load_samples(
    cache: &Path,
    index: &CacheIndex,
    split: Split,
    variant: Variant,
    labeler: Option<Labeler>,
) -> Result<Vec<Sample>, PipelineError> {
    index
        .split(split)
        .map(|e| {
            let clean = load_spec(cache, e, index.dsp.n_mels)?;
            let mask = load_mask(cache, &e.utterance_id)?;
            let masked = apply_mask(&clean, &mask)?;
            let visual = if variant.uses_visual() {
                Some(load_motion(cache, &e.utterance_id)?)
            } else {
                None
            };
            let labels = match (variant.has_ctc(), labeler) {
                (true, Some(l)) => Some(l.encode(&e.transcript)?),
                (true, None) => {
                    return Err(PipelineError::Config(format!("{variant} needs transcript labels")));
                }
                (false, _) => None,
            };
            Ok(Sample {
                id: e.utterance_id.clone(),
                clean,
                masked,
                visual,
                labels,
            })
        })
        .collect()
}
