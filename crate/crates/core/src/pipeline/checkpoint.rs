//! Checkpoints: `AVCK`, u32 version, u64 header length, a JSON header, then
//! `AVI1` tensors for each section listed in the header.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Precision, RunConfig};
use super::tensorfile::{decode_tensor, encode_tensor, AnyTensor};
use super::PipelineError;
use crate::losses::Vocabulary;
use crate::models::{build, Model, ModelConfig};
use crate::neural::{Dtype, ParamMeta, ParamStore, Real, Tensor};
use crate::training::{AdamState, EarlyStopping, EpochLog, PlateauScheduler, TrainState};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AVCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHeader {
    pub epoch: usize,
    pub lr: f64,
    pub adam_step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub plateau: PlateauScheduler,
    pub early: EarlyStopping,
    pub log: Vec<EpochLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub precision: Precision,
    pub config: RunConfig,
    pub model: ModelConfig,
    pub vocabulary: Option<Vocabulary>,
    pub params: Vec<ParamMeta>,
    pub best_epoch: usize,
    /// Present in resumable checkpoints, which then also carry the Adam
    /// moments and the best parameters.
    pub train: Option<TrainHeader>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<AnyTensor>,
    pub adam_m: Vec<AnyTensor>,
    pub adam_v: Vec<AnyTensor>,
    pub best: Vec<AnyTensor>,
}

fn precision_of<R: Real>() -> Precision {
    match R::DTYPE {
        Dtype::F32 => Precision::F32,
        Dtype::F64 => Precision::F64,
    }
}

fn push_store<R: Real>(s: &ParamStore<R>, out: &mut Vec<u8>) {
    for (_, p) in s.iter() {
        encode_tensor(&p.value, out);
    }
}

pub struct CheckpointInput<'a, R> {
    pub config: &'a RunConfig,
    pub vocabulary: Option<&'a Vocabulary>,
    pub model: &'a Model<R>,
    pub best_epoch: usize,
    pub train: Option<(&'a TrainState<R>, &'a ParamStore<R>)>,
}

pub fn save_checkpoint<R: Real>(path: &Path, c: CheckpointInput<R>) -> Result<(), PipelineError> {
    let header = CheckpointHeader {
        precision: precision_of::<R>(),
        config: c.config.clone(),
        model: c.model.config().clone(),
        vocabulary: c.vocabulary.cloned(),
        params: c.model.params.metas(),
        best_epoch: c.best_epoch,
        train: c.train.map(|(s, _)| TrainHeader {
            epoch: s.epoch,
            lr: s.lr,
            adam_step: s.adam.step,
            beta1: s.adam.beta1,
            beta2: s.adam.beta2,
            epsilon: s.adam.epsilon,
            plateau: s.plateau.clone(),
            early: s.early.clone(),
            log: s.log.clone(),
        }),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    push_store(&c.model.params, &mut out);
    if let Some((s, best)) = c.train {
        for moments in [&s.adam.m, &s.adam.v] {
            for m in moments {
                encode_tensor(&Tensor::new(vec![m.len()], m.clone()).expect("1-D"), &mut out);
            }
        }
        push_store(best, &mut out);
    }
    std::fs::write(path, out).map_err(|e| PipelineError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, PipelineError> {
    let b = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    let bad = |m: &str| PipelineError::Format(format!("{}: {m}", path.display()));
    if b.len() < 16 || &b[..4] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint"));
    }
    let version = u32::from_le_bytes(b[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let len = u64::from_le_bytes(b[8..16].try_into().expect("8 bytes")) as usize;
    let json = b.get(16..16 + len).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(json).map_err(|e| bad(&e.to_string()))?;
    let mut pos = 16 + len;
    let n = header.params.len();
    let mut take = |count: usize| -> Result<Vec<AnyTensor>, PipelineError> {
        (0..count).map(|_| decode_tensor(&b, &mut pos)).collect()
    };
    let params = take(n)?;
    let (adam_m, adam_v, best) = if header.train.is_some() {
        (take(n)?, take(n)?, take(n)?)
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    if pos != b.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(Checkpoint {
        header,
        params,
        adam_m,
        adam_v,
        best,
    })
}

fn store_from<R: Real>(template: &ParamStore<R>, metas: &[ParamMeta], ts: &[AnyTensor]) -> Result<ParamStore<R>, PipelineError> {
    let mut s = template.clone();
    s.load(metas, ts.iter().map(|t| t.cast()).collect())?;
    Ok(s)
}

impl Checkpoint {
    /// Rebuilds the model at precision `R`, casting stored values if needed.
    pub fn model<R: Real>(&self) -> Result<Model<R>, PipelineError> {
        let mut m: Model<R> = build(&self.header.model, self.header.config.seed)?;
        m.params = store_from(&m.params, &self.header.params, &self.params)?;
        Ok(m)
    }

    /// Training state and best parameters for resuming.
    pub fn resume_state<R: Real>(&self, model: &Model<R>) -> Result<(TrainState<R>, ParamStore<R>), PipelineError> {
        let t = self
            .header
            .train
            .as_ref()
            .ok_or_else(|| PipelineError::Format("checkpoint carries no training state".into()))?;
        let moments = |v: &[AnyTensor]| v.iter().map(|t| t.cast::<R>().into_data()).collect::<Vec<_>>();
        let state = TrainState {
            epoch: t.epoch,
            lr: t.lr,
            adam: AdamState {
                m: moments(&self.adam_m),
                v: moments(&self.adam_v),
                step: t.adam_step,
                beta1: t.beta1,
                beta2: t.beta2,
                epsilon: t.epsilon,
            },
            plateau: t.plateau.clone(),
            early: t.early.clone(),
            log: t.log.clone(),
        };
        let best = store_from(&model.params, &self.header.params, &self.best)?;
        Ok((state, best))
    }
}
