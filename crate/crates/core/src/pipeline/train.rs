use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::checkpoint::{load_checkpoint, save_checkpoint, CheckpointInput};
use super::config::{Precision, RunConfig};
use super::manifest::Split;
use super::mask::{load_samples, Labeler};
use super::prepare::CacheIndex;
use super::PipelineError;
use crate::losses::{Lexicon, Vocabulary};
use crate::models::{build, Model};
use crate::neural::Real;
use crate::training::{fit, EpochLog};

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const LOG_FILE: &str = "log.jsonl";
pub const TIMING_FILE: &str = "timing.jsonl";
pub const RESOLVED_CONFIG: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub run_dir: PathBuf,
}

/// Log line without wall-clock time, so identical runs give identical logs.
fn log_line(l: &EpochLog) -> String {
    let mut v = serde_json::to_value(l).expect("log serializes");
    v.as_object_mut().expect("object").remove("seconds");
    serde_json::to_string(&v).expect("log serializes")
}

fn check_cache(cfg: &RunConfig, index: &CacheIndex) -> Result<(), PipelineError> {
    if index.dsp != cfg.dsp || index.visual != cfg.visual {
        return Err(PipelineError::Config(
            "cache was prepared with different dsp/visual settings; rerun prepare".into(),
        ));
    }
    Ok(())
}

/// Config with the model's vocabulary size taken from the label setup.
pub fn resolve_config(cfg: &RunConfig) -> Result<(RunConfig, Option<Lexicon>, Vocabulary), PipelineError> {
    cfg.validate()?;
    let (lex, vocab) = cfg.labels.resolve()?;
    let mut resolved = cfg.clone();
    resolved.model.vocab = vocab.len();
    resolved.model.validate()?;
    Ok((resolved, lex, vocab))
}

/// Trains the configured variant on a prepared and masked cache. With
/// `resume`, continues from `last.ckpt` in the run directory.
pub fn cmd_train(cfg: &RunConfig, resume: bool) -> Result<TrainSummary, PipelineError> {
    match cfg.precision {
        Precision::F32 => train_impl::<f32>(cfg, resume),
        Precision::F64 => train_impl::<f64>(cfg, resume),
    }
}

fn open_log(path: &Path, append: bool) -> Result<File, PipelineError> {
    OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(|e| PipelineError::io(path, e))
}

fn train_impl<R: Real>(cfg: &RunConfig, resume: bool) -> Result<TrainSummary, PipelineError> {
    let (cfg, lex, vocab) = resolve_config(cfg)?;
    let cache = &cfg.paths.cache;
    let index = CacheIndex::load(cache)?;
    check_cache(&cfg, &index)?;
    let variant = cfg.model.variant;
    let labeler = match &lex {
        Some(l) => Labeler::Lexicon(l, &vocab),
        None => Labeler::Chars(&vocab),
    };
    let train = load_samples(cache, &index, Split::Train, variant, Some(labeler))?;
    let val = load_samples(cache, &index, Split::Val, variant, Some(labeler))?;

    let run = &cfg.paths.run;
    std::fs::create_dir_all(run).map_err(|e| PipelineError::io(run, e))?;
    let mut model: Model<R> = build(&cfg.model, cfg.seed)?;
    let last = run.join(LAST_CHECKPOINT);
    let resume_state = if resume {
        if !last.is_file() {
            return Err(PipelineError::Missing(format!("{} to resume from", last.display())));
        }
        let ck = load_checkpoint(&last)?;
        if ck.header.model != cfg.model {
            return Err(PipelineError::Config("checkpoint model differs from config".into()));
        }
        model = ck.model()?;
        Some(ck.resume_state(&model)?)
    } else {
        None
    };
    let p = run.join(RESOLVED_CONFIG);
    std::fs::write(&p, cfg.to_json()).map_err(|e| PipelineError::io(&p, e))?;

    let log_path = run.join(LOG_FILE);
    let timing_path = run.join(TIMING_FILE);
    let mut log = open_log(&log_path, resume)?;
    let mut timing = open_log(&timing_path, resume)?;
    let mut write_err = None;
    let out = fit(&mut model, &train, &val, &cfg.train, resume_state, |l, _| {
        let r = writeln!(log, "{}", log_line(l))
            .and_then(|_| writeln!(timing, "{{\"epoch\":{},\"seconds\":{}}}", l.epoch, l.seconds));
        if let Err(e) = r {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(PipelineError::io(&log_path, e));
    }

    save_checkpoint(
        &last,
        CheckpointInput {
            config: &cfg,
            vocabulary: Some(&vocab),
            model: &model,
            best_epoch: out.best_epoch,
            train: Some((&out.state, &out.best)),
        },
    )?;
    let best_model = model.with_params(out.best.clone());
    save_checkpoint(
        &run.join(BEST_CHECKPOINT),
        CheckpointInput {
            config: &cfg,
            vocabulary: Some(&vocab),
            model: &best_model,
            best_epoch: out.best_epoch,
            train: None,
        },
    )?;
    let best_val_loss = out
        .state
        .log
        .iter()
        .find(|l| l.epoch == out.best_epoch)
        .map_or(f64::NAN, |l| l.val_loss);
    Ok(TrainSummary {
        epochs: out.state.epoch,
        best_epoch: out.best_epoch,
        best_val_loss,
        stopped_early: out.stopped_early,
        run_dir: run.clone(),
    })
}
