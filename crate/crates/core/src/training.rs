//! Mini-batch Adam training with plateau LR decay and early stopping.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{Batch, LossRegion, Model, ModelError, Sample};
use crate::neural::{backward, Gradients, ParamStore, Real, Tape};
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite gradient for {param}")]
    NonFiniteGradient { param: String },
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("empty {0} set")]
    EmptyData(&'static str),
    #[error("optimizer state does not match the parameters")]
    StateMismatch,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Neural(#[from] crate::neural::NeuralError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub early_stop_patience: usize,
    /// Smallest decrease that counts as an improvement.
    pub min_delta: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Rescale gradients whose global norm exceeds this.
    pub clip_norm: Option<f64>,
    pub loss_region: LossRegion,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            batch: 32,
            plateau_patience: 5,
            plateau_factor: 0.1,
            early_stop_patience: 10,
            min_delta: 1e-6,
            max_epochs: 100,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            clip_norm: None,
            loss_region: LossRegion::Full,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if self.batch == 0 {
            return bad("batch must be at least 1");
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return bad("patience values must be at least 1");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau_factor must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.epsilon > 0.0)
        {
            return bad("invalid Adam constants");
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }
}

/// First and second moment estimates for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<R> {
    pub m: Vec<Vec<R>>,
    pub v: Vec<Vec<R>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl<R: Real> AdamState<R> {
    pub fn new<S: Real>(params: &ParamStore<S>, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Vec<R>> = params
            .iter()
            .map(|(_, p)| vec![R::zero(); p.value.len()])
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            beta1,
            beta2,
            epsilon,
        }
    }
}

/// One bias-corrected Adam update. Parameters without a gradient (frozen)
/// are left alone; non-finite gradients abort before anything changes.
pub fn adam_step<R: Real>(
    params: &mut ParamStore<R>,
    grads: &Gradients<R>,
    state: &mut AdamState<R>,
    lr: f64,
) -> Result<(), TrainError> {
    if state.m.len() != params.len() {
        return Err(TrainError::StateMismatch);
    }
    if let Some(id) = grads.first_non_finite() {
        return Err(TrainError::NonFiniteGradient {
            param: params.get(id).name(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (rb1, rb2, eps) = (R::of(b1), R::of(b2), R::of(state.epsilon));
    let (one, rlr, rc1, rc2) = (R::one(), R::of(lr), R::of(c1), R::of(c2));
    for (id, g) in grads.iter() {
        let p = params.get_mut(id);
        if !p.trainable {
            continue;
        }
        let (m, v) = (&mut state.m[id.0], &mut state.v[id.0]);
        for (((theta, &gi), mi), vi) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mi = rb1 * *mi + (one - rb1) * gi;
            *vi = rb2 * *vi + (one - rb2) * gi * gi;
            let m_hat = *mi / rc1;
            let v_hat = *vi / rc2;
            *theta -= rlr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Multiplies the learning rate by `factor` once the monitored loss has gone
/// `patience` epochs without a new best; the counter restarts after a drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub patience: usize,
    pub factor: f64,
    pub min_delta: f64,
    #[serde(with = "crate::inf_repr")]
    pub best: f64,
    pub wait: usize,
}

impl PlateauScheduler {
    pub fn new(patience: usize, factor: f64, min_delta: f64) -> Self {
        Self {
            patience,
            factor,
            min_delta,
            best: f64::INFINITY,
            wait: 0,
        }
    }

    /// Records one epoch's loss and returns the learning rate for the next.
    pub fn step(&mut self, loss: f64, lr: f64) -> f64 {
        if loss < self.best - self.min_delta {
            self.best = loss;
            self.wait = 0;
            return lr;
        }
        self.wait += 1;
        if self.wait >= self.patience {
            self.wait = 0;
            return lr * self.factor;
        }
        lr
    }
}

/// Learning rate after each epoch of `history`, starting from `lr`.
pub fn reduce_lr_on_plateau(
    history: &[f64],
    lr: f64,
    patience: usize,
    factor: f64,
    min_delta: f64,
) -> Vec<f64> {
    let mut s = PlateauScheduler::new(patience, factor, min_delta);
    let mut cur = lr;
    history
        .iter()
        .map(|&l| {
            cur = s.step(l, cur);
            cur
        })
        .collect()
}

/// Stops once `patience` consecutive epochs bring no new best.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_delta: f64,
    #[serde(with = "crate::inf_repr")]
    pub best: f64,
    pub best_epoch: usize,
    pub wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: f64::INFINITY,
            best_epoch: 0,
            wait: 0,
        }
    }

    /// Records epoch `epoch` and reports `(improved, stop)`.
    pub fn step(&mut self, epoch: usize, loss: f64) -> (bool, bool) {
        if loss < self.best - self.min_delta {
            self.best = loss;
            self.best_epoch = epoch;
            self.wait = 0;
            return (true, false);
        }
        self.wait += 1;
        (false, self.wait >= self.patience)
    }
}

/// Epoch at which training stops for `val_history`, if it does.
pub fn early_stopping(val_history: &[f64], patience: usize, min_delta: f64) -> Option<usize> {
    let mut s = EarlyStopping::new(patience, min_delta);
    val_history
        .iter()
        .enumerate()
        .find(|(i, &l)| s.step(i + 1, l).1)
        .map(|(i, _)| i + 1)
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub seconds: f64,
    pub train_mse: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub train_ctc: Option<f64>,
    pub val_mse: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub val_ctc: Option<f64>,
}

/// Everything needed to continue an interrupted run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<R> {
    pub epoch: usize,
    pub lr: f64,
    pub adam: AdamState<R>,
    pub plateau: PlateauScheduler,
    pub early: EarlyStopping,
    pub log: Vec<EpochLog>,
}

impl<R: Real> TrainState<R> {
    pub fn fresh(params: &ParamStore<R>, cfg: &TrainConfig) -> Self {
        Self {
            epoch: 0,
            lr: cfg.lr,
            adam: AdamState::new(params, cfg.beta1, cfg.beta2, cfg.epsilon),
            plateau: PlateauScheduler::new(cfg.plateau_patience, cfg.plateau_factor, cfg.min_delta),
            early: EarlyStopping::new(cfg.early_stop_patience, cfg.min_delta),
            log: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome<R> {
    /// Parameters from the epoch with the lowest validation loss.
    pub best: ParamStore<R>,
    pub best_epoch: usize,
    pub state: TrainState<R>,
    pub stopped_early: bool,
}

/// Mean losses over a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalLoss {
    pub loss: f64,
    pub mse: f64,
    pub ctc: Option<f64>,
}

/// Loss of `model` on `data`, in batches of `batch`, weighted by batch size.
pub fn evaluate_loss<R: Real>(
    model: &Model<R>,
    data: &[Sample],
    batch: usize,
    region: LossRegion,
) -> Result<EvalLoss, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyData("evaluation"));
    }
    let (mut loss, mut mse, mut ctc) = (0.0, 0.0, None::<f64>);
    for chunk in data.chunks(batch.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let b = Batch::<R>::from_samples(&refs)?;
        let mut tape = Tape::new(b.batch);
        let f = model.forward(&mut tape, &b)?;
        let parts = model.loss(&mut tape, &f, &b, region)?;
        let w = chunk.len() as f64 / data.len() as f64;
        loss += tape.value(parts.total).data()[0].f64() * w;
        mse += parts.mse * w;
        if let Some(c) = parts.ctc {
            *ctc.get_or_insert(0.0) += c * w;
        }
    }
    Ok(EvalLoss { loss, mse, ctc })
}

/// Trains `model` in place (its parameters end at the last epoch) and
/// returns the best-validation parameters. `on_epoch` sees each log line as
/// it is produced.
pub fn fit<R: Real>(
    model: &mut Model<R>,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
    resume: Option<(TrainState<R>, ParamStore<R>)>,
    mut on_epoch: impl FnMut(&EpochLog, &Model<R>),
) -> Result<FitOutcome<R>, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyData("training"));
    }
    if val.is_empty() {
        return Err(TrainError::EmptyData("validation"));
    }
    let (mut state, mut best) = match resume {
        Some((s, b)) => {
            if s.adam.m.len() != model.params.len() {
                return Err(TrainError::StateMismatch);
            }
            (s, b)
        }
        None => (TrainState::fresh(&model.params, cfg), model.params.clone()),
    };
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train.len()).collect();
    while state.epoch < cfg.max_epochs {
        let epoch = state.epoch + 1;
        let started = Instant::now();
        order.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &format!("shuffle/{epoch}")));
        order.shuffle(&mut rng);

        let (mut loss_sum, mut mse_sum, mut ctc_sum) = (0.0, 0.0, None::<f64>);
        for (bi, idx) in order.chunks(cfg.batch).enumerate() {
            let refs: Vec<&Sample> = idx.iter().map(|&i| &train[i]).collect();
            let batch = Batch::<R>::from_samples(&refs)?;
            let mut tape = Tape::new(batch.batch);
            let f = model.forward(&mut tape, &batch)?;
            let parts = model.loss(&mut tape, &f, &batch, cfg.loss_region)?;
            let value = tape.value(parts.total).data()[0].f64();
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: bi });
            }
            let mut grads = backward(&tape, parts.total)?;
            drop(tape);
            if let Some(max) = cfg.clip_norm {
                let norm = grads.global_norm();
                if norm > max {
                    grads.scale(R::of(max / norm));
                }
            }
            adam_step(&mut model.params, &grads, &mut state.adam, state.lr)?;
            let w = refs.len() as f64 / train.len() as f64;
            loss_sum += value * w;
            mse_sum += parts.mse * w;
            if let Some(c) = parts.ctc {
                *ctc_sum.get_or_insert(0.0) += c * w;
            }
        }

        let v = evaluate_loss(model, val, cfg.batch, cfg.loss_region)?;
        let lr_used = state.lr;
        state.lr = state.plateau.step(loss_sum, state.lr);
        let (improved, stop) = state.early.step(epoch, v.loss);
        if improved {
            best = model.params.clone();
        }
        let line = EpochLog {
            epoch,
            train_loss: loss_sum,
            val_loss: v.loss,
            lr: lr_used,
            seconds: started.elapsed().as_secs_f64(),
            train_mse: mse_sum,
            train_ctc: ctc_sum,
            val_mse: v.mse,
            val_ctc: v.ctc,
        };
        log::info!(
            "epoch {epoch}: train {:.6} val {:.6} lr {:.2e}",
            line.train_loss,
            line.val_loss,
            line.lr
        );
        state.log.push(line);
        state.epoch = epoch;
        on_epoch(state.log.last().expect("just pushed"), model);
        if stop {
            stopped_early = true;
            break;
        }
    }
    Ok(FitOutcome {
        best,
        best_epoch: state.early.best_epoch,
        state,
        stopped_early,
    })
}
