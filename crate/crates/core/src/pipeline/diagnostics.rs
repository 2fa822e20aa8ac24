//! Finite-difference gradient checks over every differentiable building
//! block, run by the `gradcheck` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::PipelineError;
use crate::corruption::{apply_mask, Gap, Mask};
use crate::dsp::MelSpectrogram;
use crate::models::{build, Batch, LossRegion, ModelConfig, ModelError, Sample, Variant};
use crate::neural::{
    blstm_forward, dense_forward, grad_check, lstm_forward, Activation, Blstm, Dense, GradCheckReport, Lstm,
    NeuralError, ParamStore, Tape, Tensor,
};
use crate::visual::{FeatureMatrix, MotionFeatures};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
const STEP: f64 = 1e-5;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckCase {
    pub name: String,
    pub report: GradCheckReport,
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn input(tape: &mut Tape<f64>, rows: usize, cols: usize, data: &[f64]) -> crate::neural::Var {
    tape.input(Tensor::matrix(rows, cols, data.to_vec()).expect("shape"))
}

/// Dense (four activations), LSTM, BLSTM, MSE, CTC and the micro AV-MTL-S2S
/// model (input 8, hidden 4, T 6, V 3).
pub fn gradcheck_suite(seed: u64) -> Result<Vec<GradCheckCase>, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();
    let (t, b, d) = (6, 2, 5);
    let x = uniform(&mut rng, t * b * d);
    let target = uniform(&mut rng, t * b * 4);

    for act in [Activation::Linear, Activation::Relu, Activation::Sigmoid, Activation::Tanh, Activation::Softmax] {
        let mut store = ParamStore::new();
        let layer = Dense::new(&mut store, seed, "dense", d, 4, act);
        let report = grad_check(&mut store, STEP, |s| {
            let mut tape = Tape::new(b);
            let xi = input(&mut tape, t * b, d, &x);
            let y = dense_forward(&mut tape, s, xi, &layer)?;
            let l = tape.mse(y, &target, None)?;
            Ok((tape, l))
        })?;
        cases.push(GradCheckCase {
            name: format!("dense/{act:?}").to_lowercase(),
            report,
        });
    }

    for reverse in [false, true] {
        let mut store = ParamStore::new();
        let layer = Lstm::new(&mut store, seed, "lstm", d, 4);
        let report = grad_check(&mut store, STEP, |s| {
            let mut tape = Tape::new(b);
            let xi = input(&mut tape, t * b, d, &x);
            let y = lstm_forward(&mut tape, s, xi, &layer, reverse)?;
            let l = tape.mse(y, &target, None)?;
            Ok((tape, l))
        })?;
        cases.push(GradCheckCase {
            name: if reverse { "lstm/reverse" } else { "lstm/forward" }.into(),
            report,
        });
    }

    let target8 = uniform(&mut rng, t * b * 6);
    let mut store = ParamStore::new();
    let layer = Blstm::new(&mut store, seed, "blstm", d, 3);
    let report = grad_check(&mut store, STEP, |s| {
        let mut tape = Tape::new(b);
        let xi = input(&mut tape, t * b, d, &x);
        let y = blstm_forward(&mut tape, s, xi, &layer.fwd, &layer.bwd)?;
        let l = tape.mse(y, &target8, None)?;
        Ok((tape, l))
    })?;
    cases.push(GradCheckCase {
        name: "blstm".into(),
        report,
    });

    let weights: Vec<f64> = (0..t * b).map(|r| if r % 3 == 0 { 0.0 } else { 1.0 }).collect();
    let mut store = ParamStore::new();
    let layer = Dense::new(&mut store, seed, "mse", d, 4, Activation::Sigmoid);
    let report = grad_check(&mut store, STEP, |s| {
        let mut tape = Tape::new(b);
        let xi = input(&mut tape, t * b, d, &x);
        let y = dense_forward(&mut tape, s, xi, &layer)?;
        let l = tape.mse(y, &target, Some(&weights))?;
        Ok((tape, l))
    })?;
    cases.push(GradCheckCase {
        name: "mse/row-weighted".into(),
        report,
    });

    let labels = vec![vec![0, 1, 1], vec![2]];
    let mut store = ParamStore::new();
    let layer = Dense::new(&mut store, seed, "ctc", d, 4, Activation::Linear);
    let report = grad_check(&mut store, STEP, |s| {
        let mut tape = Tape::new(b);
        let xi = input(&mut tape, t * b, d, &x);
        let y = dense_forward(&mut tape, s, xi, &layer)?;
        let (l, _) = tape.ctc(y, &labels)?;
        Ok((tape, l))
    })?;
    cases.push(GradCheckCase {
        name: "ctc".into(),
        report,
    });

    cases.push(GradCheckCase {
        name: "model/AV-MTL-S2S".into(),
        report: micro_model_check(seed, &mut rng)?,
    });
    Ok(cases)
}

fn micro_model_check(seed: u64, rng: &mut ChaCha8Rng) -> Result<GradCheckReport, PipelineError> {
    let (steps, dim) = (6, 8);
    let cfg = ModelConfig {
        variant: Variant::AvMtlS2s,
        spec_dim: dim,
        visual_dim: dim,
        hidden: 4,
        encoder_layers: 3,
        decoder_layers: 3,
        fc_dim: 8,
        lambda: 0.5,
        vocab: 3,
    };
    let mut model = build::<f64>(&cfg, seed)?;
    let clean = MelSpectrogram::new(steps, dim, (0..steps * dim).map(|_| rng.random_range(0.0..1.0)).collect(), None)?;
    let visual = FeatureMatrix::new(steps, dim, (0..steps * dim).map(|_| rng.random_range(0.0..1.0)).collect())?;
    let mask = Mask::new(steps, vec![Gap { start: 2, len: 2 }], 20.0)?;
    let sample = Sample {
        id: "micro".into(),
        masked: apply_mask(&clean, &mask)?,
        clean,
        visual: Some(MotionFeatures::new(visual)?),
        labels: Some(vec![0, 2, 1]),
    };
    let batch = Batch::<f64>::from_samples(&[&sample])?;
    let frozen = model.clone();
    let neural = |e: ModelError| match e {
        ModelError::Neural(n) => n,
        other => NeuralError::Shape(other.to_string()),
    };
    Ok(grad_check(&mut model.params, STEP, |ps| {
        let m = frozen.with_params(ps.clone());
        let mut tape = Tape::new(1);
        let f = m.forward(&mut tape, &batch).map_err(neural)?;
        let l = m.loss(&mut tape, &f, &batch, LossRegion::Full).map_err(neural)?;
        Ok((tape, l.total))
    })?)
}
