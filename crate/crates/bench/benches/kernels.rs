use std::f64::consts::PI;
use std::hint::black_box;

use avinpaint::dsp::{griffin_lim, stft, AudioFrontend, FeatureParams, Waveform};
use avinpaint::losses::ctc_loss;
use avinpaint::models::{build, Batch, LossRegion, Model, ModelConfig, Variant};
use avinpaint::neural::Tape;
use criterion::{criterion_group, criterion_main, Criterion};

fn clip() -> Waveform {
    let samples = (0..24000)
        .map(|n| {
            let t = n as f64 / 8000.0;
            0.4 * (2.0 * PI * 220.0 * t).sin() + 0.2 * (2.0 * PI * 660.0 * t).sin() + 0.1 * (2.0 * PI * 1500.0 * t).sin()
        })
        .collect();
    Waveform::new(samples, 8000).unwrap()
}

fn dsp(c: &mut Criterion) {
    let fe = AudioFrontend::new(FeatureParams::default()).unwrap();
    let w = clip();
    let params = fe.params().stft;
    c.bench_function("stft 3s", |b| b.iter(|| stft(black_box(&w), &params).unwrap()));
    c.bench_function("log-mel analysis 3s", |b| b.iter(|| fe.analyze(black_box(&w)).unwrap()));
    let mag = stft(&w, &params).unwrap().magnitude();
    let mut g = c.benchmark_group("griffin-lim");
    g.sample_size(10);
    g.bench_function("300 iterations", |b| b.iter(|| griffin_lim(black_box(&mag), 300, &params).unwrap()));
    g.finish();
}

fn ctc(c: &mut Criterion) {
    let (frames, classes) = (149, 9);
    let logits: Vec<f64> = (0..frames * classes).map(|i| ((i * 7919) % 101) as f64 / 25.0).collect();
    let target: Vec<usize> = (0..15).map(|i| (i * 3) % 8).collect();
    c.bench_function("ctc 149x9, 15 labels", |b| {
        b.iter(|| ctc_loss(black_box(&logits), frames, classes, &target).unwrap())
    });
}

fn training_step(c: &mut Criterion) {
    let cfg = ModelConfig {
        variant: Variant::AvMtlS2s,
        hidden: 64,
        encoder_layers: 2,
        decoder_layers: 2,
        fc_dim: 16,
        vocab: 8,
        ..ModelConfig::default()
    };
    let model: Model<f32> = build(&cfg, 0).unwrap();
    let (bs, steps) = (8, 149);
    let rows = bs * steps;
    let wave = |k: usize| ((k * 2654435761) % 1000) as f32 / 1000.0 - 0.5;
    let batch = Batch {
        batch: bs,
        steps,
        spec_dim: cfg.spec_dim,
        visual_dim: cfg.visual_dim,
        masked: (0..rows * cfg.spec_dim).map(wave).collect(),
        target: (0..rows * cfg.spec_dim).map(|k| wave(k + 1)).collect(),
        visual: Some((0..rows * cfg.visual_dim).map(|k| wave(k + 2)).collect()),
        intact: (0..rows).map(|r| if (r / bs) % 5 == 0 { 0.0 } else { 1.0 }).collect(),
        labels: Some((0..bs).map(|i| (0..15).map(|j| (i + j) % 8).collect()).collect()),
    };
    let mut g = c.benchmark_group("av-mtl-s2s hidden 64");
    g.sample_size(10);
    g.bench_function("forward+backward batch 8", |b| {
        b.iter(|| {
            let mut tape = Tape::new(bs);
            let fwd = model.forward(&mut tape, &batch).unwrap();
            let loss = model.loss(&mut tape, &fwd, &batch, LossRegion::Masked).unwrap();
            tape.backward(loss.total).unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, dsp, ctc, training_step);
criterion_main!(benches);
