#![allow(dead_code)]

use std::f64::consts::PI;

use avinpaint::dsp::Waveform;

pub const STOI_RATE_IN: u32 = 8000;
const STOI_LEN: usize = 16000;

#[derive(serde::Deserialize)]
pub struct StoiReference {
    pub index: usize,
    pub snr_db: f64,
    pub stoi: f64,
}

pub fn stoi_references() -> Vec<StoiReference> {
    serde_json::from_str(include_str!("../fixtures/stoi_reference.json")).unwrap()
}

/// Clean/noisy pair `i` of the recipe in `fixtures/stoi_reference.py`.
pub fn stoi_pair(i: usize) -> (Waveform, Waveform) {
    let rate = STOI_RATE_IN as f64;
    let f0 = 90.0 + 15.0 * i as f64;
    let clean: Vec<f64> = (0..STOI_LEN)
        .map(|t| {
            let t = t as f64;
            let env = (2.0 * PI * 3.0 * t / rate + i as f64).sin().max(0.0).powi(2);
            let v: f64 = (1..=10).map(|h| (2.0 * PI * h as f64 * f0 * t / rate).sin() / h as f64).sum();
            env * v
        })
        .collect();
    let mut state = 1000 + i as u64;
    let noise: Vec<f64> = (0..STOI_LEN)
        .map(|_| {
            let mut s = 0.0;
            for _ in 0..4 {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                s += (state >> 11) as f64 / (1u64 << 53) as f64;
            }
            (s - 2.0) * 3f64.sqrt()
        })
        .collect();
    let p_clean = clean.iter().map(|c| c * c).sum::<f64>() / STOI_LEN as f64;
    let p_noise = noise.iter().map(|n| n * n).sum::<f64>() / STOI_LEN as f64;
    let snr_db = -5.0 + i as f64 * 25.0 / 19.0;
    let sigma = (p_clean / 10f64.powf(snr_db / 10.0) / p_noise).sqrt();
    let degraded = clean.iter().zip(&noise).map(|(c, n)| c + sigma * n).collect();
    (
        Waveform::new(clean, STOI_RATE_IN).unwrap(),
        Waveform::new(degraded, STOI_RATE_IN).unwrap(),
    )
}

use std::path::Path;

use avinpaint::models::Variant;
use avinpaint::pipeline::{cmd_mask, cmd_prepare, cmd_synth, Manifest, RunConfig, SynthConfig};

/// Small synthetic corpus, prepared and masked, with a matching config for
/// a tiny model.
pub fn micro_run(dir: &Path, variant: Variant, seed: u64) -> (Manifest, RunConfig) {
    let data = dir.join("data");
    let manifest = cmd_synth(
        &SynthConfig {
            n_train: 4,
            n_val: Some(2),
            n_test: 3,
            seed,
            ..SynthConfig::default()
        },
        &data,
    )
    .unwrap();
    let mut cfg = RunConfig::default().with_seed(seed);
    cfg.paths.manifest = Some(data.join("manifest.json"));
    cfg.paths.cache = dir.join("cache");
    cfg.paths.run = dir.join("run");
    cfg.labels.lexicon = Some(data.join("lexicon.json"));
    cfg.model.variant = variant;
    cfg.model.hidden = 4;
    cfg.model.encoder_layers = 1;
    cfg.model.decoder_layers = 1;
    cfg.model.fc_dim = 4;
    cfg.train.max_epochs = 3;
    cfg.train.batch = 2;
    cmd_prepare(&manifest, &cfg.dsp, &cfg.visual, &cfg.paths.cache, 1).unwrap();
    cmd_mask(&cfg.paths.cache, seed, &cfg.mask).unwrap();
    (manifest, cfg)
}

/// Reference mask sampler written independently of the library: its own
/// SplitMix64 generator and Box-Muller normals.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    pub fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }
    pub fn below(&mut self, n: usize) -> usize {
        (self.unit() * n as f64) as usize
    }
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// Returns (total, gap lengths, starts).
pub fn reference_draw(rng: &mut SplitMix, t_frames: usize) -> (usize, Vec<usize>, Vec<usize>) {
    let d = (45.0 + 15.0 * rng.normal()).clamp(15.0, 75.0).round() as usize;
    let k = 1 + rng.below((d / 2).min(8));
    let surplus = d - 2 * k;
    let mut cuts: Vec<usize> = (0..k - 1).map(|_| rng.below(surplus + 1)).collect();
    cuts.sort();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(surplus);
    let lens: Vec<usize> = bounds.windows(2).map(|w| w[1] - w[0] + 2).collect();
    // uniform k-subset of {0..slack+k-1} by partial Fisher-Yates
    let slack = t_frames - d - (k - 1);
    let mut pool: Vec<usize> = (0..slack + k).collect();
    for i in 0..k {
        let j = i + rng.below(pool.len() - i);
        pool.swap(i, j);
    }
    let mut picks = pool[..k].to_vec();
    picks.sort();
    let mut starts = Vec::new();
    let mut used = 0;
    for (i, p) in picks.iter().enumerate() {
        starts.push(p - i + used + i);
        used += lens[i];
    }
    (d, lens, starts)
}

pub fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

