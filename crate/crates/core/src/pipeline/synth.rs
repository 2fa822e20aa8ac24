//! Synthetic audio-visual corpus: syllable sequences whose identity is
//! audible in the spectrum and visible in the mouth opening.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::manifest::{Manifest, ManifestEntry, Split};
use super::PipelineError;
use crate::dsp::{write_wav, Waveform};
use crate::losses::Lexicon;
use crate::seed::derive_seed;
use crate::visual::{write_landmarks_csv, LandmarkSequence, DEFAULT_FPS, FULL_LANDMARKS};

pub const SYLLABLES: [&str; 8] = ["ba", "de", "gi", "ko", "mu", "na", "pe", "ti"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_val: Option<usize>,
    pub n_test: usize,
    pub seed: u64,
    pub sample_rate: u32,
    pub syllables_per_clip: usize,
    pub syllable_ms: f64,
    pub train_speakers: usize,
    pub val_speakers: usize,
    pub test_speakers: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_train: 200,
            n_val: None,
            n_test: 50,
            seed: 0,
            sample_rate: 8000,
            syllables_per_clip: 15,
            syllable_ms: 200.0,
            train_speakers: 4,
            val_speakers: 1,
            test_speakers: 2,
        }
    }
}

impl SynthConfig {
    pub fn n_val(&self) -> usize {
        self.n_val.unwrap_or((self.n_train / 10).max(1))
    }
}

/// Acoustic and articulatory description of one inventory entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Syllable {
    pub f0: f64,
    pub f1: f64,
    pub f2: f64,
    /// Peak jaw opening in pixels.
    pub opening: f64,
    /// Peak lip-width change in pixels.
    pub spread: f64,
}

pub fn syllable(k: usize) -> Syllable {
    let kf = k as f64;
    Syllable {
        f0: 100.0 + 22.0 * kf,
        f1: 300.0 + 90.0 * ((k * 3) % 8) as f64,
        f2: 2600.0 - 170.0 * kf,
        opening: 1.5 + 1.2 * kf,
        spread: (((k * 5) % 8) as f64 - 3.5) * 0.8,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Speaker {
    dx: f64,
    dy: f64,
    gain: f64,
    pitch: f64,
}

fn speaker(seed: u64, name: &str) -> Speaker {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("speaker/{name}")));
    Speaker {
        dx: rng.random_range(-20.0..20.0),
        dy: rng.random_range(-20.0..20.0),
        gain: rng.random_range(0.3..0.9),
        pitch: rng.random_range(0.97..1.03),
    }
}

/// Audio for a syllable sequence.
fn render_audio(seq: &[usize], spk: &Speaker, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let rate = cfg.sample_rate as f64;
    let per = (cfg.syllable_ms / 1000.0 * rate).round() as usize;
    let mut out = Vec::with_capacity(per * seq.len());
    for &k in seq {
        let s = syllable(k);
        let f0 = s.f0 * spk.pitch;
        let bw = 150.0;
        let mut partials = Vec::new();
        let mut h = 1.0;
        while h * f0 < 0.475 * rate {
            let f = h * f0;
            let amp = (-((f - s.f1) / bw).powi(2)).exp() + 0.6 * (-((f - s.f2) / bw).powi(2)).exp() + 0.02;
            partials.push((f, amp, rng.random_range(0.0..2.0 * PI)));
            h += 1.0;
        }
        let norm: f64 = partials.iter().map(|p| p.1).sum();
        for n in 0..per {
            let tau = n as f64 / per as f64;
            let env = (PI * tau).sin().powf(0.7);
            let t = n as f64 / rate;
            let v: f64 = partials.iter().map(|&(f, a, ph)| a * (2.0 * PI * f * t + ph).sin()).sum();
            let noise: f64 = StandardNormal.sample(rng);
            out.push(spk.gain * env * v / norm + 0.002 * noise);
        }
    }
    out
}

/// Neutral 68-point face, mouth closed, centred near (160, 120).
fn base_face() -> Vec<[f64; 2]> {
    let mut p = Vec::with_capacity(FULL_LANDMARKS);
    for i in 0..17 {
        let a = PI * (i as f64 / 16.0);
        p.push([160.0 - 60.0 * a.cos(), 110.0 + 70.0 * a.sin()]);
    }
    for i in 0..10 {
        let x = 115.0 + 10.0 * i as f64 + if i >= 5 { 10.0 } else { 0.0 };
        p.push([x, 85.0 - 4.0 * ((i % 5) as f64 - 2.0).abs().mul_add(-1.0, 2.0)]);
    }
    for i in 0..9 {
        let (x, y) = if i < 4 { (160.0, 95.0 + 8.0 * i as f64) } else { (148.0 + 6.0 * (i - 4) as f64, 128.0) };
        p.push([x, y]);
    }
    for eye in 0..2 {
        let cx = if eye == 0 { 135.0 } else { 185.0 };
        for i in 0..6 {
            let a = PI * i as f64 / 3.0;
            p.push([cx - 10.0 * a.cos(), 98.0 - 4.0 * a.sin()]);
        }
    }
    // mouth slots 48..67 are filled per frame
    p.extend(std::iter::repeat_n([0.0, 0.0], 20));
    p
}

fn mouth(p: &mut [[f64; 2]], opening: f64, spread: f64) {
    let (cx, cy) = (160.0, 150.0);
    let rx = 22.0 + spread;
    // outer lip: 48 left corner, 49-53 upper, 54 right corner, 55-59 lower
    for i in 0..12 {
        let a = PI * i as f64 / 6.0;
        let x = cx - rx * a.cos();
        let y = if i <= 6 { cy - 6.0 * a.sin() - 0.2 * opening * a.sin() } else { cy - (6.0 + opening) * a.sin() };
        p[48 + i] = [x, y];
    }
    // inner lip: 60 left corner, 61-63 upper, 64 right corner, 65-67 lower
    for i in 0..8 {
        let a = PI * i as f64 / 4.0;
        let x = cx - (rx - 6.0) * a.cos();
        let y = if i <= 4 { cy - (1.0 + 0.1 * opening) * a.sin() } else { cy - (1.0 + 0.9 * opening) * a.sin() };
        p[60 + i] = [x, y];
    }
}

/// Landmark track at 25 fps covering the clip.
fn render_landmarks(seq: &[usize], spk: &Speaker, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<LandmarkSequence, PipelineError> {
    let duration = seq.len() as f64 * cfg.syllable_ms / 1000.0;
    let frames = (duration * DEFAULT_FPS).round() as usize;
    let base = base_face();
    let mut coords = Vec::with_capacity(frames * FULL_LANDMARKS);
    for f in 0..frames {
        let t = f as f64 / DEFAULT_FPS;
        let pos = t * 1000.0 / cfg.syllable_ms;
        let j = (pos.floor() as usize).min(seq.len() - 1);
        let tau = pos - j as f64;
        let s = syllable(seq[j]);
        let shape = (PI * tau).sin();
        let mut p = base.clone();
        mouth(&mut p, s.opening * shape, s.spread * shape);
        for c in p {
            let jx: f64 = StandardNormal.sample(rng);
            let jy: f64 = StandardNormal.sample(rng);
            coords.push([c[0] + spk.dx + 0.05 * jx, c[1] + spk.dy + 0.05 * jy]);
        }
    }
    Ok(LandmarkSequence::new(FULL_LANDMARKS, DEFAULT_FPS, coords)?)
}

/// Lexicon mapping each syllable to itself.
pub fn synth_lexicon() -> Lexicon {
    Lexicon::from_map(SYLLABLES.iter().map(|s| (s.to_string(), vec![s.to_string()])).collect::<BTreeMap<_, _>>())
}

/// Syllable indices of one utterance.
pub fn utterance_syllables(seed: u64, id: &str, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("syllables/{id}")));
    (0..n).map(|_| rng.random_range(0..SYLLABLES.len())).collect()
}

/// Writes `wav/`, `landmarks/`, `lexicon.json` and `manifest.json` under
/// `out` and returns the manifest.
pub fn cmd_synth(cfg: &SynthConfig, out: &Path) -> Result<Manifest, PipelineError> {
    if cfg.n_train == 0 || cfg.n_test == 0 || cfg.syllables_per_clip == 0 {
        return Err(PipelineError::Config("synth needs n_train, n_test and syllables_per_clip >= 1".into()));
    }
    if cfg.train_speakers == 0 || cfg.val_speakers == 0 || cfg.test_speakers == 0 {
        return Err(PipelineError::Config("every split needs at least one speaker".into()));
    }
    for d in ["wav", "landmarks"] {
        let p = out.join(d);
        std::fs::create_dir_all(&p).map_err(|e| PipelineError::io(&p, e))?;
    }
    let mut entries = Vec::new();
    let mut spk_base = 0;
    for (split, n, n_spk) in [
        (Split::Train, cfg.n_train, cfg.train_speakers),
        (Split::Val, cfg.n_val(), cfg.val_speakers),
        (Split::Test, cfg.n_test, cfg.test_speakers),
    ] {
        for i in 0..n {
            let spk_name = format!("spk{:02}", spk_base + i % n_spk + 1);
            let id = format!("{spk_name}_{}_{i:04}", split.name());
            let spk = speaker(cfg.seed, &spk_name);
            let seq = utterance_syllables(cfg.seed, &id, cfg.syllables_per_clip);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &format!("render/{id}")));
            let audio = render_audio(&seq, &spk, cfg, &mut rng);
            let lm = render_landmarks(&seq, &spk, cfg, &mut rng)?;
            let wav_rel = PathBuf::from("wav").join(format!("{id}.wav"));
            let lm_rel = PathBuf::from("landmarks").join(format!("{id}.csv"));
            write_wav(out.join(&wav_rel), &Waveform::new(audio, cfg.sample_rate)?)?;
            write_landmarks_csv(&out.join(&lm_rel), &lm)?;
            entries.push(ManifestEntry {
                utterance_id: id,
                wav_path: wav_rel,
                landmarks_path: lm_rel,
                transcript: seq.iter().map(|&k| SYLLABLES[k]).collect::<Vec<_>>().join(" "),
                speaker_id: spk_name,
                split,
            });
        }
        spk_base += n_spk;
    }
    let lex_path = out.join("lexicon.json");
    let lex = serde_json::to_string_pretty(&synth_lexicon()).expect("lexicon serializes");
    std::fs::write(&lex_path, lex + "\n").map_err(|e| PipelineError::io(&lex_path, e))?;
    let manifest = Manifest::new(entries, out);
    manifest.save(&out.join("manifest.json"))?;
    Ok(manifest)
}
