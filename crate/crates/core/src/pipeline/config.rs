use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::corruption::MaskSpec;
use crate::dsp::{AudioFrontend, FeatureParams};
use crate::losses::{LabelMode, Lexicon, Vocabulary};
use crate::models::ModelConfig;
use crate::training::TrainConfig;
use crate::visual::{Interpolation, LandmarkSet, FULL_LANDMARKS, MOUTH_LANDMARKS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(format!("unknown precision {other:?}, expected f32 or f64")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisualConfig {
    pub landmarks: LandmarkSet,
    pub interpolation: Interpolation,
}

impl VisualConfig {
    pub fn feature_dim(&self) -> usize {
        match self.landmarks {
            LandmarkSet::Mouth => 2 * MOUTH_LANDMARKS,
            LandmarkSet::Full => 2 * FULL_LANDMARKS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelConfig {
    pub mode: LabelMode,
    /// Word-to-phone JSON; the bundled Grid lexicon when absent. Its phone
    /// inventory becomes the CTC vocabulary, except that the bundled
    /// lexicon uses the full 39-phone ARPAbet set.
    pub lexicon: Option<PathBuf>,
}

impl LabelConfig {
    pub fn resolve(&self) -> Result<(Option<Lexicon>, Vocabulary), PipelineError> {
        Ok(match (self.mode, &self.lexicon) {
            (LabelMode::Chars, _) => (None, Vocabulary::chars()),
            (LabelMode::Phones, None) => (Some(Lexicon::grid()), Vocabulary::arpabet()),
            (LabelMode::Phones, Some(p)) => {
                let lex = Lexicon::load(p)?;
                let vocab = lex.inventory();
                (Some(lex), vocab)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    /// Feature, mask and normalization cache written by `prepare`/`mask`.
    pub cache: PathBuf,
    /// Checkpoints, logs and the resolved config written by `train`.
    pub run: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            manifest: None,
            cache: PathBuf::from("cache"),
            run: PathBuf::from("run"),
        }
    }
}

/// Everything a run depends on. `seed` drives mask sampling, parameter
/// initialization and batch shuffling; `train.seed` is overwritten by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub precision: Precision,
    pub workers: usize,
    pub dsp: FeatureParams,
    pub visual: VisualConfig,
    pub mask: MaskSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub labels: LabelConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            precision: Precision::F32,
            workers: 1,
            dsp: FeatureParams::default(),
            visual: VisualConfig::default(),
            mask: MaskSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            labels: LabelConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    /// Parses JSON, rejecting unknown keys. Relative paths inside the file
    /// resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let err = |e: serde_json::Error| PipelineError::Config(format!("{}: {e}", path.display()));
        let raw: serde_json::Value = serde_json::from_str(&text).map_err(err)?;
        let train_seed_given = raw.pointer("/train/seed").is_some();
        let mut cfg: RunConfig = serde_json::from_value(raw).map_err(err)?;
        if !train_seed_given {
            cfg.train.seed = cfg.seed;
        }
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(m) = cfg.paths.manifest.as_mut() {
            fix(m);
        }
        fix(&mut cfg.paths.cache);
        fix(&mut cfg.paths.run);
        if let Some(l) = cfg.labels.lexicon.as_mut() {
            fix(l);
        }
        Ok(cfg)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self
    }

    /// Cross-checks the sections against each other.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.train.seed != self.seed {
            return bad(format!(
                "train.seed {} differs from seed {}; set only the top-level seed",
                self.train.seed, self.seed
            ));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        AudioFrontend::new(self.dsp)?;
        self.mask.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.model.spec_dim != self.dsp.n_mels {
            return bad(format!(
                "model.spec_dim {} must equal dsp.n_mels {}",
                self.model.spec_dim, self.dsp.n_mels
            ));
        }
        if self.model.variant.uses_visual() && self.model.visual_dim != self.visual.feature_dim() {
            return bad(format!(
                "model.visual_dim {} must be {} for {:?} landmarks",
                self.model.visual_dim,
                self.visual.feature_dim(),
                self.visual.landmarks
            ));
        }
        if (self.mask.hop_ms - self.dsp.hop_ms()).abs() > 1e-9 {
            return bad(format!(
                "mask.hop_ms {} must equal the STFT hop of {} ms",
                self.mask.hop_ms,
                self.dsp.hop_ms()
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_consistent() {
        RunConfig::default().validate().unwrap();
        assert_eq!(RunConfig::default().model.visual_dim, 40);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = serde_json::from_str::<RunConfig>(r#"{"seed": 1, "modle": {}}"#);
        assert!(e.is_err());
        let e = serde_json::from_str::<RunConfig>(r#"{"model": {"hiden": 3}}"#);
        assert!(e.is_err());
        let ok: RunConfig = serde_json::from_str(r#"{"model": {"hidden": 3}}"#).unwrap();
        assert_eq!(ok.model.hidden, 3);
    }

    #[test]
    fn cross_checks() {
        let mut c = RunConfig::default();
        c.model.spec_dim = 32;
        assert!(matches!(c.validate(), Err(PipelineError::Config(_))));
        let mut c = RunConfig::default();
        c.visual.landmarks = LandmarkSet::Full;
        assert!(c.validate().is_err());
        c.model.visual_dim = 136;
        c.validate().unwrap();
        let mut c = RunConfig::default();
        c.train.seed = 4;
        assert!(c.validate().is_err());
        c = c.with_seed(4);
        c.validate().unwrap();
    }

    #[test]
    fn digest_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig::default().with_seed(1);
        assert_eq!(a.digest(), RunConfig::default().digest());
        assert_ne!(a.digest(), b.digest());
    }
}
