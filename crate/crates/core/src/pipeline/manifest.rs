use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub utterance_id: String,
    /// Relative paths resolve against the manifest's directory.
    pub wav_path: PathBuf,
    pub landmarks_path: PathBuf,
    pub transcript: String,
    pub speaker_id: String,
    pub split: Split,
}

/// Dataset index. Serialized as `{"entries": [...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    root: PathBuf,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>, root: impl Into<PathBuf>) -> Self {
        Self {
            entries,
            root: root.into(),
        }
    }

    /// Parses and validates: unique ids, existing files, speaker-disjoint splits.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut m: Manifest = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Format(format!("{}: {e}", path.display())))?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| PipelineError::io(path, e))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut ids = HashSet::new();
        for e in &self.entries {
            if !ids.insert(&e.utterance_id) {
                return Err(PipelineError::Manifest(format!(
                    "duplicate utterance id {}",
                    e.utterance_id
                )));
            }
            if e.utterance_id.is_empty() || e.utterance_id.contains(['/', '\\']) {
                return Err(PipelineError::Manifest(format!(
                    "utterance id {:?} is not a plain file stem",
                    e.utterance_id
                )));
            }
            for p in [&e.wav_path, &e.landmarks_path] {
                let full = self.resolve(p);
                if !full.is_file() {
                    return Err(PipelineError::Manifest(format!(
                        "{}: missing file {}",
                        e.utterance_id,
                        full.display()
                    )));
                }
            }
        }
        let mut speakers: BTreeMap<&str, BTreeSet<Split>> = BTreeMap::new();
        for e in &self.entries {
            speakers.entry(&e.speaker_id).or_default().insert(e.split);
        }
        if let Some((spk, splits)) = speakers.iter().find(|(_, s)| s.len() > 1) {
            return Err(PipelineError::Manifest(format!(
                "speaker {spk} appears in several splits: {:?}",
                splits.iter().map(|s| s.name()).collect::<Vec<_>>()
            )));
        }
        Ok(())
    }

    pub fn split(&self, s: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == s)
    }
}
