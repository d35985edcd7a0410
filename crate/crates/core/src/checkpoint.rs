//! Model files: binary parameters plus a JSON sidecar with everything
//! needed to rebuild inputs (dimensions, vocabulary, feature settings).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::context::FeatureConfig;
use crate::dataset::Vocabulary;
use crate::error::{Error, IntegrityKind, Result};
use crate::params::ParamStore;
use crate::speaker::{Speaker, SpeakerConfig};
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub speaker: SpeakerConfig,
    pub vocab: Vec<String>,
    /// Hex SHA-256 of the newline-joined vocabulary.
    pub vocab_hash: String,
    pub min_count: usize,
    pub features: FeatureConfig,
    #[serde(default)]
    pub annotations: Option<String>,
    #[serde(default)]
    pub feature_file: Option<String>,
    #[serde(default)]
    pub split_file: Option<String>,
    #[serde(default)]
    pub train_split: Option<String>,
    /// Scenes held out for checkpoint selection; `--split val` resolves here.
    #[serde(default)]
    pub val_scenes: Vec<u64>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub best_epoch: Option<usize>,
}

impl CheckpointMeta {
    pub fn new(speaker: &Speaker, vocab: &Vocabulary, min_count: usize, features: &FeatureConfig) -> Self {
        CheckpointMeta {
            speaker: speaker.config.clone(),
            vocab: vocab.tokens().to_vec(),
            vocab_hash: vocab.hash(),
            min_count,
            features: features.clone(),
            annotations: None,
            feature_file: None,
            split_file: None,
            train_split: None,
            val_scenes: Vec::new(),
            train: None,
            best_epoch: None,
        }
    }
}

/// `model.ckpt` → `model.json`
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("json")
}

pub fn save_model(path: impl AsRef<Path>, speaker: &Speaker, meta: &CheckpointMeta) -> Result<()> {
    let path = path.as_ref();
    speaker.params.save(path)?;
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(meta).expect("metadata serializes");
    std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(Speaker, Vocabulary, CheckpointMeta)> {
    let path = path.as_ref();
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text)
        .map_err(|e| Error::integrity(IntegrityKind::Checkpoint, format!("{}: {e}", side.display())))?;

    let vocab = Vocabulary::from_tokens(meta.vocab.iter().cloned());
    if vocab.tokens() != meta.vocab.as_slice() || vocab.hash() != meta.vocab_hash {
        return Err(Error::integrity(
            IntegrityKind::Vocabulary,
            format!("vocabulary in {} does not match its hash", side.display()),
        ));
    }
    if vocab.len() != meta.speaker.vocab_size {
        return Err(Error::integrity(
            IntegrityKind::Vocabulary,
            format!("vocabulary has {} tokens, model expects {}", vocab.len(), meta.speaker.vocab_size),
        ));
    }
    let params = ParamStore::load(path)?;
    let speaker = Speaker::from_params(meta.speaker.clone(), params)
        .map_err(|e| Error::integrity(IntegrityKind::Checkpoint, e.to_string()))?;
    Ok((speaker, vocab, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Speaker, Vocabulary) {
        let vocab = Vocabulary::from_tokens(["ball", "red", "the"]);
        let cfg = SpeakerConfig {
            word_dim: 2,
            visual_dim: 2,
            hidden_dim: 3,
            vocab_size: vocab.len(),
            feature_dim: 4,
            hdif_epsilon: 1e-8,
        };
        (Speaker::new(cfg, 1).unwrap(), vocab)
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (s, v) = setup();
        let meta = CheckpointMeta::new(&s, &v, 1, &FeatureConfig::default());
        let p = dir.path().join("model.ckpt");
        save_model(&p, &s, &meta).unwrap();
        let (s2, v2, m2) = load_model(&p).unwrap();
        assert_eq!(s2, s);
        assert_eq!(v2, v);
        assert_eq!(m2, meta);
    }

    #[test]
    fn tampered_vocabulary_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (s, v) = setup();
        let mut meta = CheckpointMeta::new(&s, &v, 1, &FeatureConfig::default());
        meta.vocab[4] = "blue".into();
        let p = dir.path().join("model.ckpt");
        save_model(&p, &s, &meta).unwrap();
        let err = load_model(&p).unwrap_err();
        assert_eq!(err.category(), "vocabulary-integrity");
    }

    #[test]
    fn shape_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (s, v) = setup();
        let mut meta = CheckpointMeta::new(&s, &v, 1, &FeatureConfig::default());
        meta.speaker.hidden_dim = 5;
        let p = dir.path().join("model.ckpt");
        save_model(&p, &s, &meta).unwrap();
        assert_eq!(load_model(&p).unwrap_err().category(), "checkpoint-integrity");
    }
}
