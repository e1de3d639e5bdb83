use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AeConfig, AeError, AutoencoderModel, Provenance};
use crate::level::LabelVocabulary;
use crate::nn::{read_weights, write_weights};
use crate::scalar::Scalar;

pub const AE_FORMAT: &str = "patterncraft-autoencoder";
pub const AE_FORMAT_VERSION: u32 = 1;

/// Sidecar JSON written next to the binary weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeManifest {
    pub format: String,
    pub version: u32,
    pub id: String,
    pub config: AeConfig,
    pub vocabulary: Option<LabelVocabulary>,
    pub vocabulary_hash: Option<String>,
    pub provenance: Provenance,
    pub final_loss: Option<f64>,
    pub log: Vec<f64>,
}

/// `model.weights` → `model.json`.
pub fn manifest_path(weights: &Path) -> PathBuf {
    weights.with_extension("json")
}

impl<T: Scalar> AutoencoderModel<T> {
    pub fn manifest(&self) -> AeManifest {
        AeManifest {
            format: AE_FORMAT.into(),
            version: AE_FORMAT_VERSION,
            id: self.id(),
            config: self.config.clone(),
            vocabulary: self.vocabulary.clone(),
            vocabulary_hash: self.vocabulary.as_ref().map(LabelVocabulary::hash),
            provenance: self.provenance.clone(),
            final_loss: self.final_loss(),
            log: self.log.clone(),
        }
    }

    /// Write the weights to `path` and the manifest beside it.
    pub fn save(&self, path: &Path) -> Result<(), AeError> {
        let file = fs::File::create(path)?;
        write_weights(file, &self.spec_hash(), &self.params())?;
        let json = serde_json::to_string_pretty(&self.manifest()).map_err(|e| AeError::Format(e.to_string()))?;
        fs::write(manifest_path(path), json + "\n")?;
        Ok(())
    }

    /// Load a model saved with [`save`](Self::save). With `vocabulary`
    /// given, a model trained under a different vocabulary is refused.
    pub fn load(path: &Path, vocabulary: Option<&LabelVocabulary>) -> Result<Self, AeError> {
        let text = fs::read_to_string(manifest_path(path))?;
        let manifest: AeManifest = serde_json::from_str(&text).map_err(|e| AeError::Format(e.to_string()))?;
        if manifest.format != AE_FORMAT || manifest.version != AE_FORMAT_VERSION {
            return Err(AeError::Format(format!("unsupported model {} v{}", manifest.format, manifest.version)));
        }
        if let Some(want) = vocabulary {
            let found = manifest.vocabulary_hash.clone().unwrap_or_default();
            if want.hash() != found {
                return Err(AeError::VocabularyMismatch { expected: want.hash(), found });
            }
        }
        let mut model = Self::zeroed(manifest.config.clone(), manifest.vocabulary.as_ref())?;
        let weights = read_weights::<T>(fs::File::open(path)?, Some(&model.spec_hash()))?;
        model.set_params(weights.tensors)?;
        model.log = manifest.log;
        model.provenance = manifest.provenance;
        Ok(model)
    }

    /// Transfer from a label-free parent stored at `parent_path`, skipping
    /// the architecture hash check: only the tensor shapes have to fit the
    /// label-free variant of `config`.
    pub fn transfer_from_file(
        parent_path: &Path,
        config: AeConfig,
        vocabulary: Option<&LabelVocabulary>,
    ) -> Result<Self, AeError> {
        let parent_config = AeConfig { n_labels: 0, ..config.clone() };
        let mut parent = Self::zeroed(parent_config, None)?;
        let weights = read_weights::<T>(fs::File::open(parent_path)?, None)?;
        parent.set_params(weights.tensors).map_err(|e| match e {
            AeError::ShapeMismatch { expected, found } => {
                AeError::IncompatibleParent(format!("weight shapes differ: expected {expected:?}, found {found:?}"))
            }
            other => other,
        })?;
        match fs::read_to_string(manifest_path(parent_path)) {
            Ok(text) => {
                let m: AeManifest = serde_json::from_str(&text).map_err(|e| AeError::Format(e.to_string()))?;
                parent.log = m.log;
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        Self::transfer(&parent, config, vocabulary)
    }
}
