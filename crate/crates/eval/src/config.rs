use std::path::{Path, PathBuf};

use patterncraft_core::autoencoder::{AeConfig, Convergence};
use patterncraft_core::forest::ForestConfig;
use serde::{Deserialize, Serialize};

use crate::cnn::CnnConfig;
use crate::corpus::{make_synthetic_corpus, Corpus, CorpusSpec};
use crate::EvalError;

/// Where the corpus comes from: a built-in spec name, an inline spec, or a
/// directory written by [`Corpus::write`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSource {
    Named(String),
    Spec(CorpusSpec),
    Path(PathBuf),
}

impl Default for CorpusSource {
    fn default() -> Self {
        CorpusSource::Named("default".into())
    }
}

impl CorpusSource {
    /// Relative paths resolve against `base`. Draw `i` of a synthetic source
    /// uses seed `seed + i`; a stored corpus is the same for every draw.
    pub fn load(&self, seed: u64, base: Option<&Path>) -> Result<Corpus, EvalError> {
        match self {
            CorpusSource::Named(name) => {
                let spec = CorpusSpec::named(name).ok_or_else(|| EvalError::InvalidSpec(format!("unknown corpus {name:?}")))?;
                make_synthetic_corpus(&spec, seed)
            }
            CorpusSource::Spec(spec) => make_synthetic_corpus(spec, seed),
            CorpusSource::Path(p) => Corpus::read(&base.map_or_else(|| p.clone(), |b| b.join(p))),
        }
    }

    pub fn is_synthetic(&self) -> bool {
        !matches!(self, CorpusSource::Path(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Classifier,
    Generator,
    Transfer,
}

/// Generator variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    NoLabels,
    NoAutoTag,
    Full,
    TransferNoAuto,
    TransferWithAuto,
}

impl Variant {
    pub const ALL: [Variant; 5] =
        [Variant::NoLabels, Variant::NoAutoTag, Variant::Full, Variant::TransferNoAuto, Variant::TransferWithAuto];
    pub const GENERATOR: [Variant; 3] = [Variant::NoLabels, Variant::NoAutoTag, Variant::Full];
    pub const TRANSFER: [Variant; 4] =
        [Variant::NoLabels, Variant::TransferNoAuto, Variant::TransferWithAuto, Variant::Full];

    pub fn name(self) -> &'static str {
        match self {
            Variant::NoLabels => "no-labels",
            Variant::NoAutoTag => "no-auto-tag",
            Variant::Full => "full",
            Variant::TransferNoAuto => "transfer-no-auto",
            Variant::TransferWithAuto => "transfer-with-auto",
        }
    }

    pub fn is_transfer(self) -> bool {
        matches!(self, Variant::TransferNoAuto | Variant::TransferWithAuto)
    }
}

/// Autoencoder settings shared by every generator variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSettings {
    pub max_epochs: usize,
    /// Cap for the label-free parent, which sees the most windows.
    pub no_labels_max_epochs: usize,
    pub transfer_max_epochs: usize,
    pub rel_tol: f64,
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Share of each fold's training instances revealed as hand labels.
    pub hand_fraction: f64,
    /// Column stride of the windows the label-free model trains on; rows
    /// are the top and bottom of the level.
    pub window_stride: usize,
    pub autolabel_stride: usize,
    /// "none" examples drawn per hand label when fitting the forest.
    pub negatives_per_hand: f64,
}

impl Default for GeneratorSettings {
    fn default() -> Self {
        Self {
            max_epochs: 300,
            no_labels_max_epochs: 150,
            transfer_max_epochs: 300,
            rel_tol: 1e-4,
            patience: 10,
            batch_size: 32,
            lr: 1e-3,
            hand_fraction: 0.15,
            window_stride: 8,
            autolabel_stride: patterncraft_core::forest::DEFAULT_AUTOLABEL_STRIDE,
            negatives_per_hand: 3.0,
        }
    }
}

impl GeneratorSettings {
    pub fn ae_config(&self, n_labels: usize, seed: u64, max_epochs: usize) -> AeConfig {
        let mut c = AeConfig::new(n_labels, seed);
        c.batch_size = self.batch_size;
        c.adam.lr = self.lr;
        c.convergence = Convergence { rel_tol: self.rel_tol, patience: self.patience, max_epochs, target_loss: None };
        c
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if !(0.0..=1.0).contains(&self.hand_fraction) {
            return Err(EvalError::InvalidSpec(format!("hand_fraction {} outside [0, 1]", self.hand_fraction)));
        }
        if self.window_stride == 0 || self.autolabel_stride == 0 || self.patience == 0 {
            return Err(EvalError::InvalidSpec("strides and patience must be positive".into()));
        }
        if self.max_epochs == 0 || self.no_labels_max_epochs == 0 || self.transfer_max_epochs == 0 {
            return Err(EvalError::InvalidSpec("epoch caps must be positive".into()));
        }
        if self.negatives_per_hand.is_nan() || self.negatives_per_hand < 0.0 {
            return Err(EvalError::InvalidSpec("negatives_per_hand must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: CorpusSource,
    /// Master seed; the command line may override it.
    pub seed: u64,
    pub experiments: Vec<ExperimentKind>,
    pub variants: Vec<Variant>,
    pub folds: usize,
    /// Independent corpus draws, seeded `seed, seed + 1, ...`.
    pub draws: usize,
    pub generator: GeneratorSettings,
    pub forest: ForestConfig,
    pub cnn: CnnConfig,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusSource::default(),
            seed: 0,
            experiments: vec![ExperimentKind::Classifier, ExperimentKind::Generator, ExperimentKind::Transfer],
            variants: Variant::ALL.to_vec(),
            folds: crate::folds::FoldPlan::DEFAULT_K,
            draws: 1,
            generator: GeneratorSettings::default(),
            forest: ForestConfig::default(),
            cnn: CnnConfig::default(),
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.folds < 2 {
            return Err(EvalError::InvalidSpec(format!("{} folds", self.folds)));
        }
        if self.draws == 0 {
            return Err(EvalError::InvalidSpec("draws must be positive".into()));
        }
        if self.experiments.is_empty() {
            return Err(EvalError::InvalidSpec("no experiments selected".into()));
        }
        if let CorpusSource::Spec(s) = &self.corpus {
            s.validate()?;
        }
        self.generator.validate()
    }

    /// Selected variants in canonical order, restricted to `of`.
    pub fn variants_among(&self, of: &[Variant]) -> Vec<Variant> {
        of.iter().copied().filter(|v| self.variants.contains(v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_fills_defaults() {
        let c = ExperimentConfig::from_json(r#"{"corpus": {"named": "small"}, "experiments": ["classifier"], "seed": 4}"#).unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.folds, 3);
        assert_eq!(c.generator.hand_fraction, 0.15);
        assert_eq!(c.experiments, vec![ExperimentKind::Classifier]);
        let back = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_json(r#"{"folds": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"generator": {"hand_fraction": 2.0}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"corpus": {"named": "nope"}}"#).unwrap().corpus.load(0, None).is_err());
    }
}
