//! Random forest over one-hot chunks.
//!
//! The forest maps a chunk to one of the designer's pattern labels or to
//! "none". It is trained from hand labels, used to auto-label whole levels,
//! and corrected in place: when feedback shows a misclassification, the
//! worst offending trees are deleted and regrown so the forest keeps its
//! size.

mod autolabel;
mod tree;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::level::{Chunk, LabelVocabulary, LabeledChunk, CHUNK_FEATURES};

pub use autolabel::{autolabel, autolabel_detailed, AutoAnnotation, DEFAULT_AUTOLABEL_STRIDE};
pub use tree::{DecisionTree, TreeNode};
use tree::{bootstrap, GrowParams, Sample};

pub const FOREST_FORMAT: &str = "patterncraft-forest";
pub const FOREST_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ForestError {
    #[error("need at least 2 examples to train, got {0}")]
    InsufficientData(usize),
    #[error("all training examples share one class")]
    SingleClass,
    #[error("forest has no trees")]
    NotTrained,
    #[error("no feedback examples given")]
    EmptyFeedback,
    #[error("example label {0} is outside the vocabulary")]
    LabelOutOfRange(usize),
    #[error("model vocabulary hash {found} does not match expected {expected}")]
    VocabularyMismatch { expected: String, found: String },
    #[error("invalid forest config: {0}")]
    InvalidConfig(String),
    #[error("malformed forest file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub forest_size: usize,
    pub max_depth: usize,
    pub features_per_split: usize,
    pub min_samples_split: usize,
    /// Cap on the share of trees regrown by one incremental update.
    pub max_replace_fraction: f64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            forest_size: 100,
            max_depth: 100,
            // ⌈√1920⌉
            features_per_split: (CHUNK_FEATURES as f64).sqrt().ceil() as usize,
            min_samples_split: 2,
            max_replace_fraction: 0.2,
        }
    }
}

impl ForestConfig {
    fn validate(&self) -> Result<(), ForestError> {
        if self.forest_size == 0 || self.max_depth == 0 || self.features_per_split == 0 {
            return Err(ForestError::InvalidConfig("sizes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.max_replace_fraction) {
            return Err(ForestError::InvalidConfig("max_replace_fraction must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// Most trees one update may replace: ⌈fraction · size⌉.
    pub fn replace_cap(&self) -> usize {
        (self.max_replace_fraction * self.forest_size as f64 - 1e-9).ceil().max(0.0) as usize
    }
}

/// Output of [`ForestModel::predict`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    /// `None` means the "none" class won.
    pub label: Option<usize>,
    /// Vote count per class; the last entry is "none". Sums to the forest size.
    pub votes: Vec<u32>,
}

impl Prediction {
    pub fn class_index(&self) -> usize {
        self.label.unwrap_or(self.votes.len() - 1)
    }

    /// Share of trees that voted for the winning class.
    pub fn confidence(&self) -> f64 {
        let total: u32 = self.votes.iter().sum();
        self.votes[self.class_index()] as f64 / total.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub vocabulary: LabelVocabulary,
    pub seed: u64,
    next_tree_id: u64,
    trees: Vec<DecisionTree>,
}

/// Result of an incremental update.
#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    pub model: ForestModel,
    /// Ids of the trees that were deleted; empty when nothing changed.
    pub replaced: Vec<u64>,
}

impl UpdateOutcome {
    pub fn unchanged(&self) -> bool {
        self.replaced.is_empty()
    }
}

/// Per-tree seed: a SplitMix64 step over the master seed and the tree id,
/// so trees can be grown in any order with identical results.
fn tree_seed(master: u64, tree_id: u64) -> u64 {
    let mut z = master ^ tree_id.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn to_samples(examples: &[LabeledChunk], n_labels: usize) -> Result<Vec<Sample>, ForestError> {
    examples
        .iter()
        .map(|e| match e.label {
            Some(l) if l >= n_labels => Err(ForestError::LabelOutOfRange(l)),
            _ => Ok(Sample::new(&e.chunk, e.class_index(n_labels))),
        })
        .collect()
}

impl ForestModel {
    /// Train `config.forest_size` trees, each on its own bootstrap resample.
    pub fn fit(
        examples: &[LabeledChunk],
        vocabulary: &LabelVocabulary,
        config: ForestConfig,
        seed: u64,
    ) -> Result<Self, ForestError> {
        config.validate()?;
        if examples.len() < 2 {
            return Err(ForestError::InsufficientData(examples.len()));
        }
        let n = vocabulary.len();
        let first = examples[0].class_index(n);
        if examples.iter().all(|e| e.class_index(n) == first) {
            return Err(ForestError::SingleClass);
        }
        let samples = to_samples(examples, n)?;
        let mut model = ForestModel {
            config,
            vocabulary: vocabulary.clone(),
            seed,
            next_tree_id: 0,
            trees: Vec::new(),
        };
        let ids: Vec<u64> = (0..config.forest_size as u64).collect();
        model.trees = model.grow_trees(&samples, &ids);
        model.next_tree_id = config.forest_size as u64;
        Ok(model)
    }

    fn grow_params(&self) -> GrowParams {
        GrowParams {
            n_classes: self.vocabulary.len() + 1,
            max_depth: self.config.max_depth,
            features_per_split: self.config.features_per_split,
            min_samples_split: self.config.min_samples_split,
        }
    }

    fn grow_trees(&self, samples: &[Sample], ids: &[u64]) -> Vec<DecisionTree> {
        let params = self.grow_params();
        ids.par_iter()
            .map(|&id| {
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(self.seed, id));
                let rows = bootstrap(samples.len(), &mut rng);
                DecisionTree::grow(id, samples, rows, params, &mut rng)
            })
            .collect()
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn tree_ids(&self) -> Vec<u64> {
        self.trees.iter().map(|t| t.id).collect()
    }

    pub fn n_labels(&self) -> usize {
        self.vocabulary.len()
    }

    /// Majority vote; ties go to "none", then to the lowest label index.
    pub fn predict(&self, chunk: &Chunk) -> Prediction {
        let none = self.vocabulary.none_index();
        let mut votes = vec![0u32; none + 1];
        for tree in &self.trees {
            votes[tree.vote(chunk, none)] += 1;
        }
        let class = tree::argmax_class(&votes, none);
        Prediction { label: (class != none).then_some(class), votes }
    }

    pub fn predict_many(&self, chunks: &[&Chunk]) -> Vec<Prediction> {
        chunks.par_iter().map(|c| self.predict(c)).collect()
    }

    /// Share of `examples` whose majority vote matches their label.
    pub fn accuracy(&self, examples: &[LabeledChunk]) -> f64 {
        if examples.is_empty() {
            return 0.0;
        }
        let correct = examples.iter().filter(|e| self.predict(&e.chunk).label == e.label).count();
        correct as f64 / examples.len() as f64
    }

    /// Correct the forest with designer feedback.
    ///
    /// When the majority vote already agrees with every new example the
    /// model comes back unchanged. Otherwise the trees that get the most new
    /// examples wrong are deleted, at most [`ForestConfig::replace_cap`] of
    /// them, and regrown on bootstraps of `all_examples ∪ new_examples`.
    pub fn incremental_update(
        &self,
        new_examples: &[LabeledChunk],
        all_examples: &[LabeledChunk],
    ) -> Result<UpdateOutcome, ForestError> {
        if self.trees.is_empty() {
            return Err(ForestError::NotTrained);
        }
        if new_examples.is_empty() {
            return Err(ForestError::EmptyFeedback);
        }
        let n = self.n_labels();
        let none = self.vocabulary.none_index();
        let new_samples = to_samples(new_examples, n)?;
        if new_examples.iter().all(|e| self.predict(&e.chunk).label == e.label) {
            return Ok(UpdateOutcome { model: self.clone(), replaced: Vec::new() });
        }

        let mut wrong: Vec<(usize, usize)> = self
            .trees
            .iter()
            .enumerate()
            .map(|(slot, tree)| {
                let misses = new_examples.iter().filter(|e| tree.vote(&e.chunk, none) != e.class_index(n)).count();
                (slot, misses)
            })
            .filter(|&(_, misses)| misses > 0)
            .collect();
        wrong.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        wrong.truncate(self.config.replace_cap());

        let mut samples = to_samples(all_examples, n)?;
        samples.extend(new_samples);

        let mut model = self.clone();
        let ids: Vec<u64> = (0..wrong.len() as u64).map(|i| self.next_tree_id + i).collect();
        let fresh = model.grow_trees(&samples, &ids);
        let mut replaced = Vec::with_capacity(wrong.len());
        for ((slot, _), tree) in wrong.into_iter().zip(fresh) {
            replaced.push(model.trees[slot].id);
            model.trees[slot] = tree;
        }
        model.next_tree_id += ids.len() as u64;
        Ok(UpdateOutcome { model, replaced })
    }

    /// Serialize to the versioned JSON form.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&ForestFile::from(self)).expect("forest serializes")
    }

    /// Parse the JSON form. When `expected` is given, its hash must match
    /// the vocabulary the model was trained with.
    pub fn from_json(text: &str, expected: Option<&LabelVocabulary>) -> Result<Self, ForestError> {
        let file: ForestFile = serde_json::from_str(text).map_err(|e| ForestError::Format(e.to_string()))?;
        if file.format != FOREST_FORMAT || file.version != FOREST_VERSION {
            return Err(ForestError::Format(format!("unsupported {} v{}", file.format, file.version)));
        }
        let actual = file.model.vocabulary.hash();
        if actual != file.vocabulary_hash {
            return Err(ForestError::VocabularyMismatch { expected: file.vocabulary_hash, found: actual });
        }
        if let Some(expected) = expected {
            if expected.hash() != file.vocabulary_hash {
                return Err(ForestError::VocabularyMismatch { expected: expected.hash(), found: file.vocabulary_hash });
            }
        }
        if file.model.trees.len() != file.model.config.forest_size {
            return Err(ForestError::Format("tree count differs from forest size".into()));
        }
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ForestError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path, expected: Option<&LabelVocabulary>) -> Result<Self, ForestError> {
        Self::from_json(&std::fs::read_to_string(path)?, expected)
    }
}

#[derive(Serialize, Deserialize)]
struct ForestFile {
    format: String,
    version: u32,
    vocabulary_hash: String,
    model: ForestModel,
}

impl From<&ForestModel> for ForestFile {
    fn from(model: &ForestModel) -> Self {
        Self {
            format: FOREST_FORMAT.into(),
            version: FOREST_VERSION,
            vocabulary_hash: model.vocabulary.hash(),
            model: model.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::level::LevelGrid;

    fn chunk_with(cells: &[(usize, usize, u8)]) -> Chunk {
        let mut g = LevelGrid::empty(8, 8).unwrap();
        for &(x, y, t) in cells {
            g.set(x, y, Some(t));
        }
        Chunk::encode(&g, 0, 0).unwrap()
    }

    fn two_class() -> (Vec<LabeledChunk>, LabelVocabulary) {
        let vocab = LabelVocabulary::new(["coins"]).unwrap();
        let mut ex = Vec::new();
        for i in 0..8 {
            ex.push(LabeledChunk::new(chunk_with(&[(i, 3, 11), (0, 7, 0)]), Some(0)));
            ex.push(LabeledChunk::new(chunk_with(&[(i, 7, 0)]), None));
        }
        (ex, vocab)
    }

    #[test]
    fn separable_data_is_fit_perfectly() {
        let (ex, vocab) = two_class();
        let model = ForestModel::fit(&ex, &vocab, ForestConfig::default(), 1).unwrap();
        assert_eq!(model.trees().len(), 100);
        assert_eq!(model.accuracy(&ex), 1.0);
        for e in &ex {
            let p = model.predict(&e.chunk);
            assert_eq!(p.votes.iter().sum::<u32>(), 100);
        }
    }

    #[test]
    fn fit_preconditions() {
        let (ex, vocab) = two_class();
        assert!(matches!(ForestModel::fit(&ex[..1], &vocab, ForestConfig::default(), 0), Err(ForestError::InsufficientData(1))));
        let same: Vec<_> = ex.iter().filter(|e| e.label.is_none()).cloned().collect();
        assert!(matches!(ForestModel::fit(&same, &vocab, ForestConfig::default(), 0), Err(ForestError::SingleClass)));
        let bad = vec![ex[0].clone(), LabeledChunk::new(ex[1].chunk.clone(), Some(4))];
        assert!(matches!(ForestModel::fit(&bad, &vocab, ForestConfig::default(), 0), Err(ForestError::LabelOutOfRange(4))));
    }

    #[test]
    fn fit_is_deterministic_per_seed() {
        let (ex, vocab) = two_class();
        let a = ForestModel::fit(&ex, &vocab, ForestConfig::default(), 42).unwrap();
        let b = ForestModel::fit(&ex, &vocab, ForestConfig::default(), 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn replace_cap_rounds_up() {
        let mut cfg = ForestConfig::default();
        assert_eq!(cfg.replace_cap(), 20);
        cfg.max_replace_fraction = 0.155;
        assert_eq!(cfg.replace_cap(), 16);
        cfg.forest_size = 7;
        cfg.max_replace_fraction = 0.2;
        assert_eq!(cfg.replace_cap(), 2);
    }

    #[test]
    fn correct_feedback_leaves_model_unchanged() {
        let (ex, vocab) = two_class();
        let model = ForestModel::fit(&ex, &vocab, ForestConfig::default(), 5).unwrap();
        let out = model.incremental_update(&ex[..2], &ex).unwrap();
        assert!(out.unchanged());
        assert_eq!(out.model.tree_ids(), model.tree_ids());
        assert!(matches!(model.incremental_update(&[], &ex), Err(ForestError::EmptyFeedback)));
    }

    #[test]
    fn json_round_trip_and_vocabulary_guard() {
        let (ex, vocab) = two_class();
        let model = ForestModel::fit(&ex, &vocab, ForestConfig::default(), 5).unwrap();
        let text = model.to_json();
        let back = ForestModel::from_json(&text, Some(&vocab)).unwrap();
        assert_eq!(back, model);
        let other = LabelVocabulary::new(["gaps"]).unwrap();
        assert!(matches!(ForestModel::from_json(&text, Some(&other)), Err(ForestError::VocabularyMismatch { .. })));
    }
}
