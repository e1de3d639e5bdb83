//! Data preparation shared by the training endpoints.

use patterncraft_core::autoencoder::AeConfig;
use patterncraft_core::forest::ForestConfig;
use patterncraft_core::level::{
    annotations_to_examples, default_negative_count, sample_negatives_avoiding, Chunk, LabelVocabulary, LabeledChunk,
    Level, PatternAnnotation, Rect, CHUNK_SIZE,
};
use serde::{Deserialize, Serialize};

use crate::error::ApiResult;
use crate::session::WindowRef;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingDefaults {
    pub forest: ForestConfig,
    pub max_epochs: usize,
    /// Cap for the label-free parent trained ahead of a transfer.
    pub parent_max_epochs: usize,
    /// Column stride of the parent's training windows.
    pub parent_stride: usize,
    pub autolabel_stride: usize,
}

impl Default for TrainingDefaults {
    fn default() -> Self {
        Self {
            forest: ForestConfig::default(),
            max_epochs: 300,
            parent_max_epochs: 150,
            parent_stride: 8,
            autolabel_stride: patterncraft_core::forest::DEFAULT_AUTOLABEL_STRIDE,
        }
    }
}

pub fn ae_config(n_labels: usize, seed: u64, max_epochs: usize) -> AeConfig {
    let mut c = AeConfig::new(n_labels, seed);
    c.convergence.max_epochs = max_epochs;
    c
}

/// Hand-labelled positives, designer negatives, and enough sampled "none"
/// windows to reach the default negative count. Sampling avoids every
/// annotation, hand or auto, and the designer's negative windows.
pub fn classifier_examples(
    levels: &[Level],
    vocabulary: &LabelVocabulary,
    hand: &[PatternAnnotation],
    all: &[PatternAnnotation],
    negatives: &[WindowRef],
    seed: u64,
) -> ApiResult<Vec<LabeledChunk>> {
    let mut examples = annotations_to_examples(hand, levels, vocabulary)?;
    let wanted = default_negative_count(&examples, vocabulary.len());
    for n in negatives {
        if let Some(level) = levels.iter().find(|l| l.id == n.level) {
            examples.push(LabeledChunk::new(Chunk::encode_from(level, n.x, n.y)?, None));
        }
    }
    let mut avoid: Vec<(String, Rect)> = all.iter().map(|a| (a.level.clone(), a.rect())).collect();
    avoid.extend(negatives.iter().map(|n| (n.level.clone(), n.rect())));
    let sampled = sample_negatives_avoiding(levels, &avoid, wanted.saturating_sub(negatives.len()), seed);
    examples.extend(sampled.examples);
    Ok(examples)
}

/// Label-free windows for the parent: every `stride` columns along the top
/// and bottom rows of each level.
pub fn parent_windows(levels: &[Level], stride: usize) -> ApiResult<Vec<LabeledChunk>> {
    let mut out = Vec::new();
    for level in levels {
        let (w, h) = (level.grid.width(), level.grid.height());
        let mut ys = vec![0, h - CHUNK_SIZE];
        ys.dedup();
        for y in ys {
            for x in (0..=w - CHUNK_SIZE).step_by(stride.max(1)) {
                out.push(LabeledChunk::new(Chunk::encode_from(level, x, y)?, None));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use patterncraft_core::level::LevelGrid;

    #[test]
    fn parent_windows_cover_top_and_bottom() {
        let level = Level::new("a", LevelGrid::empty(24, 14).unwrap());
        let w = parent_windows(&[level], 8).unwrap();
        let origins: Vec<(usize, usize)> =
            w.iter().map(|e| e.chunk.origin.as_ref().map(|o| (o.x, o.y)).unwrap()).collect();
        assert_eq!(origins, vec![(0, 0), (8, 0), (16, 0), (0, 6), (8, 6), (16, 6)]);
        let square = Level::new("b", LevelGrid::empty(8, 8).unwrap());
        assert_eq!(parent_windows(&[square], 8).unwrap().len(), 1);
    }
}
