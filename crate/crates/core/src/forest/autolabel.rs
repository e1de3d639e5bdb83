use serde::{Deserialize, Serialize};

use super::ForestModel;
use crate::level::{Chunk, Level, PatternAnnotation, Rect, CHUNK_SIZE};

pub const DEFAULT_AUTOLABEL_STRIDE: usize = 2;

/// An auto-label with the mean vote share of the windows merged into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoAnnotation {
    pub annotation: PatternAnnotation,
    pub confidence: f64,
    pub windows: usize,
}

struct Hit {
    rect: Rect,
    label: usize,
    confidence: f64,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Slide an 8×8 window over every level and label the windows the forest
/// assigns a pattern to. Same-label windows overlapping by at least half a
/// window are merged into their bounding box.
pub fn autolabel_detailed(model: &ForestModel, levels: &[Level], stride: usize) -> Vec<AutoAnnotation> {
    let stride = stride.max(1);
    let mut out = Vec::new();
    for level in levels {
        let grid = &level.grid;
        let mut positions = Vec::new();
        for y in (0..=grid.height() - CHUNK_SIZE).step_by(stride) {
            for x in (0..=grid.width() - CHUNK_SIZE).step_by(stride) {
                positions.push((x, y));
            }
        }
        let chunks: Vec<Chunk> = positions
            .iter()
            .map(|&(x, y)| Chunk::encode(grid, x, y).expect("window positions are in bounds"))
            .collect();
        let refs: Vec<&Chunk> = chunks.iter().collect();
        let hits: Vec<Hit> = model
            .predict_many(&refs)
            .into_iter()
            .zip(&positions)
            .filter_map(|(p, &(x, y))| {
                let confidence = p.confidence();
                p.label.map(|label| Hit { rect: Rect::window(x, y), label, confidence })
            })
            .collect();

        let mut parent: Vec<usize> = (0..hits.len()).collect();
        for i in 0..hits.len() {
            for j in i + 1..hits.len() {
                if hits[i].label != hits[j].label {
                    continue;
                }
                let inter = hits[i].rect.intersection_area(&hits[j].rect);
                let smaller = hits[i].rect.area().min(hits[j].rect.area());
                if inter * 2 >= smaller {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[b.max(a)] = a.min(b);
                    }
                }
            }
        }
        let mut groups: Vec<(usize, Rect, usize, f64, usize)> = Vec::new();
        for i in 0..hits.len() {
            let root = find(&mut parent, i);
            match groups.iter_mut().find(|g| g.0 == root) {
                Some(g) => {
                    g.1 = g.1.union(&hits[i].rect);
                    g.3 += hits[i].confidence;
                    g.4 += 1;
                }
                None => groups.push((root, hits[i].rect, hits[i].label, hits[i].confidence, 1)),
            }
        }
        for (_, rect, label, conf_sum, count) in groups {
            let name = model.vocabulary.name(label).expect("predicted labels are in the vocabulary");
            out.push(AutoAnnotation {
                annotation: PatternAnnotation::new(level.id.clone(), rect, name),
                confidence: conf_sum / count as f64,
                windows: count,
            });
        }
    }
    out
}

pub fn autolabel(model: &ForestModel, levels: &[Level], stride: usize) -> Vec<PatternAnnotation> {
    autolabel_detailed(model, levels, stride).into_iter().map(|a| a.annotation).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::ForestConfig;
    use crate::level::{LabelVocabulary, LabeledChunk, LevelGrid};

    fn ground_level(width: usize, height: usize) -> LevelGrid {
        let mut g = LevelGrid::empty(width, height).unwrap();
        for x in 0..width {
            g.set(x, height - 1, Some(0));
        }
        g
    }

    #[test]
    fn window_count_for_exact_height_level() {
        // Every window is "none" in training, so nothing is emitted.
        let vocab = LabelVocabulary::new(["coins"]).unwrap();
        let lvl = Level::new("a", ground_level(16, 8));
        let mut with_coin = ground_level(8, 8);
        with_coin.set(2, 2, Some(11));
        let ex = vec![
            LabeledChunk::new(Chunk::encode(&ground_level(8, 8), 0, 0).unwrap(), None),
            LabeledChunk::new(Chunk::encode(&with_coin, 0, 0).unwrap(), Some(0)),
        ];
        let model = ForestModel::fit(&ex, &vocab, ForestConfig::default(), 1).unwrap();
        assert!(autolabel(&model, &[lvl.clone()], 8).is_empty());

        let mut coin_level = lvl.grid.clone();
        coin_level.set(10, 2, Some(11));
        let anns = autolabel_detailed(&model, &[Level::new("b", coin_level)], 8);
        assert_eq!(anns.len(), 1);
        assert_eq!(anns[0].annotation.rect(), Rect::window(8, 0));
        assert_eq!(anns[0].windows, 1);
    }

    #[test]
    fn overlapping_hits_merge_into_bounding_box() {
        let vocab = LabelVocabulary::new(["coins"]).unwrap();
        let mut ex = vec![
            LabeledChunk::new(Chunk::encode(&ground_level(8, 8), 0, 0).unwrap(), None),
            LabeledChunk::new(Chunk::encode(&LevelGrid::empty(8, 8).unwrap(), 0, 0).unwrap(), None),
        ];
        for col in 0..8 {
            let mut g = ground_level(8, 8);
            g.set(col, 3, Some(11));
            ex.push(LabeledChunk::new(Chunk::encode(&g, 0, 0).unwrap(), Some(0)));
            ex.push(LabeledChunk::new(Chunk::encode(&ground_level(8, 8), 0, 0).unwrap(), None));
        }
        let model = ForestModel::fit(&ex, &vocab, ForestConfig::default(), 3).unwrap();
        let mut g = ground_level(30, 8);
        g.set(12, 3, Some(11));
        let anns = autolabel_detailed(&model, &[Level::new("c", g)], 2);
        // windows at x = 6, 8, 10, 12 contain the coin and chain-merge
        assert_eq!(anns.len(), 1);
        let r = anns[0].annotation.rect();
        assert!(r.contains(&Rect::new(12, 3, 1, 1)));
        assert!(r.w > 8);
    }
}
