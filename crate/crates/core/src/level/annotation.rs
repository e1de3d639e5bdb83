use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::chunk::{Chunk, ChunkOrigin};
use super::grid::Level;
use super::{LevelError, CHUNK_SIZE};

/// The designer's ordered pattern names. Index `i` of a label vector always
/// means `names[i]`; the reserved "none" class sits at index `len()`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelVocabulary {
    names: Vec<String>,
}

impl LabelVocabulary {
    pub fn new<I, S>(names: I) -> Result<Self, LevelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        for (i, name) in names.iter().enumerate() {
            if name.trim().is_empty() {
                return Err(LevelError::Vocabulary("empty label name".into()));
            }
            if name == NONE_LABEL {
                return Err(LevelError::Vocabulary(format!("\"{NONE_LABEL}\" is reserved")));
            }
            if names[..i].contains(name) {
                return Err(LevelError::Vocabulary(format!("duplicate label {name:?}")));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Class index used by the classifier for "none".
    pub fn none_index(&self) -> usize {
        self.names.len()
    }

    /// Stable hex digest of the ordered names.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for name in &self.names {
            hasher.update((name.len() as u64).to_le_bytes());
            hasher.update(name.as_bytes());
        }
        hex::encode(hasher.finalize())
    }

    /// One-hot vector for a label; all zeros for `None`.
    pub fn one_hot<T: num_traits::Float>(&self, label: Option<usize>) -> Vec<T> {
        let mut v = vec![T::zero(); self.len()];
        if let Some(i) = label {
            v[i] = T::one();
        }
        v
    }
}

impl TryFrom<Vec<String>> for LabelVocabulary {
    type Error = LevelError;
    fn try_from(names: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(names)
    }
}

impl From<LabelVocabulary> for Vec<String> {
    fn from(v: LabelVocabulary) -> Self {
        v.names
    }
}

/// Name the "none" class goes by in reports and files.
pub const NONE_LABEL: &str = "none";

/// Tile-aligned rectangle; `x` grows rightward, `y` downward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn window(x: usize, y: usize) -> Self {
        Self::new(x, y, CHUNK_SIZE, CHUNK_SIZE)
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn intersection_area(&self, other: &Rect) -> usize {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.w).min(other.x + other.w);
        let y1 = (self.y + self.h).min(other.y + other.h);
        x1.saturating_sub(x0) * y1.saturating_sub(y0)
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.intersection_area(other) > 0
    }

    pub fn contains(&self, other: &Rect) -> bool {
        other.x >= self.x && other.y >= self.y && other.x + other.w <= self.x + self.w && other.y + other.h <= self.y + self.h
    }

    pub fn union(&self, other: &Rect) -> Rect {
        let x0 = self.x.min(other.x);
        let y0 = self.y.min(other.y);
        let x1 = (self.x + self.w).max(other.x + other.w);
        let y1 = (self.y + self.h).max(other.y + other.h);
        Rect::new(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn iou(&self, other: &Rect) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// A designer's rectangle over a level, tagged with a pattern name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatternAnnotation {
    pub level: String,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub label: String,
}

impl PatternAnnotation {
    pub fn new(level: impl Into<String>, rect: Rect, label: impl Into<String>) -> Self {
        Self { level: level.into(), x: rect.x, y: rect.y, w: rect.w, h: rect.h, label: label.into() }
    }

    pub fn rect(&self) -> Rect {
        Rect::new(self.x, self.y, self.w, self.h)
    }

    pub fn validate(&self, level: &Level, vocabulary: &LabelVocabulary) -> Result<usize, LevelError> {
        if self.level != level.id {
            return Err(LevelError::UnknownLevel(self.level.clone()));
        }
        if self.w == 0 || self.h == 0 || self.x + self.w > level.grid.width() || self.y + self.h > level.grid.height() {
            return Err(LevelError::AnnotationOutOfBounds { x: self.x, y: self.y, w: self.w, h: self.h });
        }
        vocabulary.index_of(&self.label).ok_or_else(|| LevelError::UnknownLabel(self.label.clone()))
    }
}

/// A chunk with its class: `Some(i)` for `vocabulary.names()[i]`, `None`
/// for the reserved "none" class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledChunk {
    pub chunk: Chunk,
    pub label: Option<usize>,
}

impl LabeledChunk {
    pub fn new(chunk: Chunk, label: Option<usize>) -> Self {
        Self { chunk, label }
    }

    /// Class index with "none" mapped to `n_labels`.
    pub fn class_index(&self, n_labels: usize) -> usize {
        self.label.unwrap_or(n_labels)
    }

    pub fn window(&self) -> Option<(&str, Rect)> {
        self.chunk.origin.as_ref().map(|o| (o.level.as_str(), Rect::window(o.x, o.y)))
    }
}

/// Start offsets of 8-wide windows covering `[start, start + len)` inside
/// an axis of length `extent`: a single centered window when `len <= 8`,
/// else stride-8 tiling from `start` plus a final window flush with the end.
fn axis_offsets(start: usize, len: usize, extent: usize) -> Vec<usize> {
    let max = extent - CHUNK_SIZE;
    if len <= CHUNK_SIZE {
        let centered = start as i64 + (len as i64 - CHUNK_SIZE as i64).div_euclid(2);
        return vec![centered.clamp(0, max as i64) as usize];
    }
    let end = start + len;
    let mut out = Vec::new();
    let mut pos = start;
    while pos + CHUNK_SIZE <= end {
        out.push(pos.min(max));
        pos += CHUNK_SIZE;
    }
    if out.last().is_none_or(|last| last + CHUNK_SIZE < end) {
        out.push((end - CHUNK_SIZE).min(max));
    }
    out.dedup();
    out
}

/// Window origins used to turn a rectangle into training chunks.
pub fn annotation_windows(rect: Rect, level_width: usize, level_height: usize) -> Vec<(usize, usize)> {
    let xs = axis_offsets(rect.x, rect.w, level_width);
    let ys = axis_offsets(rect.y, rect.h, level_height);
    ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect()
}

/// One chunk centered on a small rectangle, or a covering set of chunks for
/// a rectangle larger than 8 in either axis. Every chunk carries the label.
pub fn annotation_to_examples(
    annotation: &PatternAnnotation,
    level: &Level,
    vocabulary: &LabelVocabulary,
) -> Result<Vec<LabeledChunk>, LevelError> {
    let label = annotation.validate(level, vocabulary)?;
    annotation_windows(annotation.rect(), level.grid.width(), level.grid.height())
        .into_iter()
        .map(|(x, y)| Ok(LabeledChunk::new(Chunk::encode_from(level, x, y)?, Some(label))))
        .collect()
}

/// Convert every annotation, resolving levels by id.
pub fn annotations_to_examples(
    annotations: &[PatternAnnotation],
    levels: &[Level],
    vocabulary: &LabelVocabulary,
) -> Result<Vec<LabeledChunk>, LevelError> {
    let by_id: HashMap<&str, &Level> = levels.iter().map(|l| (l.id.as_str(), l)).collect();
    let mut out = Vec::new();
    for ann in annotations {
        let level = by_id.get(ann.level.as_str()).ok_or_else(|| LevelError::UnknownLevel(ann.level.clone()))?;
        out.extend(annotation_to_examples(ann, level, vocabulary)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativeSample {
    pub examples: Vec<LabeledChunk>,
    /// Set when fewer than the requested number of windows were available.
    pub shortfall: bool,
}

/// Every window origin whose 8×8 area overlaps none of `avoid` on its level.
pub fn free_windows(levels: &[Level], avoid: &[(String, Rect)]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (li, level) in levels.iter().enumerate() {
        let rects: Vec<&Rect> = avoid.iter().filter(|(l, _)| *l == level.id).map(|(_, r)| r).collect();
        for y in 0..=level.grid.height() - CHUNK_SIZE {
            for x in 0..=level.grid.width() - CHUNK_SIZE {
                let win = Rect::window(x, y);
                if !rects.iter().any(|r| r.intersects(&win)) {
                    out.push((li, x, y));
                }
            }
        }
    }
    out
}

/// Draw `count` "none" chunks uniformly, without replacement, from windows
/// that overlap no annotation.
pub fn sample_negatives(
    levels: &[Level],
    annotations: &[PatternAnnotation],
    count: usize,
    seed: u64,
) -> NegativeSample {
    let avoid: Vec<(String, Rect)> = annotations.iter().map(|a| (a.level.clone(), a.rect())).collect();
    sample_negatives_avoiding(levels, &avoid, count, seed)
}

pub fn sample_negatives_avoiding(
    levels: &[Level],
    avoid: &[(String, Rect)],
    count: usize,
    seed: u64,
) -> NegativeSample {
    if count == 0 {
        return NegativeSample { examples: Vec::new(), shortfall: false };
    }
    let candidates = free_windows(levels, avoid);
    let shortfall = candidates.len() < count;
    let take = count.min(candidates.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, candidates.len(), take).into_vec();
    picked.sort_unstable();
    let examples = picked
        .into_iter()
        .map(|i| {
            let (li, x, y) = candidates[i];
            let level = &levels[li];
            let chunk = Chunk::encode(&level.grid, x, y)
                .expect("candidate windows are in bounds")
                .with_origin(ChunkOrigin { level: level.id.clone(), x, y });
            LabeledChunk::new(chunk, None)
        })
        .collect();
    NegativeSample { examples, shortfall }
}

/// Mean number of examples per pattern label, rounded up; the default
/// number of "none" examples to draw.
pub fn default_negative_count(examples: &[LabeledChunk], n_labels: usize) -> usize {
    if n_labels == 0 {
        return 0;
    }
    let positives = examples.iter().filter(|e| e.label.is_some()).count();
    positives.div_ceil(n_labels)
}
