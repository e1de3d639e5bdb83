//! Tile taxonomy, the text level format, 8×8 chunk encoding and the
//! conversion of designer annotations into labeled training chunks.

mod annotation;
mod chunk;
mod grid;
pub mod tiles;

pub use annotation::{
    annotation_to_examples, annotation_windows, annotations_to_examples, default_negative_count, free_windows,
    sample_negatives, sample_negatives_avoiding, LabelVocabulary, LabeledChunk, NegativeSample, PatternAnnotation,
    Rect, NONE_LABEL,
};
pub use chunk::{decode_chunk, feature_index, Chunk, ChunkOrigin};
pub use grid::{Level, LevelGrid};
pub use tiles::{TileClass, TileRegistry, EMPTY_GLYPH, NUM_TILE_CLASSES};

/// Side length of a chunk in tiles.
pub const CHUNK_SIZE: usize = 8;

/// Flattened feature count of a one-hot chunk: 8·8·30.
pub const CHUNK_FEATURES: usize = CHUNK_SIZE * CHUNK_SIZE * NUM_TILE_CLASSES;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LevelError {
    #[error("row {row} has a different length than the first row")]
    RaggedRows { row: usize },
    #[error("unknown glyph {glyph:?} at column {x}, row {y}")]
    UnknownGlyph { x: usize, y: usize, glyph: char },
    #[error("cell at column {x}, row {y} holds an unregistered class")]
    UnknownClass { x: usize, y: usize },
    #[error("level is {width}×{height}; both dimensions must be at least {CHUNK_SIZE}")]
    TooSmall { width: usize, height: usize },
    #[error("window at ({x}, {y}) is out of bounds")]
    OutOfBounds { x: usize, y: usize },
    #[error("annotation rectangle ({x}, {y}, {w}×{h}) is empty or outside the level")]
    AnnotationOutOfBounds { x: usize, y: usize, w: usize, h: usize },
    #[error("expected {CHUNK_FEATURES} features, got {0}")]
    FeatureCount(usize),
    #[error("cell {cell} is not one-hot")]
    NotOneHot { cell: usize },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("unknown level {0:?}")]
    UnknownLevel(String),
    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),
    #[error("invalid tile registry: {0}")]
    Registry(String),
}

/// Parse a level in the text format against the builtin registry.
pub fn parse_level(text: &str) -> Result<LevelGrid, LevelError> {
    LevelGrid::parse(text)
}

/// One-hot encode the 8×8 window at `(x, y)`.
pub fn encode_chunk(grid: &LevelGrid, x: usize, y: usize) -> Result<Chunk, LevelError> {
    Chunk::encode(grid, x, y)
}
