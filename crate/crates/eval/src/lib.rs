//! Cross-validated experiments over a synthetic oracle corpus: classifier
//! accuracy against a small CNN, the three generator variants, and weight
//! transfer, with the structure-error metric and rank tests.

pub mod cnn;
pub mod config;
pub mod corpus;
pub mod experiments;
pub mod folds;
pub mod metrics;
pub mod report;
pub mod stats;

pub use config::ExperimentConfig;
pub use corpus::{make_synthetic_corpus, Corpus, CorpusSpec, PatternKind, PatternTarget};
pub use experiments::{run_classifier_experiment, run_generator_experiment, run_transfer_experiment};
pub use folds::FoldPlan;
pub use metrics::{structure_error, structure_error_dense, MeanStd};
pub use report::ExperimentReport;
pub use stats::{mann_whitney_u, wilcoxon_signed_rank};

use patterncraft_core::autoencoder::AeError;
use patterncraft_core::forest::ForestError;
use patterncraft_core::level::LevelError;
use patterncraft_core::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid corpus or experiment spec: {0}")]
    InvalidSpec(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("samples differ in length: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("{found} pairs given, at least {needed} required")]
    TooFewPairs { found: usize, needed: usize },
    #[error("shape mismatch: expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("ground truth holds a non-binary value at {0}")]
    NonBinaryTruth(usize),
    #[error("malformed table: {0}")]
    Table(String),
    #[error(transparent)]
    Level(#[from] LevelError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Autoencoder(#[from] AeError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
