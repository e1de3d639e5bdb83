//! A small dense-tensor network kit: strided convolutions, transposed
//! convolutions, nearest-neighbour upsampling, dropout and dense layers,
//! with MSE loss and Adam.

mod adam;
pub mod gradcheck;
mod layers;
mod loss;
mod network;
mod spec;
mod tensor;
mod weights;

pub use adam::{AdamConfig, AdamState};
pub use loss::{mse, mse_grad};
pub use network::{ForwardCache, Gradients, Network};
pub use spec::{Activation, LayerSpec, NetworkSpec};
pub use tensor::Tensor;
pub use weights::{read_weights, write_weights, WeightFile, WEIGHTS_MAGIC, WEIGHTS_VERSION};

pub(crate) use layers::{activate, activation_backward};
pub(crate) use network::init_layer_weight;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("weight file: {0}")]
    Format(String),
    #[error("weight file was written for a different network (spec hash {found}, expected {expected})")]
    SpecHashMismatch { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
