//! Tile-level design-pattern engine: level encoding, random-forest label
//! propagation, and a label-conditioned convolutional autoencoder.

pub mod autoencoder;
pub mod forest;
pub mod level;
pub mod nn;
pub mod scalar;

pub use scalar::{DType, Scalar};

pub type Tensor32 = nn::Tensor<f32>;
pub type Tensor64 = nn::Tensor<f64>;
pub type Network32 = nn::Network<f32>;
pub type Network64 = nn::Network<f64>;
pub type Autoencoder = autoencoder::AutoencoderModel<f32>;
pub type Autoencoder64 = autoencoder::AutoencoderModel<f64>;
