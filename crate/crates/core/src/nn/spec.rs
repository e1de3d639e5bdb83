use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

/// One layer descriptor. Shapes exclude the batch axis; image tensors are
/// `[height, width, channels]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        activation: Activation,
    },
    /// Transposed convolution: output side `(in - 1)·stride - 2·padding + kernel + output_padding`.
    ConvTranspose2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
        activation: Activation,
    },
    /// Nearest-neighbour upsampling by an integer factor.
    Upsample { factor: usize },
    /// Inverted dropout; identity at inference.
    Dropout { rate: f64 },
    /// Fully connected over the flattened input.
    Dense { inputs: usize, outputs: usize, activation: Activation },
    Reshape { shape: Vec<usize> },
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, activation: Activation) -> Self {
        LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, padding: kernel / 2, activation }
    }

    pub fn deconv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, activation: Activation) -> Self {
        LayerSpec::ConvTranspose2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding: kernel / 2,
            output_padding: stride - 1,
            activation,
        }
    }

    pub fn dense(inputs: usize, outputs: usize, activation: Activation) -> Self {
        LayerSpec::Dense { inputs, outputs, activation }
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let bad = |why: &str| NnError::InvalidSpec(format!("{why}: {self:?} on input {input:?}"));
        match self {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, padding, .. } => {
                let [h, w, c] = image(input).ok_or_else(|| bad("expects an image"))?;
                if c != *in_channels || *kernel == 0 || *stride == 0 {
                    return Err(bad("channel or geometry mismatch"));
                }
                if h + 2 * padding < *kernel || w + 2 * padding < *kernel {
                    return Err(bad("kernel larger than padded input"));
                }
                let oh = (h + 2 * padding - kernel) / stride + 1;
                let ow = (w + 2 * padding - kernel) / stride + 1;
                Ok(vec![oh, ow, *out_channels])
            }
            LayerSpec::ConvTranspose2d { in_channels, out_channels, kernel, stride, padding, output_padding, .. } => {
                let [h, w, c] = image(input).ok_or_else(|| bad("expects an image"))?;
                if c != *in_channels || *kernel == 0 || *stride == 0 || output_padding >= stride {
                    return Err(bad("channel or geometry mismatch"));
                }
                let side = |n: usize| ((n - 1) * stride + kernel + output_padding).checked_sub(2 * padding);
                match (side(h), side(w)) {
                    (Some(oh), Some(ow)) if oh > 0 && ow > 0 => Ok(vec![oh, ow, *out_channels]),
                    _ => Err(bad("padding larger than output")),
                }
            }
            LayerSpec::Upsample { factor } => {
                let [h, w, c] = image(input).ok_or_else(|| bad("expects an image"))?;
                if *factor == 0 {
                    return Err(bad("factor must be positive"));
                }
                Ok(vec![h * factor, w * factor, c])
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(rate) {
                    return Err(bad("rate must be in [0, 1)"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Dense { inputs, outputs, .. } => {
                if input.iter().product::<usize>() != *inputs {
                    return Err(bad("input size mismatch"));
                }
                Ok(vec![*outputs])
            }
            LayerSpec::Reshape { shape } => {
                if shape.iter().product::<usize>() != input.iter().product::<usize>() {
                    return Err(bad("element count mismatch"));
                }
                Ok(shape.clone())
            }
        }
    }

    pub fn activation(&self) -> Activation {
        match self {
            LayerSpec::Conv2d { activation, .. }
            | LayerSpec::ConvTranspose2d { activation, .. }
            | LayerSpec::Dense { activation, .. } => *activation,
            _ => Activation::Identity,
        }
    }

    /// Shapes of the learnable tensors: weight then bias.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match self {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                vec![vec![kernel * kernel * in_channels, *out_channels], vec![*out_channels]]
            }
            LayerSpec::ConvTranspose2d { in_channels, out_channels, kernel, .. } => {
                vec![vec![*in_channels, kernel * kernel * out_channels], vec![*out_channels]]
            }
            LayerSpec::Dense { inputs, outputs, .. } => vec![vec![*inputs, *outputs], vec![*outputs]],
            _ => Vec::new(),
        }
    }

    /// (fan_in, fan_out) used for initialization.
    pub fn fans(&self) -> (usize, usize) {
        match self {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. }
            | LayerSpec::ConvTranspose2d { in_channels, out_channels, kernel, .. } => {
                (kernel * kernel * in_channels, kernel * kernel * out_channels)
            }
            LayerSpec::Dense { inputs, outputs, .. } => (*inputs, *outputs),
            _ => (0, 0),
        }
    }
}

fn image(shape: &[usize]) -> Option<[usize; 3]> {
    match shape {
        [h, w, c] => Some([*h, *w, *c]),
        _ => None,
    }
}

/// An ordered stack of layers and the per-item input shape it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Self {
        Self { input_shape, layers }
    }

    /// Input shape followed by every layer's output shape; fails on the
    /// first incompatible layer.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>, NnError> {
        let mut shapes = vec![self.input_shape.clone()];
        for layer in &self.layers {
            let next = layer.output_shape(shapes.last().expect("non-empty"))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>, NnError> {
        Ok(self.shapes()?.pop().expect("non-empty"))
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("spec serializes");
        Sha256::digest(json).into()
    }
}
