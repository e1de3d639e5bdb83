use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::AeError;
use crate::level::{CHUNK_SIZE, NUM_TILE_CLASSES};
use crate::nn::{Activation, AdamConfig, LayerSpec, NetworkSpec};

pub const EMBEDDING_SIZE: usize = 512;

/// When to stop training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    /// An epoch counts as stalled when it improves on the best loss so far
    /// by less than this fraction.
    pub rel_tol: f64,
    /// Stop after this many consecutive stalled epochs.
    pub patience: usize,
    pub max_epochs: usize,
    /// Stop as soon as the epoch loss is at or below this value.
    #[serde(default)]
    pub target_loss: Option<f64>,
}

impl Default for Convergence {
    fn default() -> Self {
        Self { rel_tol: 1e-4, patience: 10, max_epochs: 2000, target_loss: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeConfig {
    pub n_labels: usize,
    /// `[height, width, channels]` of one input.
    pub input_shape: [usize; 3],
    /// Filters of the two encoder convolutions.
    pub filters: [usize; 2],
    pub kernel: usize,
    pub embedding_size: usize,
    pub dropout: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub convergence: Convergence,
    pub seed: u64,
}

impl AeConfig {
    /// The chunk-sized model: 8×8×30 in, 32/32 filters, 512-wide embedding.
    pub fn new(n_labels: usize, seed: u64) -> Self {
        Self {
            n_labels,
            input_shape: [CHUNK_SIZE, CHUNK_SIZE, NUM_TILE_CLASSES],
            filters: [32, 32],
            kernel: 3,
            embedding_size: EMBEDDING_SIZE,
            dropout: 0.3,
            adam: AdamConfig::default(),
            batch_size: 32,
            convergence: Convergence::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), AeError> {
        let bad = |m: String| Err(AeError::InvalidConfig(m));
        let [h, w, c] = self.input_shape;
        if h == 0 || w == 0 || c == 0 || h % 2 != 0 || w % 2 != 0 {
            return bad(format!("input {:?} must be non-empty with even height and width", self.input_shape));
        }
        if self.filters.contains(&0) || self.embedding_size == 0 {
            return bad("filter counts and embedding size must be positive".into());
        }
        if self.kernel.is_multiple_of(2) {
            return bad(format!("kernel {} must be odd", self.kernel));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return bad(format!("bad adam settings {a:?}"));
        }
        if self.convergence.max_epochs == 0 || self.convergence.patience == 0 {
            return bad("max_epochs and patience must be positive".into());
        }
        Ok(())
    }

    /// Flattened encoder output `S`.
    pub fn structure_features(&self) -> usize {
        let [h, w, _] = self.input_shape;
        (h / 2) * (w / 2) * self.filters[1]
    }

    pub fn input_features(&self) -> usize {
        self.input_shape.iter().product::<usize>() + self.n_labels
    }

    pub fn output_features(&self) -> usize {
        self.input_features()
    }

    pub fn encoder_spec(&self) -> NetworkSpec {
        let [_, _, c] = self.input_shape;
        let [f1, f2] = self.filters;
        NetworkSpec::new(
            self.input_shape.to_vec(),
            vec![
                LayerSpec::conv(c, f1, self.kernel, 1, Activation::Relu),
                LayerSpec::Dropout { rate: self.dropout },
                LayerSpec::conv(f1, f2, self.kernel, 2, Activation::Relu),
                LayerSpec::Reshape { shape: vec![self.structure_features()] },
            ],
        )
    }

    pub fn fc_in_spec(&self) -> NetworkSpec {
        let inputs = self.structure_features() + self.n_labels;
        NetworkSpec::new(vec![inputs], vec![LayerSpec::dense(inputs, self.embedding_size, Activation::Relu)])
    }

    /// Linear; the split relu/sigmoid activation is applied by the model.
    pub fn fc_out_spec(&self) -> NetworkSpec {
        let outputs = self.structure_features() + self.n_labels;
        NetworkSpec::new(
            vec![self.embedding_size],
            vec![LayerSpec::dense(self.embedding_size, outputs, Activation::Identity)],
        )
    }

    pub fn decoder_spec(&self) -> NetworkSpec {
        let [h, w, c] = self.input_shape;
        let f2 = self.filters[1];
        NetworkSpec::new(
            vec![self.structure_features()],
            vec![
                LayerSpec::Reshape { shape: vec![h / 2, w / 2, f2] },
                LayerSpec::Upsample { factor: 2 },
                LayerSpec::deconv(f2, f2, self.kernel, 1, Activation::Relu),
                LayerSpec::deconv(f2, c, self.kernel, 1, Activation::Sigmoid),
            ],
        )
    }

    /// Digest of the architecture only; training settings do not change it.
    pub fn spec_hash(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update((self.n_labels as u64).to_le_bytes());
        for spec in [self.encoder_spec(), self.fc_in_spec(), self.fc_out_spec(), self.decoder_spec()] {
            hasher.update(spec.hash());
        }
        hasher.finalize().into()
    }
}
