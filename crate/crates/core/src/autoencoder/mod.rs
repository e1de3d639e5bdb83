//! Label-conditioned convolutional autoencoder.
//!
//! ```text
//! chunk ─ conv 3×3 s1 relu ─ dropout ─ conv 3×3 s2 relu ─ flatten (S)
//!        ⧺ label one-hot (n) ─ dense relu → embedding (E)
//!        ─ dense → [structure (S, relu) | label head (n, sigmoid)]
//! structure ─ reshape ─ upsample ×2 ─ deconv 3×3 relu ─ deconv 3×3 sigmoid → chunk
//! ```
//!
//! With `n_labels = 0` the concatenation and the label head vanish.

mod config;
mod persist;
mod train;
mod transfer;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{AeConfig, Convergence, EMBEDDING_SIZE};
pub use persist::{AeManifest, AE_FORMAT, AE_FORMAT_VERSION};
pub use train::{AeDataset, StopReason, TrainSummary};

use crate::level::{decode_chunk, Chunk, LabelVocabulary, LevelError, LevelGrid};
use crate::nn::{self, Activation, ForwardCache, Mode, Network, NnError, Tensor};
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum AeError {
    #[error("invalid autoencoder config: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("model has not been trained")]
    NotTrained,
    #[error("unknown label {0}")]
    UnknownLabel(String),
    #[error("incompatible parent: {0}")]
    IncompatibleParent(String),
    #[error("vocabulary mismatch: model expects {expected}, found {found}")]
    VocabularyMismatch { expected: String, found: String },
    #[error(transparent)]
    Nn(NnError),
    #[error(transparent)]
    Level(#[from] LevelError),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<NnError> for AeError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::ShapeMismatch { expected, found } => AeError::ShapeMismatch { expected, found },
            other => AeError::Nn(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    FromScratch,
    Transfer { parent: String },
}

/// Output of one inference pass for a single chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction<T> {
    /// `[h, w, c]`, every value in `[0, 1]`.
    pub structure: Tensor<T>,
    /// Label head, `n_labels` values in `[0, 1]`.
    pub labels: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub grid: LevelGrid,
    /// Every vocabulary label with its head activation, strongest first.
    pub predicted_labels: Vec<(String, f64)>,
    /// Raw label head in vocabulary order.
    pub label_head: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AutoencoderModel<T> {
    config: AeConfig,
    vocabulary: Option<LabelVocabulary>,
    pub(crate) encoder: Network<T>,
    pub(crate) fc_in: Network<T>,
    pub(crate) fc_out: Network<T>,
    pub(crate) decoder: Network<T>,
    log: Vec<f64>,
    provenance: Provenance,
}

pub(crate) struct AeCache<T> {
    enc: ForwardCache<T>,
    fc_in: ForwardCache<T>,
    fc_out: ForwardCache<T>,
    /// Post-activation output of `fc_out`, `[batch, S + n]`.
    head: Vec<T>,
    dec: ForwardCache<T>,
}

pub(crate) struct AeGrads<T> {
    pub encoder: Vec<Tensor<T>>,
    pub fc_in: Vec<Tensor<T>>,
    pub fc_out: Vec<Tensor<T>>,
    pub decoder: Vec<Tensor<T>>,
}

impl<T: Scalar> AutoencoderModel<T> {
    /// Fresh, randomly initialised model. `vocabulary` must have exactly
    /// `config.n_labels` names when given; it is required for
    /// [`generate`](Self::generate).
    pub fn build(config: AeConfig, vocabulary: Option<&LabelVocabulary>) -> Result<Self, AeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut model = Self::zeroed(config, vocabulary)?;
        model.encoder = Network::init(model.config.encoder_spec(), &mut rng)?;
        model.fc_in = Network::init(model.config.fc_in_spec(), &mut rng)?;
        model.fc_out = Network::init(model.config.fc_out_spec(), &mut rng)?;
        model.decoder = Network::init(model.config.decoder_spec(), &mut rng)?;
        // The label columns of fc_out feed a sigmoid, so they get the
        // Glorot-uniform draw instead of He-normal.
        let (s, n, e) = (model.config.structure_features(), model.config.n_labels, model.config.embedding_size);
        if n > 0 {
            let spec = nn::LayerSpec::dense(e, n, Activation::Sigmoid);
            let mut cols = vec![T::zero(); e * n];
            nn::init_layer_weight(&spec, &mut cols, &mut rng);
            let w = model.fc_out.params_mut()[0].data_mut();
            for r in 0..e {
                w[r * (s + n) + s..(r + 1) * (s + n)].copy_from_slice(&cols[r * n..(r + 1) * n]);
            }
        }
        // Each cell is one-hot over c channels: start the output at p = 1/c.
        let c = model.config.input_shape[2] as f64;
        let prior = T::from_f64_lossy(-(c - 1.0).max(1.0).ln());
        if let Some(bias) = model.decoder.params_mut().last_mut() {
            bias.data_mut().iter_mut().for_each(|b| *b = prior);
        }
        Ok(model)
    }

    pub(crate) fn zeroed(config: AeConfig, vocabulary: Option<&LabelVocabulary>) -> Result<Self, AeError> {
        config.validate()?;
        if let Some(v) = vocabulary {
            if v.len() != config.n_labels {
                return Err(AeError::InvalidConfig(format!(
                    "vocabulary has {} labels but n_labels = {}",
                    v.len(),
                    config.n_labels
                )));
            }
        }
        Ok(Self {
            encoder: Network::zeroed(config.encoder_spec())?,
            fc_in: Network::zeroed(config.fc_in_spec())?,
            fc_out: Network::zeroed(config.fc_out_spec())?,
            decoder: Network::zeroed(config.decoder_spec())?,
            vocabulary: vocabulary.cloned(),
            config,
            log: Vec::new(),
            provenance: Provenance::FromScratch,
        })
    }

    pub fn config(&self) -> &AeConfig {
        &self.config
    }

    pub fn vocabulary(&self) -> Option<&LabelVocabulary> {
        self.vocabulary.as_ref()
    }

    pub fn n_labels(&self) -> usize {
        self.config.n_labels
    }

    /// Per-epoch training loss across every `train` call so far.
    pub fn log(&self) -> &[f64] {
        &self.log
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.log.last().copied()
    }

    pub fn is_trained(&self) -> bool {
        !self.log.is_empty()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn encoder(&self) -> &Network<T> {
        &self.encoder
    }

    pub fn fc_in(&self) -> &Network<T> {
        &self.fc_in
    }

    pub fn fc_out(&self) -> &Network<T> {
        &self.fc_out
    }

    pub fn decoder(&self) -> &Network<T> {
        &self.decoder
    }

    /// All parameter tensors: encoder, fc_in, fc_out, decoder.
    pub fn params(&self) -> Vec<Tensor<T>> {
        [&self.encoder, &self.fc_in, &self.fc_out, &self.decoder]
            .iter()
            .flat_map(|n| n.params().iter().cloned())
            .collect()
    }

    pub fn set_params(&mut self, params: Vec<Tensor<T>>) -> Result<(), AeError> {
        let counts = [self.encoder.params().len(), self.fc_in.params().len(), self.fc_out.params().len()];
        let total = counts.iter().sum::<usize>() + self.decoder.params().len();
        if params.len() != total {
            return Err(AeError::ShapeMismatch { expected: vec![total], found: vec![params.len()] });
        }
        let mut it = params.into_iter();
        self.encoder.set_params(it.by_ref().take(counts[0]).collect())?;
        self.fc_in.set_params(it.by_ref().take(counts[1]).collect())?;
        self.fc_out.set_params(it.by_ref().take(counts[2]).collect())?;
        self.decoder.set_params(it.collect())?;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.fc_in.param_count() + self.fc_out.param_count() + self.decoder.param_count()
    }

    /// Features fed into the first dense layer: `h·w·c + n`.
    pub fn input_features(&self) -> usize {
        self.config.input_features()
    }

    pub fn spec_hash(&self) -> [u8; 32] {
        self.config.spec_hash()
    }

    /// Short content id derived from the architecture and weights.
    pub fn id(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.spec_hash());
        let mut buf = Vec::new();
        for t in self.params() {
            buf.clear();
            t.data().iter().for_each(|v| v.write_le(&mut buf));
            hasher.update(&buf);
        }
        hex::encode(&hasher.finalize()[..8])
    }

    fn label_block(&self, labels: &[Option<usize>]) -> Result<Vec<T>, AeError> {
        let n = self.config.n_labels;
        let mut out = vec![T::zero(); labels.len() * n];
        for (b, l) in labels.iter().enumerate() {
            if let Some(i) = *l {
                if n == 0 {
                    continue;
                }
                if i >= n {
                    return Err(AeError::UnknownLabel(format!("index {i} with {n} labels")));
                }
                out[b * n + i] = T::one();
            }
        }
        Ok(out)
    }

    /// Batched forward. `labels` is `[batch · n]`.
    pub(crate) fn forward_batch(
        &self,
        x: &Tensor<T>,
        labels: &[T],
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor<T>, Vec<T>, AeCache<T>), AeError> {
        let (s, n) = (self.config.structure_features(), self.config.n_labels);
        let (enc_out, enc) = self.encoder.forward(x, mode, rng)?;
        let batch = enc_out.batch();
        if labels.len() != batch * n {
            return Err(AeError::ShapeMismatch { expected: vec![batch, n], found: vec![labels.len()] });
        }
        let z = if n == 0 {
            enc_out
        } else {
            let mut z = Vec::with_capacity(batch * (s + n));
            for b in 0..batch {
                z.extend_from_slice(enc_out.item(b));
                z.extend_from_slice(&labels[b * n..(b + 1) * n]);
            }
            Tensor::from_vec(&[batch, s + n], z)?
        };
        let (emb, fc_in) = self.fc_in.forward(&z, mode, rng)?;
        let (mut head, fc_out) = self.fc_out.forward(&emb, mode, rng)?;
        let mut structure = Vec::with_capacity(batch * s);
        let mut label_out = Vec::with_capacity(batch * n);
        for row in head.data_mut().chunks_mut(s + n) {
            let (st, lb) = row.split_at_mut(s);
            nn::activate(st, Activation::Relu);
            nn::activate(lb, Activation::Sigmoid);
            structure.extend_from_slice(st);
            label_out.extend_from_slice(lb);
        }
        let (y, dec) = self.decoder.forward(&Tensor::from_vec(&[batch, s], structure)?, mode, rng)?;
        let cache = AeCache { enc, fc_in, fc_out, head: head.into_data(), dec };
        Ok((y, label_out, cache))
    }

    pub(crate) fn backward_batch(
        &self,
        cache: &AeCache<T>,
        g_structure: &Tensor<T>,
        g_labels: &[T],
    ) -> Result<AeGrads<T>, AeError> {
        let (s, n) = (self.config.structure_features(), self.config.n_labels);
        let dec = self.decoder.backward(&cache.dec, g_structure, true)?;
        let g_s = dec.input.expect("input gradient requested");
        let batch = g_s.batch();
        let mut g_head = Vec::with_capacity(batch * (s + n));
        for b in 0..batch {
            g_head.extend_from_slice(g_s.item(b));
            g_head.extend_from_slice(&g_labels[b * n..(b + 1) * n]);
        }
        for (row, out) in g_head.chunks_mut(s + n).zip(cache.head.chunks(s + n)) {
            let (gs, gl) = row.split_at_mut(s);
            let (os, ol) = out.split_at(s);
            nn::activation_backward(gs, os, Activation::Relu);
            nn::activation_backward(gl, ol, Activation::Sigmoid);
        }
        let fc_out = self.fc_out.backward(&cache.fc_out, &Tensor::from_vec(&[batch, s + n], g_head)?, true)?;
        let fc_in = self.fc_in.backward(&cache.fc_in, &fc_out.input.expect("input gradient requested"), true)?;
        let g_z = fc_in.input.expect("input gradient requested");
        let g_enc: Vec<T> = if n == 0 {
            g_z.into_data()
        } else {
            g_z.data().chunks(s + n).flat_map(|row| row[..s].iter().copied()).collect()
        };
        let enc = self.encoder.backward(&cache.enc, &Tensor::from_vec(&[batch, s], g_enc)?, false)?;
        Ok(AeGrads { encoder: enc.params, fc_in: fc_in.params, fc_out: fc_out.params, decoder: dec.params })
    }

    /// Inference over a batch `[batch, h, w, c]` without the trained check.
    /// Returns structure `[batch, h, w, c]` and the label head `[batch · n]`.
    pub fn infer_batch(&self, x: &Tensor<T>, labels: &[Option<usize>]) -> Result<(Tensor<T>, Vec<T>), AeError> {
        let block = self.label_block(labels)?;
        let (y, l, _) = self.forward_batch(x, &block, Mode::Infer, &mut ChaCha8Rng::seed_from_u64(0))?;
        Ok((y, l))
    }

    /// The `E`-dimensional embedding of one input.
    pub fn embed(&self, x: &Tensor<T>, label: Option<usize>) -> Result<Vec<T>, AeError> {
        let x = self.single(x)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = self.encoder.forward(&x, Mode::Infer, &mut rng)?.0;
        let mut z = enc.into_data();
        z.extend(self.label_block(&[label])?);
        let len = z.len();
        Ok(self.fc_in.forward(&Tensor::from_vec(&[1, len], z)?, Mode::Infer, &mut rng)?.0.into_data())
    }

    fn single(&self, x: &Tensor<T>) -> Result<Tensor<T>, AeError> {
        let want = self.config.input_shape.to_vec();
        if x.shape() == want.as_slice() {
            let mut shape = vec![1];
            shape.extend(&want);
            return Ok(x.clone().reshape(&shape)?);
        }
        let mut batched = vec![1];
        batched.extend(&want);
        if x.shape() == batched.as_slice() {
            return Ok(x.clone());
        }
        Err(AeError::ShapeMismatch { expected: want, found: x.shape().to_vec() })
    }

    /// Reconstruct one input `[h, w, c]` under an optional label.
    pub fn reconstruct_tensor(&self, x: &Tensor<T>, label: Option<usize>) -> Result<Reconstruction<T>, AeError> {
        if !self.is_trained() {
            return Err(AeError::NotTrained);
        }
        let (y, labels) = self.infer_batch(&self.single(x)?, &[label])?;
        let structure = y.reshape(&self.config.input_shape)?;
        Ok(Reconstruction { structure, labels })
    }

    pub fn reconstruct(&self, chunk: &Chunk, label: Option<usize>) -> Result<Reconstruction<T>, AeError> {
        self.reconstruct_tensor(&self.chunk_tensor(chunk)?, label)
    }

    fn chunk_tensor(&self, chunk: &Chunk) -> Result<Tensor<T>, AeError> {
        let shape = self.config.input_shape;
        Ok(Tensor::from_vec(&shape, chunk.to_dense::<T>())?)
    }

    /// Condition on `desired_label`, decode the structure at `threshold`
    /// and report the label head as the model's own description of what it
    /// produced.
    pub fn generate(&self, context: &Chunk, desired_label: usize, threshold: f64) -> Result<Generation, AeError> {
        let vocab = self.vocabulary.as_ref().filter(|v| !v.is_empty()).ok_or_else(|| {
            AeError::UnknownLabel(format!("index {desired_label}: model has no label vocabulary"))
        })?;
        if desired_label >= vocab.len() {
            return Err(AeError::UnknownLabel(format!("index {desired_label} with {} labels", vocab.len())));
        }
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(AeError::InvalidConfig(format!("threshold {threshold} outside (0, 1)")));
        }
        let r = self.reconstruct(context, Some(desired_label))?;
        let grid = decode_chunk(r.structure.data(), T::from_f64_lossy(threshold))?;
        let label_head: Vec<f64> = r.labels.iter().map(|v| v.as_f64()).collect();
        let mut predicted_labels: Vec<(String, f64)> =
            vocab.names().iter().cloned().zip(label_head.iter().copied()).collect();
        predicted_labels.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(Generation { grid, predicted_labels, label_head })
    }

    pub fn generate_named(&self, context: &Chunk, label: &str, threshold: f64) -> Result<Generation, AeError> {
        let index = self
            .vocabulary
            .as_ref()
            .and_then(|v| v.index_of(label))
            .ok_or_else(|| AeError::UnknownLabel(label.to_string()))?;
        self.generate(context, index, threshold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_counts_follow_label_count() {
        let m0 = AutoencoderModel::<f32>::build(AeConfig::new(0, 1), None).unwrap();
        assert_eq!(m0.input_features(), 1920);
        let vocab = LabelVocabulary::new((0..21).map(|i| format!("p{i}"))).unwrap();
        let m21 = AutoencoderModel::<f32>::build(AeConfig::new(21, 1), Some(&vocab)).unwrap();
        assert_eq!(m21.input_features(), 1941);
        let x = Tensor::<f32>::full(&[8, 8, 30], 0.0);
        assert_eq!(m0.embed(&x, None).unwrap().len(), 512);
        assert_eq!(m21.embed(&x, Some(3)).unwrap().len(), 512);
    }

    #[test]
    fn vocabulary_must_match_label_count() {
        let vocab = LabelVocabulary::new(["a", "b"]).unwrap();
        assert!(matches!(
            AutoencoderModel::<f32>::build(AeConfig::new(3, 1), Some(&vocab)),
            Err(AeError::InvalidConfig(_))
        ));
    }

    #[test]
    fn untrained_model_refuses_reconstruction() {
        let m = AutoencoderModel::<f32>::build(AeConfig::new(0, 1), None).unwrap();
        let chunk = Chunk::from_grid(&LevelGrid::empty(8, 8).unwrap()).unwrap();
        assert!(matches!(m.reconstruct(&chunk, None), Err(AeError::NotTrained)));
    }
}
