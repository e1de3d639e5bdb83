//! Convolutional baseline classifier: the autoencoder's encoder stack with a
//! linear head, trained on softmax cross-entropy.

use patterncraft_core::autoencoder::Convergence;
use patterncraft_core::level::{LabeledChunk, CHUNK_FEATURES, CHUNK_SIZE, NUM_TILE_CLASSES};
use patterncraft_core::nn::{Activation, AdamConfig, AdamState, LayerSpec, Mode, Network, NetworkSpec, Tensor};
use patterncraft_core::Scalar;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnConfig {
    pub filters: [usize; 2],
    pub kernel: usize,
    pub dropout: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub convergence: Convergence,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            filters: [32, 32],
            kernel: 3,
            dropout: 0.3,
            adam: AdamConfig::default(),
            batch_size: 32,
            convergence: Convergence { max_epochs: 200, ..Convergence::default() },
        }
    }
}

impl CnnConfig {
    fn spec(&self, n_classes: usize) -> NetworkSpec {
        let [f1, f2] = self.filters;
        let flat = (CHUNK_SIZE / 2) * (CHUNK_SIZE / 2) * f2;
        NetworkSpec::new(
            vec![CHUNK_SIZE, CHUNK_SIZE, NUM_TILE_CLASSES],
            vec![
                LayerSpec::conv(NUM_TILE_CLASSES, f1, self.kernel, 1, Activation::Relu),
                LayerSpec::Dropout { rate: self.dropout },
                LayerSpec::conv(f1, f2, self.kernel, 2, Activation::Relu),
                LayerSpec::Reshape { shape: vec![flat] },
                LayerSpec::dense(flat, n_classes, Activation::Identity),
            ],
        )
    }
}

#[derive(Debug, Clone)]
pub struct CnnClassifier<T> {
    pub config: CnnConfig,
    /// Pattern labels plus the trailing "none" class.
    pub n_classes: usize,
    net: Network<T>,
    log: Vec<f64>,
}

fn inputs<T: Scalar>(examples: &[LabeledChunk]) -> Tensor<T> {
    let mut data = vec![T::zero(); examples.len() * CHUNK_FEATURES];
    for (ex, out) in examples.iter().zip(data.chunks_mut(CHUNK_FEATURES)) {
        ex.chunk.write_dense(out);
    }
    Tensor::from_vec(&[examples.len(), CHUNK_SIZE, CHUNK_SIZE, NUM_TILE_CLASSES], data).expect("sizes agree")
}

/// Softmax in place over each row; returns the summed cross-entropy.
fn softmax_xent<T: Scalar>(logits: &mut [T], classes: &[usize], n: usize) -> f64 {
    let mut total = 0.0;
    for (row, &c) in logits.chunks_mut(n).zip(classes) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
        total -= row[c].as_f64().max(1e-300).ln();
    }
    total
}

impl<T: Scalar> CnnClassifier<T> {
    pub fn new(config: CnnConfig, n_labels: usize, seed: u64) -> Result<Self, EvalError> {
        let n_classes = n_labels + 1;
        let net = Network::init(config.spec(n_classes), &mut ChaCha8Rng::seed_from_u64(seed))?;
        Ok(Self { config, n_classes, net, log: Vec::new() })
    }

    pub fn log(&self) -> &[f64] {
        &self.log
    }

    /// Minibatch Adam until the loss stops improving on its best by
    /// `rel_tol` for `patience` epochs, or `max_epochs`.
    pub fn fit(&mut self, examples: &[LabeledChunk], seed: u64) -> Result<usize, EvalError> {
        if examples.is_empty() {
            return Err(EvalError::InsufficientData("no training examples".into()));
        }
        let n = self.n_classes;
        let x = inputs::<T>(examples);
        let classes: Vec<usize> = examples.iter().map(|e| e.class_index(n - 1)).collect();
        if let Some(bad) = classes.iter().find(|c| **c >= n) {
            return Err(EvalError::InsufficientData(format!("label {bad} outside {} classes", n - 1)));
        }
        let mut adam = AdamState::new(self.config.adam, self.net.params());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let conv = self.config.convergence;
        let (mut best, mut stalled) = (f64::INFINITY, 0);
        for epoch in 0..conv.max_epochs {
            order.shuffle(&mut rng);
            let mut loss = 0.0;
            for batch in order.chunks(self.config.batch_size) {
                let mut xb = Vec::with_capacity(batch.len() * CHUNK_FEATURES);
                batch.iter().for_each(|&i| xb.extend_from_slice(x.item(i)));
                let xb = Tensor::from_vec(&[batch.len(), CHUNK_SIZE, CHUNK_SIZE, NUM_TILE_CLASSES], xb)?;
                let cb: Vec<usize> = batch.iter().map(|&i| classes[i]).collect();
                let (logits, cache) = self.net.forward(&xb, Mode::Train, &mut rng)?;
                let mut probs = logits.into_data();
                loss += softmax_xent(&mut probs, &cb, n);
                let scale = T::from_f64_lossy(1.0 / batch.len() as f64);
                for (row, &c) in probs.chunks_mut(n).zip(&cb) {
                    row[c] -= T::one();
                    row.iter_mut().for_each(|v| *v *= scale);
                }
                let g = self.net.backward(&cache, &Tensor::from_vec(&[batch.len(), n], probs)?, false)?;
                adam.update(self.net.params_mut(), &g.params);
            }
            let loss = loss / examples.len() as f64;
            if !loss.is_finite() {
                return Err(EvalError::InsufficientData(format!("cnn training diverged at epoch {epoch}")));
            }
            self.log.push(loss);
            if conv.target_loss.is_some_and(|t| loss <= t) {
                return Ok(epoch + 1);
            }
            if best.is_finite() && (best - loss) / best < conv.rel_tol {
                stalled += 1;
            } else if best.is_finite() {
                stalled = 0;
            }
            best = best.min(loss);
            if stalled >= conv.patience {
                return Ok(epoch + 1);
            }
        }
        Ok(conv.max_epochs)
    }

    /// Class index per example, "none" being `n_classes - 1`.
    pub fn predict(&self, examples: &[LabeledChunk]) -> Result<Vec<usize>, EvalError> {
        let mut out = Vec::with_capacity(examples.len());
        for part in examples.chunks(256) {
            let logits = self.net.infer(&inputs::<T>(part))?;
            out.extend(logits.data().chunks(self.n_classes).map(|row| {
                row.iter().enumerate().fold(0, |arg, (i, v)| if *v > row[arg] { i } else { arg })
            }));
        }
        Ok(out)
    }

    pub fn accuracy(&self, examples: &[LabeledChunk]) -> Result<f64, EvalError> {
        if examples.is_empty() {
            return Ok(0.0);
        }
        let pred = self.predict(examples)?;
        let hits = pred.iter().zip(examples).filter(|(p, e)| **p == e.class_index(self.n_classes - 1)).count();
        Ok(hits as f64 / examples.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use patterncraft_core::level::{Chunk, LevelGrid};

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let logits = [0.3f64, -1.2, 2.0, 0.1, 0.0, -0.5];
        let classes = [2, 0];
        let loss = |l: &[f64]| softmax_xent(&mut l.to_vec(), &classes, 3);
        let mut probs = logits.to_vec();
        softmax_xent(&mut probs, &classes, 3);
        for (row, &c) in probs.chunks_mut(3).zip(&classes) {
            row[c] -= 1.0;
        }
        for i in 0..logits.len() {
            let (mut up, mut down) = (logits, logits);
            up[i] += 1e-6;
            down[i] -= 1e-6;
            let numeric = (loss(&up) - loss(&down)) / 2e-6;
            assert!((numeric - probs[i]).abs() < 1e-6, "{i}: {numeric} vs {}", probs[i]);
        }
    }

    #[test]
    fn learns_two_separable_classes() {
        let chunk = |tile: u8| {
            let mut g = LevelGrid::empty(8, 8).unwrap();
            (0..8).for_each(|x| g.set(x, 7, Some(tile)));
            Chunk::from_grid(&g).unwrap()
        };
        let ex: Vec<LabeledChunk> =
            (0..8).map(|i| LabeledChunk::new(chunk(if i % 2 == 0 { 0 } else { 6 }), (i % 2 == 0).then_some(0))).collect();
        let mut cnn = CnnClassifier::<f32>::new(CnnConfig::default(), 1, 3).unwrap();
        let epochs = cnn.fit(&ex, 4).unwrap();
        assert!(epochs > 0 && cnn.log().len() == epochs);
        assert_eq!(cnn.accuracy(&ex).unwrap(), 1.0);
        assert_eq!(cnn.predict(&ex[..2]).unwrap(), vec![0, 1]);
    }
}
