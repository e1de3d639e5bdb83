use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AeError, AeGrads, AutoencoderModel};
use crate::level::LabeledChunk;
use crate::nn::{AdamState, Mode, Tensor};
use crate::scalar::Scalar;

/// Inputs `[count, h, w, c]` with one optional label per item.
#[derive(Debug, Clone, PartialEq)]
pub struct AeDataset<T> {
    pub inputs: Tensor<T>,
    pub labels: Vec<Option<usize>>,
}

impl<T: Scalar> AeDataset<T> {
    pub fn new(inputs: Tensor<T>, labels: Vec<Option<usize>>) -> Result<Self, AeError> {
        if inputs.shape().is_empty() || inputs.batch() != labels.len() {
            return Err(AeError::ShapeMismatch { expected: vec![labels.len()], found: inputs.shape().to_vec() });
        }
        Ok(Self { inputs, labels })
    }

    /// Chunks keep their labels; "none" becomes an all-zero label vector.
    pub fn from_chunks(examples: &[LabeledChunk]) -> Self {
        let features = crate::level::CHUNK_FEATURES;
        let mut data = vec![T::zero(); examples.len() * features];
        for (ex, out) in examples.iter().zip(data.chunks_mut(features)) {
            ex.chunk.write_dense(out);
        }
        let s = crate::level::CHUNK_SIZE;
        let shape = [examples.len(), s, s, crate::level::NUM_TILE_CLASSES];
        Self {
            inputs: Tensor::from_vec(&shape, data).expect("sizes agree"),
            labels: examples.iter().map(|e| e.label).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The same inputs with every label dropped.
    pub fn without_labels(&self) -> Self {
        Self { inputs: self.inputs.clone(), labels: vec![None; self.labels.len()] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxEpochs,
    TargetLoss,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub final_loss: f64,
    pub best_loss: f64,
    pub stop: StopReason,
    pub seconds: f64,
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl<T: Scalar> AutoencoderModel<T> {
    /// Sum of squared errors over the batch and the gradients of the
    /// batch's mean loss.
    fn batch_gradients(
        &self,
        x: &Tensor<T>,
        labels: &[T],
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, AeGrads<T>), AeError> {
        let (y, head, cache) = self.forward_batch(x, labels, mode, rng)?;
        let per_item = (x.item_len() + self.config.n_labels) as f64;
        let scale = T::from_f64_lossy(2.0 / (x.batch() as f64 * per_item));
        let mut sq_sum = 0.0f64;
        let mut g_y = Vec::with_capacity(y.len());
        for (p, t) in y.data().iter().zip(x.data()) {
            let d = *p - *t;
            sq_sum += d.as_f64() * d.as_f64();
            g_y.push(d * scale);
        }
        let mut g_l = Vec::with_capacity(head.len());
        for (p, t) in head.iter().zip(labels) {
            let d = *p - *t;
            sq_sum += d.as_f64() * d.as_f64();
            g_l.push(d * scale);
        }
        let grads = self.backward_batch(&cache, &Tensor::from_vec(y.shape(), g_y)?, &g_l)?;
        Ok((sq_sum, grads))
    }

    /// Mean joint loss over the whole dataset as one batch, with gradients
    /// in [`params`](Self::params) order. Dropout masks come from `seed`.
    pub fn loss_and_gradients(
        &self,
        data: &AeDataset<T>,
        mode: Mode,
        seed: u64,
    ) -> Result<(f64, Vec<Tensor<T>>), AeError> {
        let labels = self.label_block(&data.labels)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (sq, g) = self.batch_gradients(&data.inputs, &labels, mode, &mut rng)?;
        let per_item = (data.inputs.item_len() + self.config.n_labels) as f64;
        let flat = g.encoder.into_iter().chain(g.fc_in).chain(g.fc_out).chain(g.decoder).collect();
        Ok((sq / (data.len() as f64 * per_item), flat))
    }

    /// Mean joint loss in inference mode.
    pub fn evaluate_loss(&self, data: &AeDataset<T>) -> Result<f64, AeError> {
        Ok(self.loss_and_gradients(data, Mode::Infer, 0)?.0)
    }

    pub fn train(&mut self, data: &AeDataset<T>) -> Result<TrainSummary, AeError> {
        self.train_with(data, |_, _| true)
    }

    /// Minibatch Adam on the joint structure + label MSE. `on_epoch`
    /// receives `(epoch, loss)` after every epoch and may return `false` to
    /// stop early.
    pub fn train_with(
        &mut self,
        data: &AeDataset<T>,
        mut on_epoch: impl FnMut(usize, f64) -> bool,
    ) -> Result<TrainSummary, AeError> {
        if data.is_empty() {
            return Err(AeError::EmptyDataset);
        }
        let item_shape = self.config.input_shape;
        if &data.inputs.shape()[1..] != item_shape.as_slice() {
            let mut expected = vec![data.len()];
            expected.extend(item_shape);
            return Err(AeError::ShapeMismatch { expected, found: data.inputs.shape().to_vec() });
        }
        let n = self.config.n_labels;
        let all_labels = self.label_block(&data.labels)?;

        let started = Instant::now();
        let cfg = self.config.clone();
        let mut adam = [
            AdamState::new(cfg.adam, self.encoder.params()),
            AdamState::new(cfg.adam, self.fc_in.params()),
            AdamState::new(cfg.adam, self.fc_out.params()),
            AdamState::new(cfg.adam, self.decoder.params()),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, self.log.len() as u64));
        let item = data.inputs.item_len();
        let per_item = (item + n) as f64;
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut best = f64::INFINITY;
        let mut stalled = 0usize;
        let mut epochs = 0usize;
        let stop = loop {
            if epochs == cfg.convergence.max_epochs {
                break StopReason::MaxEpochs;
            }
            order.shuffle(&mut rng);
            let mut sq_sum = 0.0f64;
            for batch in order.chunks(cfg.batch_size) {
                let b = batch.len();
                let mut x = Vec::with_capacity(b * item);
                let mut lab = Vec::with_capacity(b * n);
                for &i in batch {
                    x.extend_from_slice(data.inputs.item(i));
                    lab.extend_from_slice(&all_labels[i * n..(i + 1) * n]);
                }
                let mut shape = vec![b];
                shape.extend(item_shape);
                let x = Tensor::from_vec(&shape, x)?;
                let (sq, grads) = self.batch_gradients(&x, &lab, Mode::Train, &mut rng)?;
                sq_sum += sq;
                adam[0].update(self.encoder.params_mut(), &grads.encoder);
                adam[1].update(self.fc_in.params_mut(), &grads.fc_in);
                adam[2].update(self.fc_out.params_mut(), &grads.fc_out);
                adam[3].update(self.decoder.params_mut(), &grads.decoder);
            }
            let loss = sq_sum / (data.len() as f64 * per_item);
            if !loss.is_finite() {
                return Err(AeError::Format(format!("training diverged at epoch {}", self.log.len())));
            }
            self.log.push(loss);
            epochs += 1;
            if !on_epoch(self.log.len(), loss) {
                break StopReason::Cancelled;
            }
            if cfg.convergence.target_loss.is_some_and(|t| loss <= t) {
                break StopReason::TargetLoss;
            }
            if best.is_finite() && (best - loss) / best >= cfg.convergence.rel_tol {
                stalled = 0;
            } else if best.is_finite() {
                stalled += 1;
            }
            best = best.min(loss);
            if stalled >= cfg.convergence.patience {
                break StopReason::Converged;
            }
        };
        let final_loss = self.log.last().copied().unwrap_or(f64::NAN);
        Ok(TrainSummary {
            epochs,
            final_loss,
            best_loss: best.min(final_loss),
            stop,
            seconds: started.elapsed().as_secs_f64(),
        })
    }
}
