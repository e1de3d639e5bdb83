use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::layers::{self, LayerCache};
use super::{Activation, LayerSpec, Mode, NetworkSpec, NnError, Tensor};
use crate::scalar::Scalar;

/// A feed-forward stack built from a [`NetworkSpec`]. Parameters are kept
/// as one flat list, two tensors (weight, bias) per parametrised layer.
#[derive(Debug, Clone)]
pub struct Network<T> {
    spec: NetworkSpec,
    shapes: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    params: Vec<Tensor<T>>,
}

/// Activations saved by a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    batch: usize,
    layers: Vec<LayerCache<T>>,
}

impl<T> ForwardCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Debug, Clone)]
pub struct Gradients<T> {
    /// Same order and shapes as [`Network::params`].
    pub params: Vec<Tensor<T>>,
    /// Gradient with respect to the network input, if requested.
    pub input: Option<Tensor<T>>,
}

impl<T: Scalar> Network<T> {
    /// Build with zeroed parameters.
    pub fn zeroed(spec: NetworkSpec) -> Result<Self, NnError> {
        let shapes = spec.shapes()?;
        let mut offsets = Vec::with_capacity(spec.layers.len());
        let mut params = Vec::new();
        for layer in &spec.layers {
            offsets.push(params.len());
            params.extend(layer.param_shapes().iter().map(|s| Tensor::zeros(s)));
        }
        Ok(Self { spec, shapes, offsets, params })
    }

    /// He-normal weights for relu and identity layers, Glorot-uniform for
    /// sigmoid layers, zero biases.
    pub fn init(spec: NetworkSpec, rng: &mut impl Rng) -> Result<Self, NnError> {
        let mut net = Self::zeroed(spec)?;
        for (i, layer) in net.spec.layers.iter().enumerate() {
            if layer.param_shapes().is_empty() {
                continue;
            }
            let (fan_in, fan_out) = layer.fans();
            let w = &mut net.params[net.offsets[i]];
            init_weight(w.data_mut(), layer.activation(), fan_in, fan_out, rng);
        }
        Ok(net)
    }

    pub fn seeded(spec: NetworkSpec, seed: u64) -> Result<Self, NnError> {
        Self::init(spec, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().expect("shapes include the input")
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    /// Replace all parameters; shapes must match.
    pub fn set_params(&mut self, params: Vec<Tensor<T>>) -> Result<(), NnError> {
        if params.len() != self.params.len() {
            return Err(NnError::ShapeMismatch { expected: vec![self.params.len()], found: vec![params.len()] });
        }
        for (have, new) in self.params.iter().zip(&params) {
            if have.shape() != new.shape() {
                return Err(NnError::ShapeMismatch { expected: have.shape().to_vec(), found: new.shape().to_vec() });
            }
        }
        self.params = params;
        Ok(())
    }

    /// Parameter tensors belonging to layer `i` (empty for stateless layers).
    pub fn layer_params(&self, i: usize) -> &[Tensor<T>] {
        let n = self.spec.layers[i].param_shapes().len();
        &self.params[self.offsets[i]..self.offsets[i] + n]
    }

    pub fn layer_params_mut(&mut self, i: usize) -> &mut [Tensor<T>] {
        let n = self.spec.layers[i].param_shapes().len();
        &mut self.params[self.offsets[i]..self.offsets[i] + n]
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<usize, NnError> {
        let item = &self.shapes[0];
        if input.shape().len() != item.len() + 1 || &input.shape()[1..] != item.as_slice() {
            let mut expected = vec![input.batch()];
            expected.extend(item);
            return Err(NnError::ShapeMismatch { expected, found: input.shape().to_vec() });
        }
        Ok(input.batch())
    }

    /// Forward a batch `[batch, ..input_shape]`. Dropout draws from `rng` in
    /// train mode only.
    pub fn forward(
        &self,
        input: &Tensor<T>,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor<T>, ForwardCache<T>), NnError> {
        let batch = self.check_input(input)?;
        let mut x = input.data().to_vec();
        let mut caches = Vec::with_capacity(self.spec.layers.len());
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let p: Vec<&[T]> = self.layer_params(i).iter().map(Tensor::data).collect();
            let (y, cache) = layers::forward(layer, &self.shapes[i], &self.shapes[i + 1], &p, &x, batch, mode, rng);
            caches.push(cache);
            x = y;
        }
        let mut shape = vec![batch];
        shape.extend(self.output_shape());
        Ok((Tensor::from_vec(&shape, x)?, ForwardCache { batch, layers: caches }))
    }

    pub fn forward_seeded(
        &self,
        input: &Tensor<T>,
        mode: Mode,
        seed: u64,
    ) -> Result<(Tensor<T>, ForwardCache<T>), NnError> {
        self.forward(input, mode, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Inference-mode forward without keeping a cache.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        Ok(self.forward(input, Mode::Infer, &mut ChaCha8Rng::seed_from_u64(0))?.0)
    }

    /// Backpropagate `grad_out` (d loss / d output) through the cached pass.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        grad_out: &Tensor<T>,
        need_input_grad: bool,
    ) -> Result<Gradients<T>, NnError> {
        let batch = cache.batch;
        let mut expected = vec![batch];
        expected.extend(self.output_shape());
        if grad_out.shape() != expected.as_slice() {
            return Err(NnError::ShapeMismatch { expected, found: grad_out.shape().to_vec() });
        }
        let mut grads: Vec<Tensor<T>> = self.params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        let mut g = grad_out.data().to_vec();
        for i in (0..self.spec.layers.len()).rev() {
            let layer = &self.spec.layers[i];
            let p: Vec<&[T]> = self.layer_params(i).iter().map(Tensor::data).collect();
            let want_dx = i > 0 || need_input_grad;
            let (dp, dx) = layers::backward(
                layer,
                &self.shapes[i],
                &self.shapes[i + 1],
                &p,
                &cache.layers[i],
                &g,
                batch,
                want_dx,
            );
            for (k, d) in dp.into_iter().enumerate() {
                let slot = &mut grads[self.offsets[i] + k];
                *slot = Tensor::from_vec(slot.shape(), d)?;
            }
            match dx {
                Some(dx) => g = dx,
                None => break,
            }
        }
        let input = if need_input_grad {
            let mut shape = vec![batch];
            shape.extend(self.input_shape());
            Some(Tensor::from_vec(&shape, g)?)
        } else {
            None
        };
        Ok(Gradients { params: grads, input })
    }
}

fn init_weight<T: Scalar>(w: &mut [T], act: Activation, fan_in: usize, fan_out: usize, rng: &mut impl Rng) {
    match act {
        Activation::Sigmoid => {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            w.iter_mut().for_each(|v| *v = T::from_f64_lossy(dist.sample(rng)));
        }
        Activation::Relu | Activation::Identity => {
            let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            w.iter_mut().for_each(|v| *v = T::from_f64_lossy(dist.sample(rng)));
        }
    }
}

/// Layer-wise initialisation for a standalone weight tensor, used by code
/// that assembles parameters outside a [`Network`].
pub(crate) fn init_layer_weight<T: Scalar>(layer: &LayerSpec, w: &mut [T], rng: &mut impl Rng) {
    let (fan_in, fan_out) = layer.fans();
    init_weight(w, layer.activation(), fan_in, fan_out, rng);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_conv_is_identity() {
        let c = 3;
        let spec = NetworkSpec::new(vec![5, 5, c], vec![LayerSpec::conv(c, c, 3, 1, Activation::Identity)]);
        let mut net = Network::<f64>::zeroed(spec).unwrap();
        // weight layout [(kh*3+kw)*c + ci, co]; centre tap is kh = kw = 1
        let w = net.params_mut()[0].data_mut();
        for ch in 0..c {
            w[(4 * c + ch) * c + ch] = 1.0;
        }
        let x = Tensor::from_vec(&[2, 5, 5, c], (0..150).map(|i| (i as f64).cos()).collect()).unwrap();
        let y = net.infer(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn dropout_zero_rate_matches_inference() {
        let spec = NetworkSpec::new(
            vec![4, 4, 2],
            vec![LayerSpec::conv(2, 3, 3, 1, Activation::Relu), LayerSpec::Dropout { rate: 0.0 }],
        );
        let net = Network::<f32>::seeded(spec, 4).unwrap();
        let x = Tensor::from_vec(&[1, 4, 4, 2], (0..32).map(|i| i as f32 / 10.0).collect()).unwrap();
        let train = net.forward_seeded(&x, Mode::Train, 9).unwrap().0;
        assert_eq!(train, net.infer(&x).unwrap());
    }

    #[test]
    fn dropout_scales_survivors() {
        let spec = NetworkSpec::new(vec![1000], vec![LayerSpec::Dropout { rate: 0.3 }]);
        let net = Network::<f64>::zeroed(spec).unwrap();
        let x = Tensor::full(&[1, 1000], 1.0);
        let y = net.forward_seeded(&x, Mode::Train, 1).unwrap().0;
        let kept = y.data().iter().filter(|v| **v != 0.0).count();
        assert!(y.data().iter().all(|v| *v == 0.0 || (*v - 1.0 / 0.7).abs() < 1e-12));
        assert!((600..800).contains(&kept), "{kept}");
    }

    #[test]
    fn shape_errors_are_reported() {
        let spec = NetworkSpec::new(vec![8, 8, 30], vec![LayerSpec::conv(30, 32, 3, 1, Activation::Relu)]);
        let net = Network::<f32>::seeded(spec, 0).unwrap();
        assert_eq!(net.output_shape(), &[8, 8, 32]);
        assert!(matches!(net.infer(&Tensor::zeros(&[1, 8, 8, 29])), Err(NnError::ShapeMismatch { .. })));
    }

    #[test]
    fn zero_loss_gradient_gives_zero_parameter_gradients() {
        let spec = NetworkSpec::new(
            vec![4, 4, 3],
            vec![
                LayerSpec::conv(3, 4, 3, 2, Activation::Relu),
                LayerSpec::Reshape { shape: vec![16] },
                LayerSpec::dense(16, 5, Activation::Sigmoid),
            ],
        );
        let net = Network::<f64>::seeded(spec, 2).unwrap();
        let x = Tensor::full(&[2, 4, 4, 3], 0.3);
        let (y, cache) = net.forward_seeded(&x, Mode::Train, 0).unwrap();
        let g = net.backward(&cache, &Tensor::zeros(y.shape()), true).unwrap();
        assert!(g.params.iter().all(|t| t.data().iter().all(|v| *v == 0.0)));
        assert!(g.input.unwrap().data().iter().all(|v| *v == 0.0));
    }
}
