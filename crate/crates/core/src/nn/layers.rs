//! Forward and backward kernels for each layer kind. Images are NHWC.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::spec::{Activation, LayerSpec};
use super::Mode;
use crate::scalar::Scalar;

/// Geometry of a strided 2-D convolution from `in` to `out`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.kernel * self.kernel * self.in_c
    }

    fn source(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let i = (o * self.stride + k) as isize - self.padding as isize;
        (i >= 0 && (i as usize) < extent).then_some(i as usize)
    }
}

/// Unfold `[batch, in_h, in_w, in_c]` into rows of `kernel²·in_c` patch
/// values, one row per output position.
pub(crate) fn im2col<T: Scalar>(x: &[T], batch: usize, g: &ConvGeom) -> Vec<T> {
    let patch = g.patch();
    let mut cols = vec![T::zero(); batch * g.out_h * g.out_w * patch];
    for b in 0..batch {
        let img = &x[b * g.in_h * g.in_w * g.in_c..(b + 1) * g.in_h * g.in_w * g.in_c];
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let row = ((b * g.out_h + oy) * g.out_w + ox) * patch;
                for kh in 0..g.kernel {
                    let Some(iy) = g.source(oy, kh, g.in_h) else { continue };
                    for kw in 0..g.kernel {
                        let Some(ix) = g.source(ox, kw, g.in_w) else { continue };
                        let dst = row + (kh * g.kernel + kw) * g.in_c;
                        let src = (iy * g.in_w + ix) * g.in_c;
                        cols[dst..dst + g.in_c].copy_from_slice(&img[src..src + g.in_c]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add patch rows back onto the image.
pub(crate) fn col2im<T: Scalar>(cols: &[T], batch: usize, g: &ConvGeom) -> Vec<T> {
    let patch = g.patch();
    let mut x = vec![T::zero(); batch * g.in_h * g.in_w * g.in_c];
    for b in 0..batch {
        let img = &mut x[b * g.in_h * g.in_w * g.in_c..(b + 1) * g.in_h * g.in_w * g.in_c];
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let row = ((b * g.out_h + oy) * g.out_w + ox) * patch;
                for kh in 0..g.kernel {
                    let Some(iy) = g.source(oy, kh, g.in_h) else { continue };
                    for kw in 0..g.kernel {
                        let Some(ix) = g.source(ox, kw, g.in_w) else { continue };
                        let src = row + (kh * g.kernel + kw) * g.in_c;
                        let dst = (iy * g.in_w + ix) * g.in_c;
                        for c in 0..g.in_c {
                            img[dst + c] += cols[src + c];
                        }
                    }
                }
            }
        }
    }
    x
}

pub(crate) fn activate<T: Scalar>(values: &mut [T], act: Activation) {
    match act {
        Activation::Identity => {}
        Activation::Relu => values.iter_mut().for_each(|v| *v = v.max(T::zero())),
        Activation::Sigmoid => values.iter_mut().for_each(|v| *v = T::one() / (T::one() + (-*v).exp())),
    }
}

/// Multiply `grad` in place by the activation derivative, expressed via
/// the activation's output.
pub(crate) fn activation_backward<T: Scalar>(grad: &mut [T], out: &[T], act: Activation) {
    match act {
        Activation::Identity => {}
        Activation::Relu => grad.iter_mut().zip(out).for_each(|(g, y)| {
            if *y <= T::zero() {
                *g = T::zero();
            }
        }),
        Activation::Sigmoid => grad.iter_mut().zip(out).for_each(|(g, y)| *g *= *y * (T::one() - *y)),
    }
}

fn add_bias<T: Scalar>(out: &mut [T], bias: &[T]) {
    for row in out.chunks_mut(bias.len()) {
        row.iter_mut().zip(bias).for_each(|(v, b)| *v += *b);
    }
}

fn bias_grad<T: Scalar>(grad: &[T], channels: usize) -> Vec<T> {
    let mut db = vec![T::zero(); channels];
    for row in grad.chunks(channels) {
        db.iter_mut().zip(row).for_each(|(d, g)| *d += *g);
    }
    db
}

/// What a layer keeps from its forward pass for the backward pass.
#[derive(Debug, Clone)]
pub(crate) enum LayerCache<T> {
    Conv { cols: Vec<T>, out: Vec<T> },
    Deconv { input: Vec<T>, out: Vec<T> },
    Dense { input: Vec<T>, out: Vec<T> },
    Dropout { mask: Vec<T> },
    Stateless,
}

fn conv_geom(spec: &LayerSpec, in_shape: &[usize], out_shape: &[usize]) -> ConvGeom {
    match spec {
        LayerSpec::Conv2d { kernel, stride, padding, .. } => ConvGeom {
            in_h: in_shape[0],
            in_w: in_shape[1],
            in_c: in_shape[2],
            out_h: out_shape[0],
            out_w: out_shape[1],
            kernel: *kernel,
            stride: *stride,
            padding: *padding,
        },
        // A transposed convolution is the adjoint of the convolution that
        // maps its output shape back onto its input shape.
        LayerSpec::ConvTranspose2d { kernel, stride, padding, .. } => ConvGeom {
            in_h: out_shape[0],
            in_w: out_shape[1],
            in_c: out_shape[2],
            out_h: in_shape[0],
            out_w: in_shape[1],
            kernel: *kernel,
            stride: *stride,
            padding: *padding,
        },
        _ => unreachable!("not a convolution"),
    }
}

/// Run one layer over a batch. `params` is `[weight, bias]` for layers that
/// have them.
pub(crate) fn forward<T: Scalar>(
    spec: &LayerSpec,
    in_shape: &[usize],
    out_shape: &[usize],
    params: &[&[T]],
    x: &[T],
    batch: usize,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> (Vec<T>, LayerCache<T>) {
    let act = spec.activation();
    match spec {
        LayerSpec::Conv2d { out_channels, .. } => {
            let g = conv_geom(spec, in_shape, out_shape);
            let cols = im2col(x, batch, &g);
            let rows = batch * g.out_h * g.out_w;
            let mut out = vec![T::zero(); rows * out_channels];
            T::gemm(rows, g.patch(), *out_channels, &cols, false, params[0], false, T::zero(), &mut out);
            add_bias(&mut out, params[1]);
            activate(&mut out, act);
            let cache = LayerCache::Conv { cols, out: out.clone() };
            (out, cache)
        }
        LayerSpec::ConvTranspose2d { in_channels, out_channels, kernel, .. } => {
            let g = conv_geom(spec, in_shape, out_shape);
            let rows = batch * in_shape[0] * in_shape[1];
            let width = kernel * kernel * out_channels;
            let mut cols = vec![T::zero(); rows * width];
            T::gemm(rows, *in_channels, width, x, false, params[0], false, T::zero(), &mut cols);
            let mut out = col2im(&cols, batch, &g);
            add_bias(&mut out, params[1]);
            activate(&mut out, act);
            let cache = LayerCache::Deconv { input: x.to_vec(), out: out.clone() };
            (out, cache)
        }
        LayerSpec::Dense { inputs, outputs, .. } => {
            let mut out = vec![T::zero(); batch * outputs];
            T::gemm(batch, *inputs, *outputs, x, false, params[0], false, T::zero(), &mut out);
            add_bias(&mut out, params[1]);
            activate(&mut out, act);
            let cache = LayerCache::Dense { input: x.to_vec(), out: out.clone() };
            (out, cache)
        }
        LayerSpec::Upsample { factor } => {
            let (h, w, c) = (in_shape[0], in_shape[1], in_shape[2]);
            let (oh, ow) = (h * factor, w * factor);
            let mut out = vec![T::zero(); batch * oh * ow * c];
            for b in 0..batch {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let src = ((b * h + oy / factor) * w + ox / factor) * c;
                        let dst = ((b * oh + oy) * ow + ox) * c;
                        out[dst..dst + c].copy_from_slice(&x[src..src + c]);
                    }
                }
            }
            (out, LayerCache::Stateless)
        }
        LayerSpec::Dropout { rate } => {
            if mode == Mode::Infer || *rate == 0.0 {
                return (x.to_vec(), LayerCache::Dropout { mask: vec![T::one(); x.len()] });
            }
            let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
            let mask: Vec<T> = (0..x.len()).map(|_| if rng.gen::<f64>() < *rate { T::zero() } else { keep }).collect();
            let out = x.iter().zip(&mask).map(|(v, m)| *v * *m).collect();
            (out, LayerCache::Dropout { mask })
        }
        LayerSpec::Reshape { .. } => (x.to_vec(), LayerCache::Stateless),
    }
}

/// Gradients of one layer: parameter gradients (same order as params) and,
/// when requested, the gradient with respect to the layer input.
pub(crate) fn backward<T: Scalar>(
    spec: &LayerSpec,
    in_shape: &[usize],
    out_shape: &[usize],
    params: &[&[T]],
    cache: &LayerCache<T>,
    grad_out: &[T],
    batch: usize,
    need_input_grad: bool,
) -> (Vec<Vec<T>>, Option<Vec<T>>) {
    let act = spec.activation();
    match (spec, cache) {
        (LayerSpec::Conv2d { out_channels, .. }, LayerCache::Conv { cols, out }) => {
            let g = conv_geom(spec, in_shape, out_shape);
            let mut grad = grad_out.to_vec();
            activation_backward(&mut grad, out, act);
            let rows = batch * g.out_h * g.out_w;
            let mut dw = vec![T::zero(); g.patch() * out_channels];
            T::gemm(g.patch(), rows, *out_channels, cols, true, &grad, false, T::zero(), &mut dw);
            let db = bias_grad(&grad, *out_channels);
            let dx = need_input_grad.then(|| {
                let mut dcols = vec![T::zero(); rows * g.patch()];
                T::gemm(rows, *out_channels, g.patch(), &grad, false, params[0], true, T::zero(), &mut dcols);
                col2im(&dcols, batch, &g)
            });
            (vec![dw, db], dx)
        }
        (LayerSpec::ConvTranspose2d { in_channels, out_channels, kernel, .. }, LayerCache::Deconv { input, out }) => {
            let g = conv_geom(spec, in_shape, out_shape);
            let mut grad = grad_out.to_vec();
            activation_backward(&mut grad, out, act);
            let db = bias_grad(&grad, *out_channels);
            let rows = batch * in_shape[0] * in_shape[1];
            let width = kernel * kernel * out_channels;
            let dcols = im2col(&grad, batch, &g);
            let mut dw = vec![T::zero(); in_channels * width];
            T::gemm(*in_channels, rows, width, input, true, &dcols, false, T::zero(), &mut dw);
            let dx = need_input_grad.then(|| {
                let mut dx = vec![T::zero(); rows * in_channels];
                T::gemm(rows, width, *in_channels, &dcols, false, params[0], true, T::zero(), &mut dx);
                dx
            });
            (vec![dw, db], dx)
        }
        (LayerSpec::Dense { inputs, outputs, .. }, LayerCache::Dense { input, out }) => {
            let mut grad = grad_out.to_vec();
            activation_backward(&mut grad, out, act);
            let mut dw = vec![T::zero(); inputs * outputs];
            T::gemm(*inputs, batch, *outputs, input, true, &grad, false, T::zero(), &mut dw);
            let db = bias_grad(&grad, *outputs);
            let dx = need_input_grad.then(|| {
                let mut dx = vec![T::zero(); batch * inputs];
                T::gemm(batch, *outputs, *inputs, &grad, false, params[0], true, T::zero(), &mut dx);
                dx
            });
            (vec![dw, db], dx)
        }
        (LayerSpec::Upsample { factor }, _) => {
            let dx = need_input_grad.then(|| {
                let (h, w, c) = (in_shape[0], in_shape[1], in_shape[2]);
                let (oh, ow) = (h * factor, w * factor);
                let mut dx = vec![T::zero(); batch * h * w * c];
                for b in 0..batch {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let dst = ((b * h + oy / factor) * w + ox / factor) * c;
                            let src = ((b * oh + oy) * ow + ox) * c;
                            for k in 0..c {
                                dx[dst + k] += grad_out[src + k];
                            }
                        }
                    }
                }
                dx
            });
            (Vec::new(), dx)
        }
        (LayerSpec::Dropout { .. }, LayerCache::Dropout { mask }) => {
            let dx = need_input_grad.then(|| grad_out.iter().zip(mask).map(|(g, m)| *g * *m).collect());
            (Vec::new(), dx)
        }
        (LayerSpec::Reshape { .. }, _) => (Vec::new(), need_input_grad.then(|| grad_out.to_vec())),
        _ => unreachable!("cache does not match layer kind"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn im2col_and_col2im_are_adjoint() {
        // <im2col(x), y> == <x, col2im(y)>
        let g = ConvGeom { in_h: 5, in_w: 4, in_c: 2, out_h: 3, out_w: 2, kernel: 3, stride: 2, padding: 1 };
        let x: Vec<f64> = (0..2 * 5 * 4 * 2).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..2 * 3 * 2 * 18).map(|i| (i as f64 * 0.11).cos()).collect();
        let lhs: f64 = im2col(&x, 2, &g).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(col2im(&y, 2, &g)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn sigmoid_and_relu() {
        let mut v = vec![-1.0f64, 0.0, 2.0];
        activate(&mut v, Activation::Relu);
        assert_eq!(v, vec![0.0, 0.0, 2.0]);
        let mut s = vec![0.0f64];
        activate(&mut s, Activation::Sigmoid);
        assert_eq!(s, vec![0.5]);
    }
}
