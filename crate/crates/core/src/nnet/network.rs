//! Network assembly: an ordered layer list with parameters, plus the
//! forward/backward passes over whole samples.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

use super::layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool2_backward,
    maxpool2_forward, relu_backward, relu_forward, LayerCache, LayerSpec,
};
use super::tensor::Tensor;

/// Ordered layer list; output shapes are computable without data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Self {
        Self { layers }
    }

    /// Shape algebra: the declared output shape for `input_shape`, checking
    /// every consecutive pair for compatibility.
    pub fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        let mut shape = input_shape.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer.output_shape(i, &shape)?;
        }
        Ok(shape)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }
}

/// Parameters of one layer: `[weight, bias]` or empty.
pub type LayerParams<S> = Vec<Tensor<S>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Network<S: Scalar> {
    pub spec: NetworkSpec,
    /// One entry per layer, parallel to `spec.layers`.
    pub params: Vec<LayerParams<S>>,
}

/// Activations recorded by `forward` for use by `backward`.
#[derive(Debug)]
pub struct ForwardCache<S: Scalar> {
    layers: Vec<LayerCache<S>>,
    output: Tensor<S>,
}

impl<S: Scalar> ForwardCache<S> {
    pub fn output(&self) -> &Tensor<S> {
        &self.output
    }
}

impl<S: Scalar> Network<S> {
    /// Kaiming-uniform initialization of conv/dense weights, zero biases.
    pub fn init(spec: NetworkSpec, seed: u64) -> Self {
        let mut r = rng::stream(seed, 0x4e45_5457);
        let params = spec
            .layers
            .iter()
            .map(|layer| {
                let shapes = layer.param_shapes();
                if shapes.is_empty() {
                    return Vec::new();
                }
                let fan_in = layer.fan_in().max(1);
                let bound = (6.0 / fan_in as f64).sqrt();
                let weight_shape = &shapes[0];
                let n: usize = weight_shape.iter().product();
                let weight = Tensor::from_vec(
                    weight_shape,
                    (0..n)
                        .map(|_| S::from_f64_lossy(r.gen_range(-bound..bound)))
                        .collect(),
                );
                let bias = Tensor::zeros(&shapes[1]);
                vec![weight, bias]
            })
            .collect();
        Self { spec, params }
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    /// Apply `f` to every parameter tensor, in a fixed order.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut Tensor<S>)) {
        for layer in &mut self.params {
            for p in layer {
                f(p);
            }
        }
    }

    pub fn forward(&self, input: &Tensor<S>) -> Result<ForwardCache<S>> {
        let mut caches = Vec::with_capacity(self.spec.layers.len());
        let mut x = input.clone();
        for (i, (layer, params)) in self.spec.layers.iter().zip(&self.params).enumerate() {
            // Validate against the declared shape algebra before running.
            let expected_out = layer.output_shape(i, x.shape())?;
            let (out, cache) = match layer {
                LayerSpec::Conv2d { kernel, .. } => {
                    let out = conv2d_forward(&x, &params[0], &params[1], *kernel);
                    (out, LayerCache::Input(x))
                }
                LayerSpec::MaxPool2 => {
                    let (out, argmax) = maxpool2_forward(&x);
                    (out, LayerCache::Pool(x, argmax))
                }
                LayerSpec::Relu => {
                    let out = relu_forward(&x);
                    (out, LayerCache::Input(x))
                }
                LayerSpec::Flatten => {
                    let n = x.len();
                    let out = x.clone().reshape(&[n]);
                    (out, LayerCache::Input(x))
                }
                LayerSpec::Dense { .. } => {
                    let out = dense_forward(&x, &params[0], &params[1]);
                    (out, LayerCache::Input(x))
                }
            };
            debug_assert_eq!(out.shape(), expected_out.as_slice());
            out.debug_check_finite("layer forward");
            caches.push(cache);
            x = out;
        }
        Ok(ForwardCache {
            layers: caches,
            output: x,
        })
    }

    /// Plain inference without keeping activations.
    pub fn infer(&self, input: &Tensor<S>) -> Result<Tensor<S>> {
        Ok(self.forward(input)?.output)
    }

    /// Gradients of every parameter for an output gradient, propagated
    /// through the cached activations. Returns one entry per layer with the
    /// same shapes as `params`.
    pub fn backward(
        &self,
        cache: &ForwardCache<S>,
        d_output: &Tensor<S>,
    ) -> Result<Vec<LayerParams<S>>> {
        if cache.layers.len() != self.spec.layers.len() {
            return Err(Error::StaleCache);
        }
        if d_output.shape() != cache.output.shape() {
            return Err(Error::StaleCache);
        }
        let mut grads: Vec<LayerParams<S>> = vec![Vec::new(); self.spec.layers.len()];
        let mut d = d_output.clone();
        for (i, layer) in self.spec.layers.iter().enumerate().rev() {
            let params = &self.params[i];
            match (layer, &cache.layers[i]) {
                (LayerSpec::Conv2d { kernel, .. }, LayerCache::Input(x)) => {
                    let (dw, db, dx) = conv2d_backward(x, &params[0], *kernel, &d);
                    grads[i] = vec![dw, db];
                    d = dx;
                }
                (LayerSpec::MaxPool2, LayerCache::Pool(x, argmax)) => {
                    d = maxpool2_backward(x.shape(), argmax, &d);
                }
                (LayerSpec::Relu, LayerCache::Input(x)) => {
                    d = relu_backward(x, &d);
                }
                (LayerSpec::Flatten, LayerCache::Input(x)) => {
                    d = d.reshape(x.shape());
                }
                (LayerSpec::Dense { .. }, LayerCache::Input(x)) => {
                    let (dw, db, dx) = dense_backward(x, &params[0], &d);
                    grads[i] = vec![dw, db];
                    d = dx;
                }
                _ => return Err(Error::StaleCache),
            }
        }
        Ok(grads)
    }

    /// Zero-valued gradient accumulator matching the parameter layout.
    pub fn zero_grads(&self) -> Vec<LayerParams<S>> {
        self.params
            .iter()
            .map(|layer| layer.iter().map(|p| Tensor::zeros(p.shape())).collect())
            .collect()
    }

    pub fn cast<T: Scalar>(&self) -> Network<T> {
        Network {
            spec: self.spec.clone(),
            params: self
                .params
                .iter()
                .map(|layer| layer.iter().map(|p| p.cast::<T>()).collect())
                .collect(),
        }
    }
}

/// Accumulate `src` gradients into `dst` (same layout).
pub fn accumulate_grads<S: Scalar>(dst: &mut [LayerParams<S>], src: &[LayerParams<S>]) {
    for (d_layer, s_layer) in dst.iter_mut().zip(src.iter()) {
        for (d, s) in d_layer.iter_mut().zip(s_layer.iter()) {
            d.add_scaled(s, S::one());
        }
    }
}

/// Scale every gradient tensor in place.
pub fn scale_grads<S: Scalar>(grads: &mut [LayerParams<S>], scale: S) {
    for layer in grads.iter_mut() {
        for g in layer.iter_mut() {
            g.scale(scale);
        }
    }
}
