use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{validation, Result};

/// Fully connected layer; `weight` is `in x out` so a batch maps as `X W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }
}

/// Multilayer perceptron with ReLU hidden layers and a linear output layer.
///
/// The same type holds parameter gradients, which share the layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
}

/// Activations retained by [`Mlp::forward_cached`] for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    /// Input to each layer; entries after the first are post-ReLU.
    inputs: Vec<Array2<f64>>,
}

impl Mlp {
    /// Uniform initialization in `+-1/sqrt(fan_in)` for weights and biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let mut layer = Linear::zeros(w[0], w[1]);
                layer.weight.mapv_inplace(|_| rng.gen_range(-bound..bound));
                layer.bias.mapv_inplace(|_| rng.gen_range(-bound..bound));
                layer
            })
            .collect();
        Mlp { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Mlp {
            layers: sizes
                .windows(2)
                .map(|w| Linear::zeros(w[0], w[1]))
                .collect(),
        }
    }

    pub fn zeros_like(other: &Mlp) -> Self {
        Self::zeros(&other.sizes())
    }

    pub fn from_layers(layers: Vec<Linear>) -> Result<Self> {
        if layers.is_empty() {
            return Err(validation("an MLP needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(validation(format!("layer {i}: bias length mismatch")));
            }
            if i > 0 && layers[i - 1].output_dim() != l.input_dim() {
                return Err(validation(format!(
                    "layer {i}: input does not match previous output"
                )));
            }
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(validation(format!("layer {i}: non-finite parameter")));
            }
        }
        let layers = layers
            .into_iter()
            .map(|l| Linear {
                weight: l.weight.as_standard_layout().into_owned(),
                bias: l.bias.as_standard_layout().into_owned(),
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    /// `[in, hidden..., out]`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(Linear::output_dim));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Visits every parameter block (weights then bias, layer by layer).
    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(|l| {
            [
                l.weight.as_slice().expect("standard layout"),
                l.bias.as_slice().expect("standard layout"),
            ]
        })
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers.iter_mut().flat_map(|l| {
            [
                l.weight.as_slice_mut().expect("standard layout"),
                l.bias.as_slice_mut().expect("standard layout"),
            ]
        })
    }

    pub fn squared_norm(&self) -> f64 {
        self.blocks().flatten().map(|v| v * v).sum()
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Mlp, scale: f64) {
        for (a, b) in self.blocks_mut().zip(other.blocks()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.blocks().flatten().all(|v| v.is_finite())
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(validation(format!(
                "network expects {} inputs, got {cols}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input.len())?;
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
        Ok(self.forward_unchecked(x).into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        Ok(self.forward_unchecked(x))
    }

    fn forward_unchecked(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.dot(&self.layers[0].weight) + &self.layers[0].bias;
        if last > 0 {
            h.mapv_inplace(relu);
        }
        for (i, layer) in self.layers.iter().enumerate().skip(1) {
            h = h.dot(&layer.weight) + &layer.bias;
            if i < last {
                h.mapv_inplace(relu);
            }
        }
        h
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        self.check_input(x.ncols())?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight) + &layer.bias;
            if i < last {
                z.mapv_inplace(relu);
            }
            inputs.push(h);
            h = z;
        }
        Ok((h, MlpCache { inputs }))
    }

    /// Reverse-mode pass: parameter gradients and the gradient with respect
    /// to the input, given `d loss / d output` for every row of the batch.
    pub fn backward(
        &self,
        cache: &MlpCache,
        upstream: ArrayView2<f64>,
    ) -> Result<(Mlp, Array2<f64>)> {
        self.check_upstream(cache, upstream)?;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = upstream.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[i];
            let gw = input.t().dot(&g).as_standard_layout().into_owned();
            let gb = g.sum_axis(Axis(0));
            grads.push(Linear {
                weight: gw,
                bias: gb,
            });
            g = g.dot(&layer.weight.t());
            if i > 0 {
                relu_mask(&mut g, input);
            }
        }
        grads.reverse();
        Ok((Mlp { layers: grads }, g))
    }

    /// Gradient with respect to the input only.
    pub fn backward_input(
        &self,
        cache: &MlpCache,
        upstream: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        self.check_upstream(cache, upstream)?;
        let mut g = upstream.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            g = g.dot(&layer.weight.t());
            if i > 0 {
                relu_mask(&mut g, &cache.inputs[i]);
            }
        }
        Ok(g)
    }

    fn check_upstream(&self, cache: &MlpCache, upstream: ArrayView2<f64>) -> Result<()> {
        if cache.inputs.len() != self.layers.len() {
            return Err(validation("cache does not belong to this network"));
        }
        let rows = cache.inputs[0].nrows();
        if upstream.dim() != (rows, self.output_dim()) {
            return Err(validation(format!(
                "upstream gradient has shape {:?}, expected ({rows}, {})",
                upstream.dim(),
                self.output_dim()
            )));
        }
        Ok(())
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Zeroes gradient entries whose post-ReLU activation is not positive.
fn relu_mask(g: &mut Array2<f64>, activation: &Array2<f64>) {
    ndarray::Zip::from(g).and(activation).for_each(|g, &a| {
        if a <= 0.0 {
            *g = 0.0;
        }
    });
}
