//! Dense feed-forward networks with hand-written reverse-mode gradients.
//!
//! Layers store weights as `(in, out)` so a batch `X` of shape `(B, in)` maps to
//! `X·W + b`. Gradients are accumulated (summed) over the batch.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Silu,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Silu => z * sigmoid(z),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Silu => {
                let s = sigmoid(z);
                s * (1.0 + z * (1.0 - s))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Net {
    layers: Vec<Layer>,
}

/// Gradients mirroring the layer structure of a [`Net`].
#[derive(Clone, Debug, PartialEq)]
pub struct NetGrads {
    pub layers: Vec<LayerGrad>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Pre-activations and inputs of every layer from one batched forward pass.
pub struct Tape {
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

impl Net {
    /// Builds a net from explicit layers, checking that dimensions chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("a net needs at least one layer"));
        }
        for layer in &layers {
            if layer.bias.len() != layer.output_dim() {
                return Err(Error::DimensionMismatch {
                    expected: layer.output_dim(),
                    got: layer.bias.len(),
                });
            }
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].output_dim(),
                    got: pair[1].input_dim(),
                });
            }
        }
        Ok(Self { layers })
    }

    /// MLP with `hidden` activation between layers and a linear output.
    /// Weights and biases are uniform in `±1/sqrt(fan_in)`.
    pub fn mlp(dims: &[usize], hidden: Activation, rng: &mut RngStream) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::invalid(format!("bad layer dims {dims:?}")));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut draw = || (2.0 * rng.uniform() - 1.0) * bound;
                let weights = Array2::from_shape_fn((fan_in, fan_out), |_| draw());
                let bias = Array1::from_shape_fn(fan_out, |_| draw());
                Layer {
                    weights,
                    bias,
                    activation: if i == last {
                        Activation::Identity
                    } else {
                        hidden
                    },
                }
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("non-empty");
        last.weights.fill(0.0);
        last.bias.fill(0.0);
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let batch = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.forward_batch(batch)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            if layer.activation != Activation::Identity {
                z.mapv_inplace(|v| layer.activation.apply(v));
            }
            h = z;
        }
        Ok(h)
    }

    pub fn forward_with_tape(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Tape)> {
        self.check_input(x.ncols())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            let out = z.mapv(|v| layer.activation.apply(v));
            inputs.push(h);
            pre_activations.push(z);
            h = out;
        }
        Ok((
            h,
            Tape {
                inputs,
                pre_activations,
            },
        ))
    }

    /// Reverse pass: gradients of `sum_b <upstream_b, net(x_b)>` with respect to every
    /// parameter and to the inputs.
    pub fn backward(
        &self,
        tape: &Tape,
        upstream: ArrayView2<f64>,
    ) -> Result<(NetGrads, Array2<f64>)> {
        if upstream.ncols() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                got: upstream.ncols(),
            });
        }
        if upstream.nrows() != tape.inputs[0].nrows() {
            return Err(Error::DimensionMismatch {
                expected: tape.inputs[0].nrows(),
                got: upstream.nrows(),
            });
        }
        let mut delta = upstream.to_owned();
        let mut grads = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation != Activation::Identity {
                let act = layer.activation;
                ndarray::Zip::from(&mut delta)
                    .and(&tape.pre_activations[i])
                    .for_each(|d, &z| *d *= act.derivative(z));
            }
            let weights = tape.inputs[i]
                .t()
                .dot(&delta)
                .as_standard_layout()
                .into_owned();
            let bias = delta.sum_axis(Axis(0));
            delta = delta.dot(&layer.weights.t());
            grads.push(LayerGrad { weights, bias });
        }
        grads.reverse();
        Ok((NetGrads { layers: grads }, delta))
    }

    /// Single-example gradient of `<upstream, net(x)>`.
    pub fn grad(&self, x: &[f64], upstream: &[f64]) -> Result<(NetGrads, Vec<f64>)> {
        if upstream.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                got: upstream.len(),
            });
        }
        let xb = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        let (_, tape) = self.forward_with_tape(xb)?;
        let up = ArrayView2::from_shape((1, upstream.len()), upstream).expect("row view");
        let (grads, dx) = self.backward(&tape, up)?;
        Ok((grads, dx.into_raw_vec_and_offset().0))
    }

    /// Mutable flat views of every parameter array, in a fixed order.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weights.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn parameter_shapes(&self) -> Vec<Vec<usize>> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.shape().to_vec(), l.bias.shape().to_vec()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_input(&self, got: usize) -> Result<()> {
        if got != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got,
            });
        }
        Ok(())
    }
}

impl NetGrads {
    /// Flat views in the same order as [`Net::parameters_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|g| {
                [
                    g.weights.as_slice().expect("standard layout"),
                    g.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }
}

/// Numerically stable softmax of one row.
pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut p = logits.mapv(|v| (v - max).exp());
    let total = p.sum();
    p /= total;
    p
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(values: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
