use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed in terms of the activation's output.
    pub(crate) fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
            Activation::Identity => 1.0,
        }
    }
}

/// One dense layer: `act(x Wᵀ + b)` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vector,
    pub activation: Activation,
}

/// Multilayer perceptron parameters.
///
/// Canonical flat order: layer by layer, each layer's weights (row-major,
/// `out × in`) followed by its biases.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    layers: Vec<Layer>,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

impl NetParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {i}: bias length {} for {} outputs",
                    l.bias.len(),
                    l.out_dim()
                )));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {i} outputs {} but layer {} takes {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Random MLP with the given layer widths. Hidden layers use `hidden`, the
    /// last layer is linear. Relu layers get He-uniform weights, all others
    /// Xavier-uniform; biases start at zero.
    pub fn init(widths: &[usize], hidden: Activation, rng: &mut impl Rng) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer widths {widths:?}")));
        }
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (widths[i], widths[i + 1]);
                let activation = if i + 1 == n { Activation::Identity } else { hidden };
                let limit = match activation {
                    Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                    _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                };
                let weight = Matrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-limit..limit));
                Layer { weight, bias: Vector::zeros(fan_out), activation }
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.data().len() + l.bias.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(l.bias.as_slice());
        }
        out
    }

    /// Build parameters with this network's shapes and activations from a flat vector.
    pub fn unflatten(&self, flat: &[f64]) -> Result<NetParams> {
        if flat.len() != self.num_params() {
            return Err(Error::LengthMismatch { expected: self.num_params(), got: flat.len() });
        }
        let mut offset = 0;
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let nw = l.weight.data().len();
                let w = Matrix::new(l.out_dim(), l.in_dim(), flat[offset..offset + nw].to_vec())?;
                offset += nw;
                let b = Vector::new(flat[offset..offset + l.out_dim()].to_vec())?;
                offset += l.out_dim();
                Ok(Layer { weight: w, bias: b, activation: l.activation })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NetParams { layers })
    }

    pub fn zeros_like(&self) -> NetParams {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                weight: Matrix::zeros(l.out_dim(), l.in_dim()),
                bias: Vector::zeros(l.out_dim()),
                activation: l.activation,
            })
            .collect();
        NetParams { layers }
    }

    /// Forward pass without recording a tape.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        for l in &self.layers {
            h = dense(&h, l);
        }
        Ok(h)
    }

    pub(crate) fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "network takes {} inputs, batch has {}",
                self.input_dim(),
                x.cols()
            )));
        }
        Ok(())
    }
}

pub(crate) fn dense(x: &Matrix, layer: &Layer) -> Matrix {
    let mut out = x.matmul_t(&layer.weight).expect("checked dimensions");
    let b = layer.bias.as_slice();
    for i in 0..out.rows() {
        for (v, &bj) in out.row_mut(i).iter_mut().zip(b) {
            *v = layer.activation.apply(*v + bj);
        }
    }
    out
}
