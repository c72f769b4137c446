//! Dense layers: forward/backward kernels, inverted dropout and Glorot
//! initialization.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative with respect to the pre-activation. ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        match token {
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// A fully-connected layer computing `act(x · W + b)` followed by optional
/// inverted dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `in_dim × out_dim`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
    pub dropout_rate: f64,
}

impl DenseLayer {
    pub fn new(
        weights: Array2<f64>,
        bias: Array1<f64>,
        activation: Activation,
        dropout_rate: f64,
    ) -> Result<Self> {
        if weights.ncols() != bias.len() {
            return Err(Error::Shape(format!(
                "weights have {} columns but bias has {} entries",
                weights.ncols(),
                bias.len()
            )));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::InvalidSpec(format!(
                "dropout rate {dropout_rate} outside [0, 1)"
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
            dropout_rate,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation, dropout_rate: f64) -> Self {
        Self {
            weights: Array2::zeros((in_dim, out_dim)),
            bias: Array1::zeros(out_dim),
            activation,
            dropout_rate,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        dropout_rate: f64,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((in_dim, out_dim), || {
            rng.random_range(-limit..limit)
        });
        Self {
            weights,
            bias: Array1::zeros(out_dim),
            activation,
            dropout_rate,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub(crate) fn forward<R: Rng + ?Sized>(
        &self,
        input: Array2<f64>,
        train: bool,
        rng: &mut R,
    ) -> LayerTrace {
        let mut pre = input.dot(&self.weights);
        pre += &self.bias;
        let mut post = pre.mapv(|z| self.activation.apply(z));
        let mask = if train && self.dropout_rate > 0.0 {
            let keep = 1.0 - self.dropout_rate;
            let scale = 1.0 / keep;
            let rate = self.dropout_rate;
            Array2::from_shape_simple_fn(pre.raw_dim(), || {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    scale
                }
            })
        } else {
            Array2::ones(pre.raw_dim())
        };
        post *= &mask;
        LayerTrace {
            input,
            pre,
            post,
            mask,
        }
    }

    /// Backpropagates `d_post` (gradient w.r.t. this layer's post-dropout
    /// output). Returns the parameter gradient and, when requested, the
    /// gradient w.r.t. the layer input.
    pub(crate) fn backward(
        &self,
        trace: &LayerTrace,
        d_post: ArrayView2<f64>,
        want_input_grad: bool,
    ) -> (LayerGrad, Option<Array2<f64>>) {
        let mut d_pre = &d_post * &trace.mask;
        if self.activation != Activation::Identity {
            d_pre.zip_mut_with(&trace.pre, |d, &z| *d *= self.activation.derivative(z));
        }
        let weights = trace.input.t().dot(&d_pre);
        let bias = d_pre.sum_axis(Axis(0));
        let d_input = want_input_grad.then(|| d_pre.dot(&self.weights.t()));
        (LayerGrad { weights, bias }, d_input)
    }
}

/// Everything recorded for one layer during a forward pass.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub input: Array2<f64>,
    pub pre: Array2<f64>,
    /// Post-activation, post-dropout output.
    pub post: Array2<f64>,
    /// Dropout multipliers (0 or 1/(1-rate)); all ones in eval mode.
    pub mask: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LayerGrad {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        Self {
            weights: Array2::zeros(layer.weights.raw_dim()),
            bias: Array1::zeros(layer.bias.raw_dim()),
        }
    }
}

/// Per-parameter gradients, one entry per layer in the model's canonical
/// layer order (branches first, then trunk).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGrad>,
}

impl GradientSet {
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|g| g.weights.iter().chain(g.bias.iter()))
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Flattened view in canonical order: per layer, weights (row-major)
    /// then bias.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|g| g.weights.iter().chain(g.bias.iter()).copied())
            .collect()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.layers {
            g.weights *= factor;
            g.bias *= factor;
        }
    }
}
