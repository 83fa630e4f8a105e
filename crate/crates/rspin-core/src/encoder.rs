//! A small frame-level MLP encoder with retained per-layer activations.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mat::FrameMatrix;
use crate::rng::gaussian;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    Tanh,
    Relu,
}

impl Nonlinearity {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Nonlinearity::Tanh),
            "relu" => Ok(Nonlinearity::Relu),
            other => Err(Error::invalid(format!(
                "unknown nonlinearity '{other}' (tanh|relu)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Nonlinearity::Tanh => "tanh",
            Nonlinearity::Relu => "relu",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => v.tanh(),
            Nonlinearity::Relu => v.max(0.0),
        }
    }

    /// Derivative with respect to the pre-activation.
    pub(crate) fn derivative(self, preact: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => {
                let t = preact.tanh();
                1.0 - t * t
            }
            Nonlinearity::Relu => {
                if preact > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncoderConfig {
    pub n_layers: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Output size of the clustering projection head.
    pub proj_dim: usize,
    pub nonlinearity: Nonlinearity,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            n_layers: 2,
            input_dim: 16,
            hidden_dim: 32,
            proj_dim: 16,
            nonlinearity: Nonlinearity::Tanh,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 {
            return Err(Error::invalid("n_layers must be at least 1"));
        }
        if self.input_dim == 0 || self.hidden_dim == 0 || self.proj_dim == 0 {
            return Err(Error::invalid("all dimensions must be at least 1"));
        }
        Ok(())
    }
}

/// A dense layer with its weight matrix (in_dim x out_dim) and bias.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl DenseLayer {
    pub fn init(in_dim: usize, out_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (in_dim as f64).sqrt();
        let mut w = Array2::zeros((in_dim, out_dim));
        for v in w.iter_mut() {
            *v = gaussian(&mut rng) * scale;
        }
        Self {
            w,
            b: Array1::zeros(out_dim),
        }
    }

    pub fn affine(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }
}

/// Stack of dense layers; the last layer's activation is the frame
/// representation consumed by the heads.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub layers: Vec<DenseLayer>,
    pub nonlinearity: Nonlinearity,
}

/// Intermediate state kept by [`Encoder::forward_trace`] for backprop.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input to each layer: X_0 .. X_{L-1}.
    pub layer_inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    pub preacts: Vec<Array2<f64>>,
    /// Post-activation of each layer: X_1 .. X_L.
    pub activations: Vec<Array2<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("at least one layer")
    }
}

impl Encoder {
    pub fn init(cfg: &EncoderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for i in 0..cfg.n_layers {
            let in_dim = if i == 0 { cfg.input_dim } else { cfg.hidden_dim };
            layers.push(DenseLayer::init(
                in_dim,
                cfg.hidden_dim,
                crate::rng::derive_seed(seed, i as u64),
            ));
        }
        Ok(Self {
            layers,
            nonlinearity: cfg.nonlinearity,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers.last().expect("layers").w.ncols()
    }

    /// Forward pass returning the final representation and every layer's
    /// activation (for layer-wise analyses).
    pub fn forward(&self, features: &FrameMatrix) -> Result<(FrameMatrix, Vec<FrameMatrix>)> {
        let trace = self.forward_trace(features)?;
        let h = trace.output().clone();
        Ok((h, trace.activations))
    }

    /// Forward pass retaining everything backprop needs.
    pub fn forward_trace(&self, features: &FrameMatrix) -> Result<ForwardTrace> {
        if features.ncols() != self.input_dim() {
            return Err(Error::shape(format!(
                "input has {} dims but encoder expects {}",
                features.ncols(),
                self.input_dim()
            )));
        }
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut x = features.clone();
        for layer in &self.layers {
            let a = layer.affine(&x);
            let y = a.mapv(|v| self.nonlinearity.apply(v));
            layer_inputs.push(x);
            preacts.push(a);
            activations.push(y.clone());
            x = y;
        }
        Ok(ForwardTrace {
            layer_inputs,
            preacts,
            activations,
        })
    }
}
