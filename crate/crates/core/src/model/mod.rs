//! The grader network: an optional tanh hidden layer over fixed input
//! features followed by one of three heads.
//!
//! * `Ce` and `Fa` emit one logit per grade class. They differ only in the
//!   training loss (cross-entropy against the rounded class vs. squared
//!   error of the fair average).
//! * `Reg` emits a single unbounded scalar score.

mod grad;
mod loss;

pub use grad::{backward, batch_loss, grad_check, random_audit, AuditConfig, BatchGradient, Example};
pub use loss::{
    ce_loss, expected_score, fa_loss, log_sum_exp, reg_loss, softmax, ClassDistribution,
};
pub(crate) use loss::{ce_loss_index, softmax_unchecked};

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scale::GradeScale;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeadKind {
    Ce,
    Fa,
    Reg,
}

impl HeadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Ce => "ce",
            HeadKind::Fa => "fa",
            HeadKind::Reg => "reg",
        }
    }

    pub fn output_dim(self, scale: &GradeScale) -> usize {
        match self {
            HeadKind::Ce | HeadKind::Fa => scale.num_classes(),
            HeadKind::Reg => 1,
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ce" => Ok(HeadKind::Ce),
            "fa" => Ok(HeadKind::Fa),
            "reg" => Ok(HeadKind::Reg),
            other => Err(Error::Domain(format!("unknown head kind {other:?} (ce|fa|reg)"))),
        }
    }
}

/// Fully connected layer, `y = W x + b`, with `W` stored row-major as
/// `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Dense {
            out_dim,
            in_dim,
            weights: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Uniform initialisation in `[-1/sqrt(in_dim), 1/sqrt(in_dim)]` for
    /// weights and biases alike.
    pub fn uniform<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut draw = || rng.random_range(-bound..=bound);
        let weights = (0..out_dim * in_dim).map(|_| draw()).collect();
        let bias = (0..out_dim).map(|_| draw()).collect();
        Dense {
            out_dim,
            in_dim,
            weights,
            bias,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        self.weights
            .chunks_exact(self.in_dim.max(1))
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

/// Backbone plus head, bound to a grade scale.
#[derive(Debug, Clone, PartialEq)]
pub struct GraderModel {
    pub head: HeadKind,
    pub input_dim: usize,
    /// `None` when the model has no hidden layer.
    pub hidden: Option<Dense>,
    pub output: Dense,
    pub scale: GradeScale,
    /// Free-form key/value pairs persisted with the model (training config
    /// echo, seed, part).
    pub provenance: Vec<(String, String)>,
}

/// Intermediate values of one forward pass, reused by backpropagation.
pub(crate) struct Trace {
    pub hidden: Option<Vec<f64>>,
    pub output: Vec<f64>,
}

impl GraderModel {
    fn check_input_dim(input_dim: usize) -> Result<()> {
        if input_dim == 0 {
            return Err(Error::Domain("input dimension must be at least 1".into()));
        }
        Ok(())
    }

    pub fn zeros(head: HeadKind, input_dim: usize, hidden_dim: usize, scale: GradeScale) -> Result<Self> {
        Self::check_input_dim(input_dim)?;
        let hidden = (hidden_dim > 0).then(|| Dense::zeros(hidden_dim, input_dim));
        let fan_in = if hidden_dim > 0 { hidden_dim } else { input_dim };
        Ok(GraderModel {
            head,
            input_dim,
            hidden,
            output: Dense::zeros(head.output_dim(&scale), fan_in),
            scale,
            provenance: Vec::new(),
        })
    }

    /// Seeded uniform initialisation; see [`Dense::uniform`].
    pub fn init<R: Rng + ?Sized>(
        head: HeadKind,
        input_dim: usize,
        hidden_dim: usize,
        scale: GradeScale,
        rng: &mut R,
    ) -> Result<Self> {
        Self::check_input_dim(input_dim)?;
        let hidden = (hidden_dim > 0).then(|| Dense::uniform(hidden_dim, input_dim, rng));
        let fan_in = if hidden_dim > 0 { hidden_dim } else { input_dim };
        let output = Dense::uniform(head.output_dim(&scale), fan_in, rng);
        Ok(GraderModel {
            head,
            input_dim,
            hidden,
            output,
            scale,
            provenance: Vec::new(),
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden.as_ref().map_or(0, |h| h.out_dim)
    }

    /// Checks that layer shapes agree with each other, the head and the
    /// scale, and that all weights are finite.
    pub fn validate(&self) -> Result<()> {
        let fan_in = match &self.hidden {
            Some(h) => {
                if h.in_dim != self.input_dim {
                    return Err(Error::Dimension {
                        what: "hidden layer input",
                        expected: self.input_dim,
                        actual: h.in_dim,
                    });
                }
                h.out_dim
            }
            None => self.input_dim,
        };
        if self.output.in_dim != fan_in {
            return Err(Error::Dimension {
                what: "output layer input",
                expected: fan_in,
                actual: self.output.in_dim,
            });
        }
        let out = self.head.output_dim(&self.scale);
        if self.output.out_dim != out {
            return Err(Error::Dimension {
                what: "output layer width",
                expected: out,
                actual: self.output.out_dim,
            });
        }
        for layer in self.hidden.iter().chain(std::iter::once(&self.output)) {
            if layer.weights.len() != layer.out_dim * layer.in_dim || layer.bias.len() != layer.out_dim {
                return Err(Error::Domain("layer buffers do not match declared shape".into()));
            }
            if !layer.is_finite() {
                return Err(Error::Domain("model contains non-finite weights".into()));
            }
        }
        Ok(())
    }

    pub(crate) fn trace(&self, x: &[f64]) -> Result<Trace> {
        if x.len() != self.input_dim {
            return Err(Error::Dimension {
                what: "feature vector",
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        let hidden = self
            .hidden
            .as_ref()
            .map(|h| h.apply(x).into_iter().map(f64::tanh).collect::<Vec<_>>());
        let output = self.output.apply(hidden.as_deref().unwrap_or(x));
        Ok(Trace { hidden, output })
    }

    /// Logits (`Ce`/`Fa`, length `C`) or the single scalar score (`Reg`).
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.trace(x).map(|t| t.output)
    }

    /// All parameter buffers in a fixed order: hidden weights, hidden bias,
    /// output weights, output bias.
    pub fn params(&self) -> Vec<&[f64]> {
        layer_slices(self.hidden.as_ref(), &self.output)
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        layer_slices_mut(self.hidden.as_mut(), &mut self.output)
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn provenance_value(&self, key: &str) -> Option<&str> {
        self.provenance
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

pub(crate) fn layer_slices<'a>(hidden: Option<&'a Dense>, output: &'a Dense) -> Vec<&'a [f64]> {
    let mut out = Vec::with_capacity(4);
    if let Some(h) = hidden {
        out.push(h.weights.as_slice());
        out.push(h.bias.as_slice());
    }
    out.push(output.weights.as_slice());
    out.push(output.bias.as_slice());
    out
}

pub(crate) fn layer_slices_mut<'a>(hidden: Option<&'a mut Dense>, output: &'a mut Dense) -> Vec<&'a mut [f64]> {
    let mut out = Vec::with_capacity(4);
    if let Some(h) = hidden {
        out.push(h.weights.as_mut_slice());
        out.push(h.bias.as_mut_slice());
    }
    out.push(output.weights.as_mut_slice());
    out.push(output.bias.as_mut_slice());
    out
}
