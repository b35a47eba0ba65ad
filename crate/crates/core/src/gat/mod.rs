//! Multi-head graph-attention node classifier.
//!
//! One attention layer with `K` heads turns each node's input embedding into a
//! concatenation of per-head attention-weighted neighborhood averages; a dense
//! two-logit head on top gives the probability that the message is
//! NonNegative. Training minimises a class-weighted cross-entropy over the
//! labeled nodes plus an ℓ2 penalty on every parameter, with full-batch Adam.
//! Unlabeled nodes still feed the labeled ones through the graph.

mod checkpoint;
mod forward;
mod grad;
mod train;

use ndarray::{Array1, Array2};
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub use checkpoint::{read_checkpoint, write_checkpoint, write_loss_trace};
pub use forward::{
    attention_logit, attention_weights, forward, leaky_relu, normalize_attention, predict,
    ForwardOutput,
};
pub use grad::{gradients, loss, LOSS_EPSILON};
pub use train::{cross_validate_lambda, train, Adam, CvOutcome, CvScore, TrainOutcome};

/// Nonlinearity applied to each head's aggregated output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    Identity,
}

impl Activation {
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu if x <= 0.0 => x.exp_m1(),
            _ => x,
        }
    }

    pub(crate) fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Elu if x <= 0.0 => x.exp(),
            _ => 1.0,
        }
    }

    pub(crate) fn code(self) -> f64 {
        match self {
            Activation::Elu => 0.0,
            Activation::Identity => 1.0,
        }
    }

    pub(crate) fn from_code(c: f64) -> Result<Self> {
        match c as i64 {
            0 => Ok(Activation::Elu),
            1 => Ok(Activation::Identity),
            _ => Err(Error::Invalid(format!("unknown activation code {c}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatConfig {
    pub heads: usize,
    /// Per-head output width; `None` means `ceil(d_in / heads)`.
    pub head_dim: Option<usize>,
    pub leaky_slope: f64,
    /// Weight `r` on Negative examples in the loss.
    pub class_weight: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub activation: Activation,
}

impl Default for GatConfig {
    fn default() -> Self {
        Self {
            heads: 4,
            head_dim: None,
            leaky_slope: 0.2,
            class_weight: 2.0,
            lambda: 0.08,
            learning_rate: 0.02,
            epochs: 200,
            seed: 0,
            activation: Activation::Elu,
        }
    }
}

impl GatConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("gat config: {m}")));
        if self.heads == 0 {
            return bad("heads must be at least 1");
        }
        if self.head_dim == Some(0) {
            return bad("head_dim must be positive");
        }
        if !(self.class_weight > 0.0) {
            return bad("class_weight must be positive");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return bad("leaky_slope must lie in (0, 1)");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        Ok(())
    }

    pub fn head_dim_for(&self, d_in: usize) -> usize {
        self.head_dim.unwrap_or_else(|| d_in.div_ceil(self.heads).max(1))
    }
}

/// Parameters of one attention head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// Linear map, `head_dim × d_in`.
    pub transform: Array2<f64>,
    /// Attention weights over `[M h_i ‖ M h_j]`, length `2 · head_dim`.
    pub attention: Array1<f64>,
}

/// All trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GatParams {
    pub heads: Vec<HeadParams>,
    /// Two-logit affine classifier: row 0 scores Negative, row 1 NonNegative;
    /// the last column is the bias. Shape `2 × (K·head_dim + 1)`.
    pub classifier: Array2<f64>,
    pub leaky_slope: f64,
    pub activation: Activation,
}

impl GatParams {
    pub fn zeros(heads: usize, d_in: usize, head_dim: usize, leaky_slope: f64, activation: Activation) -> Self {
        Self {
            heads: (0..heads)
                .map(|_| HeadParams {
                    transform: Array2::zeros((head_dim, d_in)),
                    attention: Array1::zeros(2 * head_dim),
                })
                .collect(),
            classifier: Array2::zeros((2, heads * head_dim + 1)),
            leaky_slope,
            activation,
        }
    }

    /// Glorot-uniform initialisation; classifier biases start at zero.
    pub fn init(d_in: usize, config: &GatConfig) -> Self {
        let head_dim = config.head_dim_for(d_in);
        let mut p = Self::zeros(config.heads, d_in, head_dim, config.leaky_slope, config.activation);
        let mut rng = SplitMix64::derive(config.seed, 0x1);
        let glorot = |fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Uniform::new_inclusive(-limit, limit).unwrap()
        };
        for h in &mut p.heads {
            let dist = glorot(d_in, head_dim);
            h.transform.iter_mut().for_each(|v| *v = dist.sample(&mut rng));
            let dist = glorot(2 * head_dim, 1);
            h.attention.iter_mut().for_each(|v| *v = dist.sample(&mut rng));
        }
        let d_total = config.heads * head_dim;
        let dist = glorot(d_total, 2);
        for c in 0..2 {
            for j in 0..d_total {
                p.classifier[[c, j]] = dist.sample(&mut rng);
            }
        }
        p
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn d_in(&self) -> usize {
        self.heads[0].transform.ncols()
    }

    pub fn head_dim(&self) -> usize {
        self.heads[0].transform.nrows()
    }

    pub fn d_total(&self) -> usize {
        self.num_heads() * self.head_dim()
    }

    pub fn num_parameters(&self) -> usize {
        self.heads
            .iter()
            .map(|h| h.transform.len() + h.attention.len())
            .sum::<usize>()
            + self.classifier.len()
    }

    /// Parameters in a fixed order: per head the transform (row-major) then
    /// the attention vector, then the classifier (row-major).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for h in &self.heads {
            out.extend(h.transform.iter());
            out.extend(h.attention.iter());
        }
        out.extend(self.classifier.iter());
        out
    }

    /// Inverse of [`GatParams::to_flat`], reusing `self`'s shapes.
    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_parameters());
        let mut it = flat.iter().copied();
        for h in &mut self.heads {
            h.transform.iter_mut().for_each(|v| *v = it.next().unwrap());
            h.attention.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        self.classifier.iter_mut().for_each(|v| *v = it.next().unwrap());
    }

    pub fn squared_norm(&self) -> f64 {
        self.to_flat().iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_input(&self, d_in: usize) -> Result<()> {
        if self.heads.is_empty() {
            return Err(Error::Shape("model has no attention heads".into()));
        }
        if d_in != self.d_in() {
            return Err(Error::Shape(format!(
                "embeddings have dimension {d_in}, model expects {}",
                self.d_in()
            )));
        }
        Ok(())
    }
}
