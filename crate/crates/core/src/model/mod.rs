//! Toy token-replaced-detection discriminator.
//!
//! A pre-norm transformer encoder over word ids with fixed sinusoidal
//! positions and a single detection vector `w` shared by every position:
//! `P(replaced | x_t) = sigmoid(w · h(x_t))`. There are no per-class
//! parameters; every label word is scored by the same head.

mod checkpoint;
mod forward;
mod gradcheck;
mod loss;
mod optim;
mod train;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use forward::ForwardCache;
pub use gradcheck::{grad_check, grad_check_with, GradCheckReport};
pub use loss::{bce_loss, bce_loss_grad, PROB_CLIP};
pub use optim::AdamW;
pub use train::{train, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub max_length: usize,
}

impl ModelConfig {
    /// d = 64, 2 layers, 4 heads, feed-forward width 4·d, 256 positions.
    pub fn toy(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            d_model: 64,
            layers: 2,
            heads: 4,
            d_ff: 256,
            max_length: 256,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(Error::Model(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.vocab_size == 0 || self.d_model == 0 || self.d_ff == 0 || self.max_length == 0 {
            return Err(Error::Model("model dimensions must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    pub w_q: Array2<f64>,
    pub b_q: Array1<f64>,
    pub w_k: Array2<f64>,
    pub b_k: Array1<f64>,
    pub w_v: Array2<f64>,
    pub b_v: Array1<f64>,
    pub w_o: Array2<f64>,
    pub b_o: Array1<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
    pub w_ff1: Array2<f64>,
    pub b_ff1: Array1<f64>,
    pub w_ff2: Array2<f64>,
    pub b_ff2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub token_embedding: Array2<f64>,
    /// Fixed, not trained.
    pub positions: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub final_gain: Array1<f64>,
    pub final_bias: Array1<f64>,
    /// Detection weight vector `w`.
    pub head: Array1<f64>,
}

/// Whether AdamW's decoupled decay applies to a tensor. Biases and
/// layer-norm parameters are exempt.
pub(crate) fn decays(name: &str) -> bool {
    let leaf = name.rsplit('.').next().unwrap_or(name);
    !(leaf.starts_with("b_") || leaf.contains("gain") || leaf.contains("bias"))
}

fn sinusoidal(max_length: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((max_length, d), |(pos, i)| {
        let pair = (i / 2) as f64;
        let angle = pos as f64 / 10_000f64.powf(2.0 * pair / d as f64);
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Token embeddings start out larger than the unit-amplitude positional
/// encodings so that word identity, not position, dominates the first
/// attention layer.
pub const EMBEDDING_SCALE: f64 = 3.0;

fn uniform2(rng: &mut SplitMix64, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.uniform(-bound, bound))
}

impl ModelParams {
    /// Deterministic initialization: matrices uniform in `±1/sqrt(fan_in)`,
    /// embeddings uniform in `±EMBEDDING_SCALE`, layer-norm gains one and
    /// all offsets zero.
    pub fn init(seed: u64, config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = SplitMix64::derive(seed, 0x1417);
        let d = config.d_model;
        let ff = config.d_ff;
        let a_d = 1.0 / (d as f64).sqrt();
        let a_ff = 1.0 / (ff as f64).sqrt();

        let token_embedding = uniform2(&mut rng, config.vocab_size, d, EMBEDDING_SCALE);
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                ln1_gain: Array1::ones(d),
                ln1_bias: Array1::zeros(d),
                w_q: uniform2(&mut rng, d, d, a_d),
                b_q: Array1::zeros(d),
                w_k: uniform2(&mut rng, d, d, a_d),
                b_k: Array1::zeros(d),
                w_v: uniform2(&mut rng, d, d, a_d),
                b_v: Array1::zeros(d),
                w_o: uniform2(&mut rng, d, d, a_d),
                b_o: Array1::zeros(d),
                ln2_gain: Array1::ones(d),
                ln2_bias: Array1::zeros(d),
                w_ff1: uniform2(&mut rng, d, ff, a_d),
                b_ff1: Array1::zeros(ff),
                w_ff2: uniform2(&mut rng, ff, d, a_ff),
                b_ff2: Array1::zeros(d),
            })
            .collect();
        let head = Array1::from_shape_simple_fn(d, || rng.uniform(-a_d, a_d));

        Ok(Self {
            config,
            token_embedding,
            positions: sinusoidal(config.max_length, d),
            layers,
            final_gain: Array1::ones(d),
            final_bias: Array1::zeros(d),
            head,
        })
    }

    /// Same shapes, all trainable tensors zero.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, t) in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    /// Trainable tensors in a fixed order, with stable names.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![("token_embedding".into(), slice(&self.token_embedding))];
        for (i, l) in self.layers.iter().enumerate() {
            let p = |n: &str| format!("layers.{i}.{n}");
            out.extend([
                (p("ln1_gain"), l.ln1_gain.as_slice().unwrap()),
                (p("ln1_bias"), l.ln1_bias.as_slice().unwrap()),
                (p("w_q"), slice(&l.w_q)),
                (p("b_q"), l.b_q.as_slice().unwrap()),
                (p("w_k"), slice(&l.w_k)),
                (p("b_k"), l.b_k.as_slice().unwrap()),
                (p("w_v"), slice(&l.w_v)),
                (p("b_v"), l.b_v.as_slice().unwrap()),
                (p("w_o"), slice(&l.w_o)),
                (p("b_o"), l.b_o.as_slice().unwrap()),
                (p("ln2_gain"), l.ln2_gain.as_slice().unwrap()),
                (p("ln2_bias"), l.ln2_bias.as_slice().unwrap()),
                (p("w_ff1"), slice(&l.w_ff1)),
                (p("b_ff1"), l.b_ff1.as_slice().unwrap()),
                (p("w_ff2"), slice(&l.w_ff2)),
                (p("b_ff2"), l.b_ff2.as_slice().unwrap()),
            ]);
        }
        out.push(("final_gain".into(), self.final_gain.as_slice().unwrap()));
        out.push(("final_bias".into(), self.final_bias.as_slice().unwrap()));
        out.push(("head".into(), self.head.as_slice().unwrap()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> =
            vec![("token_embedding".into(), slice_mut(&mut self.token_embedding))];
        for (i, l) in self.layers.iter_mut().enumerate() {
            let p = |n: &str| format!("layers.{i}.{n}");
            out.extend([
                (p("ln1_gain"), l.ln1_gain.as_slice_mut().unwrap()),
                (p("ln1_bias"), l.ln1_bias.as_slice_mut().unwrap()),
                (p("w_q"), slice_mut(&mut l.w_q)),
                (p("b_q"), l.b_q.as_slice_mut().unwrap()),
                (p("w_k"), slice_mut(&mut l.w_k)),
                (p("b_k"), l.b_k.as_slice_mut().unwrap()),
                (p("w_v"), slice_mut(&mut l.w_v)),
                (p("b_v"), l.b_v.as_slice_mut().unwrap()),
                (p("w_o"), slice_mut(&mut l.w_o)),
                (p("b_o"), l.b_o.as_slice_mut().unwrap()),
                (p("ln2_gain"), l.ln2_gain.as_slice_mut().unwrap()),
                (p("ln2_bias"), l.ln2_bias.as_slice_mut().unwrap()),
                (p("w_ff1"), slice_mut(&mut l.w_ff1)),
                (p("b_ff1"), l.b_ff1.as_slice_mut().unwrap()),
                (p("w_ff2"), slice_mut(&mut l.w_ff2)),
                (p("b_ff2"), l.b_ff2.as_slice_mut().unwrap()),
            ]);
        }
        out.push(("final_gain".into(), self.final_gain.as_slice_mut().unwrap()));
        out.push(("final_bias".into(), self.final_bias.as_slice_mut().unwrap()));
        out.push(("head".into(), self.head.as_slice_mut().unwrap()));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    /// Adds `scale * other` to every trainable tensor.
    pub fn axpy(&mut self, scale: f64, other: &ModelParams) {
        for ((_, dst), (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are contiguous")
}

fn slice_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are contiguous")
}
