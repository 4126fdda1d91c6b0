//! Compact post-layer-norm transformer encoder with a binary head.
//!
//! The network is generic over [`Scalar`] so the same code runs in `f32`
//! for training and in `f64` for finite-difference gradient checks.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod checkpoint;
pub mod model;
pub mod ops;
pub mod params;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointError};
pub use model::{backward, backward_example, embed, forward, forward_embedded, forward_example, logits, Dropout, ExampleCache};
pub use params::{Layout, LayerTensor, ModelParams, TensorKind, TensorSpec};

/// Floating-point element type of the network.
pub trait Scalar: num_traits::Float + Default + Send + Sync + Debug + 'static {
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Unnormalized scores for (reliable, misinformation).
pub type Logits<T = f32> = [T; 2];

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("backward needs one forward cache per loss gradient ({caches} caches, {grads} gradients)")]
    MissingCache { caches: usize, grads: usize },
}

/// Missing keys in a config file take their value from [`ModelConfig::desk`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    #[serde(default = "two")]
    pub n_classes: usize,
    pub dropout_rate: f32,
}

fn two() -> usize {
    2
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk()
    }
}

impl ModelConfig {
    /// Default model trained on the desk corpus.
    pub fn desk() -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            d_model: 128,
            n_heads: 2,
            d_ff: 256,
            vocab_size: 2000,
            max_len: 64,
            n_classes: 2,
            dropout_rate: 0.1,
        }
    }

    /// Small model for gradient checks and fast unit tests.
    pub fn tiny() -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            d_model: 16,
            n_heads: 2,
            d_ff: 32,
            vocab_size: 64,
            max_len: 16,
            n_classes: 2,
            dropout_rate: 0.1,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |field: &str, why: &str| Err(EncoderError::Config(format!("{field}: {why}")));
        if self.n_layers == 0 {
            return bad("n_layers", "must be at least 1");
        }
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad("d_model", "must be a positive multiple of n_heads");
        }
        if self.d_ff == 0 {
            return bad("d_ff", "must be positive");
        }
        if self.vocab_size == 0 {
            return bad("vocab_size", "must be positive");
        }
        if self.max_len < 2 {
            return bad("max_len", "must fit [CLS] and [SEP]");
        }
        if self.n_classes != 2 {
            return bad("n_classes", "only binary classification is supported");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate", "must be in [0, 1)");
        }
        Ok(())
    }
}

/// Class-1 probability from a logit pair via a max-shifted softmax.
pub fn predict_proba<T: Scalar>(logits: Logits<T>) -> T {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    e1 / (e0 + e1)
}
