//! Hand-differentiated building blocks: dense layers, an LSTM cell, a frozen
//! embedding table, dropout, Adam, and the nine-node head with its composite
//! CCC loss. Everything runs in `f64`.

use rand::Rng;
use thiserror::Error;

pub mod adam;
pub mod dense;
pub mod dropout;
pub mod embedding;
pub mod head;
pub mod lstm;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use dense::{Activation, DenseCache, DenseGrads, DenseLayer};
pub use dropout::{dropout, dropout_sparse, DropoutMask};
pub use embedding::EmbeddingTable;
pub use head::{composite_loss, head_forward, HeadOutput, LossOutput, LossWeights, Target, EMOTION_CLASSES, HEAD_WIDTH};
pub use lstm::{LstmCell, LstmGrads, LstmStepCache};
pub use tensor::{SparseVector, Tensor2};

use crate::metrics::MetricError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dropout rate must be in [0, 1), got {0}")]
    InvalidRate(f64),
    #[error("batch of {0} is too small for a CCC loss (need at least 2)")]
    BatchTooSmall(usize),
    #[error("cross-entropy weight is positive but item {0} has no emotion label")]
    MissingEmotionLabels(usize),
    #[error("loss weights must be non-negative, got lambda={lambda} beta={beta}")]
    InvalidLossWeights { lambda: f64, beta: f64 },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub type Result<T> = std::result::Result<T, NeuralError>;

/// `count` draws from `U(-l, l)` with `l = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, count: usize, rng: &mut R) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    (0..count).map(|_| rng.random_range(-limit..=limit)).collect()
}
