//! Nine-node output head and the composite CCC training loss.
//!
//! Logit 0 drives arousal through a sigmoid, logit 1 drives valence through
//! tanh, logits 2..9 are a softmax over the seven categorical emotions. The
//! loss over a batch is
//!
//! ```text
//! L = -ccc(arousal) - lambda * ccc(valence) + beta * mean cross-entropy
//! ```
//!
//! with CCC taken over the batch, so every item's gradient depends on the
//! whole batch.

use serde::{Deserialize, Serialize};

use super::dense::{sigmoid, softmax_in_place};
use super::tensor::Tensor2;
use super::{NeuralError, Result};
use crate::metrics;

pub const HEAD_WIDTH: usize = 9;
pub const EMOTION_CLASSES: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadOutput {
    pub arousal: f64,
    pub valence: f64,
    pub emotion_probs: [f64; EMOTION_CLASSES],
}

pub fn head_forward(logits: &[f64]) -> Result<HeadOutput> {
    if logits.len() != HEAD_WIDTH {
        return Err(NeuralError::ShapeMismatch(format!(
            "head expects {HEAD_WIDTH} logits, got {}",
            logits.len()
        )));
    }
    let mut probs = [0.0; EMOTION_CLASSES];
    probs.copy_from_slice(&logits[2..]);
    softmax_in_place(&mut probs);
    Ok(HeadOutput {
        arousal: sigmoid(logits[0]),
        valence: logits[1].tanh(),
        emotion_probs: probs,
    })
}

/// Weights of the valence CCC term and the cross-entropy term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda: f64,
    pub beta: f64,
}

impl LossWeights {
    pub fn new(lambda: f64, beta: f64) -> Result<Self> {
        if !(lambda >= 0.0 && beta >= 0.0) {
            return Err(NeuralError::InvalidLossWeights { lambda, beta });
        }
        Ok(Self { lambda, beta })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            beta: 0.0,
        }
    }
}

/// Supervision for one item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub arousal: f64,
    pub valence: f64,
    pub emotion: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub ccc_arousal: f64,
    pub ccc_valence: f64,
    pub cross_entropy: f64,
    /// `B x 9` gradient w.r.t. the head logits.
    pub grad_logits: Tensor2,
}

/// Mean cross-entropy of the softmax over `logits[2..]` computed through
/// log-sum-exp.
fn cross_entropy(logits: &[f64], class: usize) -> f64 {
    let z = &logits[2..];
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - z[class]
}

pub fn composite_loss(logits: &Tensor2, targets: &[Target], weights: LossWeights) -> Result<LossOutput> {
    let b = logits.rows;
    if logits.cols != HEAD_WIDTH || targets.len() != b {
        return Err(NeuralError::ShapeMismatch(format!(
            "loss expects {}x{HEAD_WIDTH} logits for {} targets, got {}x{}",
            targets.len(),
            targets.len(),
            logits.rows,
            logits.cols
        )));
    }
    if b < 2 {
        return Err(NeuralError::BatchTooSmall(b));
    }
    if weights.beta > 0.0 {
        if let Some(i) = targets.iter().position(|t| t.emotion.is_none()) {
            return Err(NeuralError::MissingEmotionLabels(i));
        }
        if let Some(t) = targets.iter().find(|t| t.emotion.unwrap() >= EMOTION_CLASSES) {
            return Err(NeuralError::ShapeMismatch(format!(
                "emotion class {} out of range",
                t.emotion.unwrap()
            )));
        }
    }

    let outputs = logits
        .iter_rows()
        .map(head_forward)
        .collect::<Result<Vec<_>>>()?;
    let pred_a: Vec<f64> = outputs.iter().map(|o| o.arousal).collect();
    let pred_v: Vec<f64> = outputs.iter().map(|o| o.valence).collect();
    let true_a: Vec<f64> = targets.iter().map(|t| t.arousal).collect();
    let true_v: Vec<f64> = targets.iter().map(|t| t.valence).collect();

    let ccc_a = metrics::ccc(&true_a, &pred_a)?;
    let grad_a = metrics::ccc_gradient(&true_a, &pred_a)?;
    let mut grad = Tensor2::zeros(b, HEAD_WIDTH);
    let mut loss = -ccc_a;
    for i in 0..b {
        let a = pred_a[i];
        grad.set(i, 0, -grad_a[i] * a * (1.0 - a));
    }

    let mut ccc_v = 0.0;
    if weights.lambda > 0.0 {
        ccc_v = metrics::ccc(&true_v, &pred_v)?;
        let grad_v = metrics::ccc_gradient(&true_v, &pred_v)?;
        loss -= weights.lambda * ccc_v;
        for i in 0..b {
            let v = pred_v[i];
            grad.set(i, 1, -weights.lambda * grad_v[i] * (1.0 - v * v));
        }
    } else if let Ok(v) = metrics::ccc(&true_v, &pred_v) {
        ccc_v = v;
    }

    let mut ce = 0.0;
    if weights.beta > 0.0 {
        let scale = weights.beta / b as f64;
        for (i, (t, o)) in targets.iter().zip(&outputs).enumerate() {
            let class = t.emotion.expect("checked above");
            ce += cross_entropy(logits.row(i), class);
            for (j, &p) in o.emotion_probs.iter().enumerate() {
                let onehot = if j == class { 1.0 } else { 0.0 };
                grad.set(i, 2 + j, scale * (p - onehot));
            }
        }
        ce /= b as f64;
        loss += weights.beta * ce;
    }

    Ok(LossOutput {
        loss,
        ccc_arousal: ccc_a,
        ccc_valence: ccc_v,
        cross_entropy: ce,
        grad_logits: grad,
    })
}
