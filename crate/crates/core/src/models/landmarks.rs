//! Shared-stream landmarks network.
//!
//! Every frame descriptor passes through the same two-layer stream; the `T`
//! stream outputs are concatenated and fed to a dense trunk and the head.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::Network;
use crate::neural::{Activation, DenseCache, NeuralError, Tensor2, HEAD_WIDTH};

type NResult<T> = std::result::Result<T, NeuralError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarksSpec {
    /// Frames per utterance after resampling.
    pub window: usize,
    /// Hidden sizes of the per-frame stream.
    pub stream: Vec<usize>,
    /// Dense layers between the merged streams and the head.
    pub trunk: Vec<usize>,
}

impl Default for LandmarksSpec {
    fn default() -> Self {
        Self {
            window: crate::landmark_features::DEFAULT_WINDOW,
            stream: vec![128, 64],
            trunk: vec![64],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarksNet {
    pub window: usize,
    /// Applied to every frame with the same parameters.
    pub stream: Mlp,
    pub top: Mlp,
}

pub struct LandmarksCache {
    batch: usize,
    stream: Vec<DenseCache>,
    top: Vec<DenseCache>,
}

impl LandmarksNet {
    pub fn new<R: Rng + ?Sized>(descriptor_len: usize, spec: &LandmarksSpec, rng: &mut R) -> Self {
        let stream = Mlp::uniform(descriptor_len, &spec.stream, Activation::Relu, rng);
        let merged = spec.window * stream.output();
        let mut top_layers: Vec<_> = spec.trunk.iter().map(|&s| (s, Activation::Relu)).collect();
        top_layers.push((HEAD_WIDTH, Activation::Linear));
        let top = Mlp::new(merged, &top_layers, rng);
        Self {
            window: spec.window,
            stream,
            top,
        }
    }

    pub fn descriptor_len(&self) -> usize {
        self.stream.input
    }

    /// Stacks `B` inputs of shape `T x D` into one `(B*T) x D` matrix.
    fn stack(&self, batch: &[&Tensor2]) -> NResult<Tensor2> {
        let (t, d) = (self.window, self.descriptor_len());
        let mut data = Vec::with_capacity(batch.len() * t * d);
        for x in batch {
            if x.shape() != (t, d) {
                return Err(NeuralError::ShapeMismatch(format!(
                    "landmarks input must be {t}x{d}, got {}x{}",
                    x.rows, x.cols
                )));
            }
            data.extend_from_slice(&x.data);
        }
        Tensor2::from_vec(batch.len() * t, d, data)
    }

    /// Per-frame stream outputs, `T` rows per utterance.
    pub fn stream_outputs(&self, x: &Tensor2) -> NResult<Tensor2> {
        self.stream.infer(self.stack(&[x])?)
    }
}

impl Network for LandmarksNet {
    type Input = Tensor2;
    type Cache = LandmarksCache;

    fn param_count(&self) -> usize {
        self.stream.param_count() + self.top.param_count()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.stream.param_slices_mut();
        p.extend(self.top.param_slices_mut());
        p
    }

    fn infer(&self, batch: &[&Tensor2]) -> NResult<Tensor2> {
        let b = batch.len();
        let s = self.stream.infer(self.stack(batch)?)?;
        let merged = s.reshape(b, self.window * self.stream.output())?;
        self.top.infer(merged)
    }

    fn forward_train(&self, batch: &[&Tensor2], _rng: &mut ChaCha8Rng) -> NResult<(Tensor2, LandmarksCache)> {
        let b = batch.len();
        let (s, stream) = self.stream.forward(self.stack(batch)?)?;
        let merged = s.reshape(b, self.window * self.stream.output())?;
        let (logits, top) = self.top.forward(merged)?;
        Ok((logits, LandmarksCache { batch: b, stream, top }))
    }

    fn backward(&self, cache: LandmarksCache, grad_logits: &Tensor2) -> NResult<Vec<Vec<f64>>> {
        let (d_merged, top_grads) = self.top.backward(&cache.top, grad_logits.clone(), true)?;
        let d_stream = d_merged
            .expect("input gradient requested")
            .reshape(cache.batch * self.window, self.stream.output())?;
        let (_, mut grads) = self.stream.backward(&cache.stream, d_stream, false)?;
        grads.extend(top_grads);
        Ok(grads)
    }
}
