use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::neural::{Activation, DenseCache, DenseLayer, NeuralError, Tensor2};

type NResult<T> = std::result::Result<T, NeuralError>;

/// A stack of dense layers; an empty stack is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub input: usize,
    pub layers: Vec<DenseLayer>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(input: usize, layers: &[(usize, Activation)], rng: &mut R) -> Self {
        let mut width = input;
        let layers = layers
            .iter()
            .map(|&(size, act)| {
                let layer = DenseLayer::new(width, size, act, rng);
                width = size;
                layer
            })
            .collect();
        Self { input, layers }
    }

    /// Hidden layers of the given sizes, all with the same activation.
    pub fn uniform<R: Rng + ?Sized>(input: usize, sizes: &[usize], act: Activation, rng: &mut R) -> Self {
        let spec: Vec<_> = sizes.iter().map(|&s| (s, act)).collect();
        Self::new(input, &spec, rng)
    }

    pub fn output(&self) -> usize {
        self.layers.last().map_or(self.input, DenseLayer::outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.param_slices_mut())
            .collect()
    }

    pub fn infer(&self, x: Tensor2) -> NResult<Tensor2> {
        self.layers.iter().try_fold(x, |h, layer| layer.infer(&h))
    }

    pub fn forward(&self, x: Tensor2) -> NResult<(Tensor2, Vec<DenseCache>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for layer in &self.layers {
            let (out, cache) = layer.forward(&h)?;
            caches.push(cache);
            h = out;
        }
        Ok((h, caches))
    }

    /// Gradients in [`Mlp::param_slices_mut`] order, plus the input gradient
    /// when requested.
    pub fn backward(
        &self,
        caches: &[DenseCache],
        grad: Tensor2,
        want_input_grad: bool,
    ) -> NResult<(Option<Tensor2>, Vec<Vec<f64>>)> {
        let mut grads = Vec::with_capacity(2 * self.layers.len());
        let mut g = grad;
        for (k, (layer, cache)) in self.layers.iter().zip(caches).enumerate().rev() {
            let need = want_input_grad || k > 0;
            let (dx, lg) = layer.backward(cache, &g, need)?;
            grads.push(lg.bias);
            grads.push(lg.weights.data);
            if let Some(dx) = dx {
                g = dx;
            }
        }
        grads.reverse();
        Ok((want_input_grad.then_some(g), grads))
    }
}

/// Per-column z-scoring fitted on training rows. Columns with no spread are
/// only centred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(width: usize) -> Self {
        Self {
            mean: vec![0.0; width],
            scale: vec![1.0; width],
        }
    }

    pub fn fit<'a>(width: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut n = 0usize;
        let mut mean = vec![0.0; width];
        let mut m2 = vec![0.0; width];
        for row in rows {
            n += 1;
            for j in 0..width {
                let d = row[j] - mean[j];
                mean[j] += d / n as f64;
                m2[j] += d * (row[j] - mean[j]);
            }
        }
        let scale = m2
            .iter()
            .map(|&s| {
                let sd = if n > 0 { (s / n as f64).sqrt() } else { 0.0 };
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }
}
