//! Two cascaded LSTMs over frozen word vectors.
//!
//! The final hidden state of the second LSTM feeds the dense layers and the
//! head. Sequences are unrolled over their own tokens only, so padding
//! never reaches the recurrence.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::Network;
use crate::neural::{Activation, DenseCache, LstmCell, LstmStepCache, NeuralError, Tensor2, HEAD_WIDTH};

type NResult<T> = std::result::Result<T, NeuralError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqTextSpec {
    pub hidden: usize,
    /// Tokens beyond this length are dropped.
    pub max_len: usize,
    /// Dense layers between the recurrent output and the head; empty means
    /// the head reads the LSTM state directly.
    pub trunk: Vec<usize>,
}

impl Default for SeqTextSpec {
    fn default() -> Self {
        Self {
            hidden: 16,
            max_len: 30,
            trunk: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqTextNet {
    pub lstm1: LstmCell,
    pub lstm2: LstmCell,
    pub top: Mlp,
}

pub struct SeqTextCache {
    items: Vec<(Vec<LstmStepCache>, Vec<LstmStepCache>)>,
    top: Vec<DenseCache>,
}

impl SeqTextNet {
    pub fn new<R: Rng + ?Sized>(embedding_dim: usize, spec: &SeqTextSpec, rng: &mut R) -> Self {
        let lstm1 = LstmCell::new(embedding_dim, spec.hidden, rng);
        let lstm2 = LstmCell::new(spec.hidden, spec.hidden, rng);
        let mut layers: Vec<_> = spec.trunk.iter().map(|&s| (s, Activation::Relu)).collect();
        layers.push((HEAD_WIDTH, Activation::Linear));
        let top = Mlp::new(spec.hidden, &layers, rng);
        Self { lstm1, lstm2, top }
    }

    fn encode(&self, xs: &[Vec<f64>]) -> NResult<(Vec<f64>, Vec<LstmStepCache>, Vec<LstmStepCache>)> {
        if xs.is_empty() {
            return Err(NeuralError::ShapeMismatch("empty token sequence".into()));
        }
        let (h1, c1) = self.lstm1.forward_sequence(xs)?;
        let (h2, c2) = self.lstm2.forward_sequence(&h1)?;
        Ok((h2.last().cloned().expect("non-empty"), c1, c2))
    }
}

impl Network for SeqTextNet {
    /// Embedded tokens, one row per step.
    type Input = Vec<Vec<f64>>;
    type Cache = SeqTextCache;

    fn param_count(&self) -> usize {
        self.lstm1.param_count() + self.lstm2.param_count() + self.top.param_count()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p: Vec<&mut [f64]> = Vec::new();
        p.extend(self.lstm1.param_slices_mut());
        p.extend(self.lstm2.param_slices_mut());
        p.extend(self.top.param_slices_mut());
        p
    }

    fn infer(&self, batch: &[&Vec<Vec<f64>>]) -> NResult<Tensor2> {
        let mut states = Vec::with_capacity(batch.len());
        for xs in batch {
            states.push(self.encode(xs)?.0);
        }
        self.top.infer(Tensor2::from_rows(&states)?)
    }

    fn forward_train(&self, batch: &[&Vec<Vec<f64>>], _rng: &mut ChaCha8Rng) -> NResult<(Tensor2, SeqTextCache)> {
        let mut states = Vec::with_capacity(batch.len());
        let mut items = Vec::with_capacity(batch.len());
        for xs in batch {
            let (h, c1, c2) = self.encode(xs)?;
            states.push(h);
            items.push((c1, c2));
        }
        let (logits, top) = self.top.forward(Tensor2::from_rows(&states)?)?;
        Ok((logits, SeqTextCache { items, top }))
    }

    fn backward(&self, cache: SeqTextCache, grad_logits: &Tensor2) -> NResult<Vec<Vec<f64>>> {
        let (dh, top_grads) = self.top.backward(&cache.top, grad_logits.clone(), true)?;
        let dh = dh.expect("input gradient requested");
        let hidden = self.lstm2.hidden;
        let mut g1 = crate::neural::LstmGrads::zeros_like(&self.lstm1);
        let mut g2 = crate::neural::LstmGrads::zeros_like(&self.lstm2);
        for (b, (c1, c2)) in cache.items.iter().enumerate() {
            let steps = c2.len();
            let mut grad_h2 = vec![vec![0.0; hidden]; steps];
            grad_h2[steps - 1].copy_from_slice(dh.row(b));
            let (item2, dx2) = self.lstm2.backward_sequence(c2, &grad_h2)?;
            let (item1, _) = self.lstm1.backward_sequence(c1, &dx2)?;
            g1.add(&item1);
            g2.add(&item2);
        }
        let mut grads: Vec<Vec<f64>> = Vec::new();
        for g in [g1, g2] {
            grads.push(g.w_x.data);
            grads.push(g.w_h.data);
            grads.push(g.bias);
        }
        grads.extend(top_grads);
        Ok(grads)
    }
}
