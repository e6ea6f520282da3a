//! Two-stream perceptron over tf-idf n-grams and high-level text counts.
//!
//! Stream A reads the sparse tf-idf vector (with dropout on its input),
//! stream B the standardized high-level features. Their outputs are
//! concatenated and passed through the trunk to the head.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::Network;
use crate::neural::{
    dropout_sparse, Activation, DenseCache, DenseLayer, NeuralError, SparseVector, Tensor2, HEAD_WIDTH,
};
use crate::text_features::{VocabularyConfig, HIGH_LEVEL_FEATURES};

type NResult<T> = std::result::Result<T, NeuralError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatTextSpec {
    /// Hidden sizes of the tf-idf stream; the first layer reads the sparse
    /// vector.
    pub tfidf_stream: Vec<usize>,
    pub tfidf_dropout: f64,
    pub high_level_stream: Vec<usize>,
    pub trunk: Vec<usize>,
    pub vocabulary: VocabularyConfig,
    /// Count every transcript in the corpus, labelled or not, towards the
    /// document frequencies.
    pub transductive: bool,
}

impl Default for FeatTextSpec {
    fn default() -> Self {
        Self {
            tfidf_stream: vec![64],
            tfidf_dropout: 0.3,
            high_level_stream: vec![16],
            trunk: vec![32],
            vocabulary: VocabularyConfig {
                min_df: 2,
                ..VocabularyConfig::default()
            },
            transductive: true,
        }
    }
}

/// Features of one transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatInput {
    pub tfidf: SparseVector,
    pub high_level: [f64; 9],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatTextNet {
    pub sparse: DenseLayer,
    pub tfidf_rest: Mlp,
    pub high_level: Mlp,
    pub top: Mlp,
    pub dropout: f64,
}

pub struct FeatTextCache {
    dropped: Vec<SparseVector>,
    sparse_out: Tensor2,
    rest: Vec<DenseCache>,
    high: Vec<DenseCache>,
    top: Vec<DenseCache>,
}

impl FeatTextNet {
    pub fn new<R: Rng + ?Sized>(vocab_len: usize, spec: &FeatTextSpec, rng: &mut R) -> NResult<Self> {
        let (&first, rest) = spec
            .tfidf_stream
            .split_first()
            .ok_or_else(|| NeuralError::ShapeMismatch("tf-idf stream needs at least one layer".into()))?;
        if !(0.0..1.0).contains(&spec.tfidf_dropout) {
            return Err(NeuralError::InvalidRate(spec.tfidf_dropout));
        }
        let sparse = DenseLayer::new(vocab_len, first, Activation::Relu, rng);
        let tfidf_rest = Mlp::uniform(first, rest, Activation::Relu, rng);
        let high_level = Mlp::uniform(HIGH_LEVEL_FEATURES.len(), &spec.high_level_stream, Activation::Relu, rng);
        let mut layers: Vec<_> = spec.trunk.iter().map(|&s| (s, Activation::Relu)).collect();
        layers.push((HEAD_WIDTH, Activation::Linear));
        let top = Mlp::new(tfidf_rest.output() + high_level.output(), &layers, rng);
        Ok(Self {
            sparse,
            tfidf_rest,
            high_level,
            top,
            dropout: spec.tfidf_dropout,
        })
    }

    fn high_level_matrix(batch: &[&FeatInput]) -> NResult<Tensor2> {
        let data = batch.iter().flat_map(|x| x.high_level).collect();
        Tensor2::from_vec(batch.len(), HIGH_LEVEL_FEATURES.len(), data)
    }
}

fn concat(a: &Tensor2, b: &Tensor2) -> Tensor2 {
    let mut out = Tensor2::zeros(a.rows, a.cols + b.cols);
    for r in 0..a.rows {
        let row = out.row_mut(r);
        row[..a.cols].copy_from_slice(a.row(r));
        row[a.cols..].copy_from_slice(b.row(r));
    }
    out
}

fn split_cols(x: &Tensor2, at: usize) -> (Tensor2, Tensor2) {
    let mut a = Tensor2::zeros(x.rows, at);
    let mut b = Tensor2::zeros(x.rows, x.cols - at);
    for r in 0..x.rows {
        a.row_mut(r).copy_from_slice(&x.row(r)[..at]);
        b.row_mut(r).copy_from_slice(&x.row(r)[at..]);
    }
    (a, b)
}

impl Network for FeatTextNet {
    type Input = FeatInput;
    type Cache = FeatTextCache;

    fn param_count(&self) -> usize {
        self.sparse.param_count() + self.tfidf_rest.param_count() + self.high_level.param_count() + self.top.param_count()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p: Vec<&mut [f64]> = self.sparse.param_slices_mut().into_iter().collect();
        p.extend(self.tfidf_rest.param_slices_mut());
        p.extend(self.high_level.param_slices_mut());
        p.extend(self.top.param_slices_mut());
        p
    }

    fn infer(&self, batch: &[&FeatInput]) -> NResult<Tensor2> {
        let rows: Vec<SparseVector> = batch.iter().map(|x| x.tfidf.clone()).collect();
        let a = self.tfidf_rest.infer(self.sparse.infer_sparse(&rows)?)?;
        let b = self.high_level.infer(Self::high_level_matrix(batch)?)?;
        self.top.infer(concat(&a, &b))
    }

    fn forward_train(&self, batch: &[&FeatInput], rng: &mut ChaCha8Rng) -> NResult<(Tensor2, FeatTextCache)> {
        let rows: Vec<SparseVector> = batch.iter().map(|x| x.tfidf.clone()).collect();
        let dropped = dropout_sparse(&rows, self.dropout, rng, true)?;
        let sparse_out = self.sparse.infer_sparse(&dropped)?;
        let (a, rest) = self.tfidf_rest.forward(sparse_out.clone())?;
        let (b, high) = self.high_level.forward(Self::high_level_matrix(batch)?)?;
        let (logits, top) = self.top.forward(concat(&a, &b))?;
        Ok((
            logits,
            FeatTextCache {
                dropped,
                sparse_out,
                rest,
                high,
                top,
            },
        ))
    }

    fn backward(&self, cache: FeatTextCache, grad_logits: &Tensor2) -> NResult<Vec<Vec<f64>>> {
        let (d_merged, top_grads) = self.top.backward(&cache.top, grad_logits.clone(), true)?;
        let (da, db) = split_cols(&d_merged.expect("input gradient requested"), self.tfidf_rest.output());
        let (d_sparse, rest_grads) = self.tfidf_rest.backward(&cache.rest, da, true)?;
        let sparse_grads = self.sparse.backward_sparse(
            &cache.dropped,
            &cache.sparse_out,
            &d_sparse.expect("input gradient requested"),
        )?;
        let (_, high_grads) = self.high_level.backward(&cache.high, db, false)?;
        let mut grads = vec![sparse_grads.weights.data, sparse_grads.bias];
        grads.extend(rest_grads);
        grads.extend(high_grads);
        grads.extend(top_grads);
        Ok(grads)
    }
}
