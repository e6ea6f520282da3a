use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use super::tensor::Tensor2;
use super::{NeuralError, Result};

/// Word vectors of a fixed dimension.
///
/// A frozen table is never exposed to the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub words: Vec<String>,
    /// `V x dim`, row `i` is the vector of `words[i]`.
    pub vectors: Tensor2,
    pub frozen: bool,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    /// Builds a table; a repeated word keeps its last vector.
    pub fn from_entries(dim: usize, entries: Vec<(String, Vec<f64>)>, frozen: bool) -> Result<Self> {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut words = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (word, vector) in entries {
            if vector.len() != dim {
                return Err(NeuralError::ShapeMismatch(format!(
                    "embedding for {word:?} has {} values, expected {dim}",
                    vector.len()
                )));
            }
            match index.get(&word) {
                Some(&i) => rows[i] = vector,
                None => {
                    index.insert(word.clone(), words.len());
                    words.push(word);
                    rows.push(vector);
                }
            }
        }
        let vectors = Tensor2::from_vec(rows.len(), dim, rows.concat())?;
        Ok(Self {
            dim,
            words,
            vectors,
            frozen,
            index,
        })
    }

    pub fn rebuild_index(&mut self) {
        self.index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.id(word).map(|i| self.vectors.row(i))
    }

    /// `max_len x dim` matrix: known tokens fill rows from the top,
    /// unknown tokens and padding are zero rows.
    pub fn lookup<S: AsRef<str>>(&self, tokens: &[S], max_len: usize) -> Tensor2 {
        let mut out = Tensor2::zeros(max_len, self.dim);
        for (r, token) in tokens.iter().take(max_len).enumerate() {
            if let Some(v) = self.vector(token.as_ref()) {
                out.row_mut(r).copy_from_slice(v);
            }
        }
        out
    }
}
