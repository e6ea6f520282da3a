use rand::Rng;

use super::tensor::{SparseVector, Tensor2};
use super::{NeuralError, Result};

/// Per-element multipliers from an inverted-dropout pass: `0` for dropped
/// elements and `1 / (1 - rate)` for kept ones.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub scale: Vec<f64>,
}

impl DropoutMask {
    pub fn backward(&self, grad: &mut [f64]) {
        grad.iter_mut().zip(&self.scale).for_each(|(g, s)| *g *= s);
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NeuralError::InvalidRate(rate));
    }
    Ok(())
}

fn draw_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> DropoutMask {
    let keep = 1.0 / (1.0 - rate);
    DropoutMask {
        scale: (0..len)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect(),
    }
}

/// Inverted dropout. In eval mode, or at rate 0, returns the input unchanged
/// and no mask.
pub fn dropout<R: Rng + ?Sized>(
    x: &Tensor2,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Tensor2, Option<DropoutMask>)> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let mask = draw_mask(x.data.len(), rate, rng);
    let mut out = x.clone();
    mask.backward(&mut out.data);
    Ok((out, Some(mask)))
}

/// Inverted dropout over the stored entries of sparse rows; implicit zeros
/// stay zero.
pub fn dropout_sparse<R: Rng + ?Sized>(
    rows: &[SparseVector],
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<Vec<SparseVector>> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok(rows.to_vec());
    }
    Ok(rows
        .iter()
        .map(|row| {
            let mask = draw_mask(row.nnz(), rate, rng);
            let mut indices = Vec::with_capacity(row.nnz());
            let mut values = Vec::with_capacity(row.nnz());
            for ((&i, &v), &s) in row.indices.iter().zip(&row.values).zip(&mask.scale) {
                if s != 0.0 {
                    indices.push(i);
                    values.push(v * s);
                }
            }
            SparseVector {
                dim: row.dim,
                indices,
                values,
            }
        })
        .collect())
}
