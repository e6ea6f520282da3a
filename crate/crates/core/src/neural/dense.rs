use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{gemm, MatRef, SparseVector, Tensor2};
use super::{glorot_uniform, NeuralError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Linear,
    Softmax,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of one row, in place.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

impl Activation {
    pub fn apply(self, t: &mut Tensor2) {
        match self {
            Activation::Relu => t.data.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Sigmoid => t.data.iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Tanh => t.data.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Linear => {}
            Activation::Softmax => {
                for r in 0..t.rows {
                    softmax_in_place(t.row_mut(r));
                }
            }
        }
    }

    /// Maps the gradient w.r.t. the activation output to the gradient
    /// w.r.t. its input, given the forward output.
    pub fn backward(self, output: &Tensor2, grad: &mut Tensor2) {
        match self {
            Activation::Relu => grad
                .data
                .iter_mut()
                .zip(&output.data)
                .for_each(|(g, &y)| {
                    if y <= 0.0 {
                        *g = 0.0
                    }
                }),
            Activation::Sigmoid => grad
                .data
                .iter_mut()
                .zip(&output.data)
                .for_each(|(g, &y)| *g *= y * (1.0 - y)),
            Activation::Tanh => grad
                .data
                .iter_mut()
                .zip(&output.data)
                .for_each(|(g, &y)| *g *= 1.0 - y * y),
            Activation::Linear => {}
            Activation::Softmax => {
                for r in 0..grad.rows {
                    let y = output.row(r);
                    let g = grad.row_mut(r);
                    let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                    g.iter_mut().zip(y).for_each(|(gj, &yj)| *gj = yj * (*gj - dot));
                }
            }
        }
    }
}

/// Fully connected layer `activation(x W^T + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `out x in`
    pub weights: Tensor2,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Values kept from the forward pass for [`DenseLayer::backward`].
#[derive(Debug, Clone)]
pub struct DenseCache {
    pub input: Tensor2,
    pub output: Tensor2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weights: Tensor2,
    pub bias: Vec<f64>,
}

impl DenseGrads {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        Self {
            weights: Tensor2::zeros(layer.weights.rows, layer.weights.cols),
            bias: vec![0.0; layer.bias.len()],
        }
    }

    pub fn slices(&self) -> [&[f64]; 2] {
        [&self.weights.data, &self.bias]
    }
}

impl DenseLayer {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        Self {
            weights: Tensor2::from_vec(outputs, inputs, glorot_uniform(inputs, outputs, outputs * inputs, rng))
                .expect("sized by construction"),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows
    }

    pub fn param_count(&self) -> usize {
        self.weights.data.len() + self.bias.len()
    }

    pub fn param_slices_mut(&mut self) -> [&mut [f64]; 2] {
        [&mut self.weights.data, &mut self.bias]
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.inputs() {
            return Err(NeuralError::ShapeMismatch(format!(
                "dense layer expects {} inputs, got {cols}",
                self.inputs()
            )));
        }
        Ok(())
    }

    fn finish(&self, mut z: Tensor2) -> Tensor2 {
        for r in 0..z.rows {
            z.row_mut(r).iter_mut().zip(&self.bias).for_each(|(v, b)| *v += b);
        }
        self.activation.apply(&mut z);
        debug_assert!(z.is_finite(), "non-finite dense output");
        z
    }

    pub fn infer(&self, x: &Tensor2) -> Result<Tensor2> {
        self.check_input(x.cols)?;
        let mut z = Tensor2::zeros(x.rows, self.outputs());
        gemm(MatRef::of(x), MatRef::of(&self.weights).t(), &mut z, false);
        Ok(self.finish(z))
    }

    pub fn forward(&self, x: &Tensor2) -> Result<(Tensor2, DenseCache)> {
        let output = self.infer(x)?;
        Ok((
            output.clone(),
            DenseCache {
                input: x.clone(),
                output,
            },
        ))
    }

    /// Returns the input gradient (when requested) and parameter gradients.
    pub fn backward(
        &self,
        cache: &DenseCache,
        grad_output: &Tensor2,
        want_input_grad: bool,
    ) -> Result<(Option<Tensor2>, DenseGrads)> {
        if grad_output.shape() != cache.output.shape() || cache.input.cols != self.inputs() {
            return Err(NeuralError::ShapeMismatch(
                "dense backward: cached shapes do not match".into(),
            ));
        }
        let mut dz = grad_output.clone();
        self.activation.backward(&cache.output, &mut dz);

        let mut grads = DenseGrads::zeros_like(self);
        gemm(MatRef::of(&dz).t(), MatRef::of(&cache.input), &mut grads.weights, false);
        for row in dz.iter_rows() {
            grads.bias.iter_mut().zip(row).for_each(|(b, g)| *b += g);
        }
        let input_grad = want_input_grad.then(|| {
            let mut dx = Tensor2::zeros(dz.rows, self.inputs());
            gemm(MatRef::of(&dz), MatRef::of(&self.weights), &mut dx, false);
            dx
        });
        Ok((input_grad, grads))
    }

    /// Forward pass over sparse input rows.
    pub fn infer_sparse(&self, rows: &[SparseVector]) -> Result<Tensor2> {
        let mut z = Tensor2::zeros(rows.len(), self.outputs());
        let (out, inputs) = (self.outputs(), self.inputs());
        for (r, x) in rows.iter().enumerate() {
            self.check_input(x.dim)?;
            let zr = z.row_mut(r);
            for (&j, &v) in x.indices.iter().zip(&x.values) {
                debug_assert!(j < inputs);
                for (o, zo) in zr.iter_mut().enumerate().take(out) {
                    *zo += self.weights.data[o * inputs + j] * v;
                }
            }
        }
        Ok(self.finish(z))
    }

    /// Parameter gradients for a sparse-input forward pass whose output was
    /// `output`.
    pub fn backward_sparse(
        &self,
        rows: &[SparseVector],
        output: &Tensor2,
        grad_output: &Tensor2,
    ) -> Result<DenseGrads> {
        if grad_output.shape() != output.shape() || output.rows != rows.len() {
            return Err(NeuralError::ShapeMismatch(
                "sparse dense backward: shapes do not match".into(),
            ));
        }
        let mut dz = grad_output.clone();
        self.activation.backward(output, &mut dz);
        let mut grads = DenseGrads::zeros_like(self);
        let inputs = self.inputs();
        for (r, x) in rows.iter().enumerate() {
            let dzr = dz.row(r);
            for (o, &g) in dzr.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                grads.bias[o] += g;
                let wrow = &mut grads.weights.data[o * inputs..(o + 1) * inputs];
                for (&j, &v) in x.indices.iter().zip(&x.values) {
                    wrow[j] += g * v;
                }
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear(weights: Tensor2, bias: Vec<f64>) -> DenseLayer {
        DenseLayer {
            weights,
            bias,
            activation: Activation::Linear,
        }
    }

    #[test]
    fn identity_layer_passes_input() {
        let layer = linear(
            Tensor2::from_vec(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap(),
            vec![0.0; 3],
        );
        let x = Tensor2::from_vec(2, 3, vec![0.5, -1., 2., 3., 4., -5.]).unwrap();
        assert_eq!(layer.infer(&x).unwrap(), x);
    }

    #[test]
    fn hand_matmul() {
        let layer = linear(Tensor2::from_vec(2, 2, vec![1., 2., 3., 4.]).unwrap(), vec![0., 0.]);
        let y = layer.infer(&Tensor2::row_vector(&[1., 1.])).unwrap();
        assert_eq!(y.data, vec![3., 7.]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = DenseLayer::new(4, 5, Activation::Softmax, &mut rng);
        let x = Tensor2::from_vec(3, 4, (0..12).map(|i| i as f64 * 0.7 - 3.0).collect()).unwrap();
        for row in layer.infer(&x).unwrap().iter_rows() {
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layer = DenseLayer::new(3, 2, Activation::Tanh, &mut rng);
        let x = Tensor2::from_vec(2, 3, vec![0.1, 0.2, 0.3, -0.4, 0.5, 0.6]).unwrap();
        let (y, cache) = layer.forward(&x).unwrap();
        let (dx, g) = layer
            .backward(&cache, &Tensor2::zeros(y.rows, y.cols), true)
            .unwrap();
        assert!(dx.unwrap().data.iter().all(|&v| v == 0.0));
        assert!(g.weights.data.iter().chain(&g.bias).all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_chain_rule() {
        // y = w x + b, upstream g: dy/dw = g x, dy/db = g, dy/dx = g w
        let layer = linear(Tensor2::from_vec(1, 1, vec![1.5]).unwrap(), vec![0.25]);
        let x = Tensor2::row_vector(&[2.0]);
        let (_, cache) = layer.forward(&x).unwrap();
        let (dx, g) = layer
            .backward(&cache, &Tensor2::row_vector(&[3.0]), true)
            .unwrap();
        assert_eq!(g.weights.data, vec![6.0]);
        assert_eq!(g.bias, vec![3.0]);
        assert_eq!(dx.unwrap().data, vec![4.5]);
    }

    #[test]
    fn sparse_path_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layer = DenseLayer::new(6, 3, Activation::Relu, &mut rng);
        let rows = vec![
            SparseVector { dim: 6, indices: vec![1, 4], values: vec![0.6, 0.8] },
            SparseVector { dim: 6, indices: vec![0, 2, 5], values: vec![-0.3, 0.9, 0.1] },
        ];
        let dense = Tensor2::from_rows(&rows.iter().map(SparseVector::to_dense).collect::<Vec<_>>()).unwrap();
        let (yd, cache) = layer.forward(&dense).unwrap();
        let ys = layer.infer_sparse(&rows).unwrap();
        for (a, b) in yd.data.iter().zip(&ys.data) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        let up = Tensor2::from_vec(2, 3, vec![0.3, -0.2, 0.5, 1.0, 0.1, -0.7]).unwrap();
        let (_, gd) = layer.backward(&cache, &up, false).unwrap();
        let gs = layer.backward_sparse(&rows, &ys, &up).unwrap();
        for (a, b) in gd.weights.data.iter().zip(&gs.weights.data) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn shape_mismatch_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let layer = DenseLayer::new(3, 2, Activation::Linear, &mut rng);
        assert!(layer.infer(&Tensor2::zeros(1, 4)).is_err());
    }
}
