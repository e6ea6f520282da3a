//! Single LSTM cell with backpropagation through time.
//!
//! Gate pre-activations are stacked in the order input, forget, candidate,
//! output:
//!
//! ```text
//! [a_i; a_f; a_g; a_o] = W_x x + W_h h + b
//! c' = sigmoid(a_f) * c + sigmoid(a_i) * tanh(a_g)
//! h' = sigmoid(a_o) * tanh(c')
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::sigmoid;
use super::tensor::Tensor2;
use super::{glorot_uniform, NeuralError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub input_size: usize,
    pub hidden: usize,
    /// `4H x input_size`
    pub w_x: Tensor2,
    /// `4H x H`
    pub w_h: Tensor2,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmStepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmGrads {
    pub w_x: Tensor2,
    pub w_h: Tensor2,
    pub bias: Vec<f64>,
}

impl LstmGrads {
    pub fn zeros_like(cell: &LstmCell) -> Self {
        Self {
            w_x: Tensor2::zeros(cell.w_x.rows, cell.w_x.cols),
            w_h: Tensor2::zeros(cell.w_h.rows, cell.w_h.cols),
            bias: vec![0.0; cell.bias.len()],
        }
    }

    pub fn slices(&self) -> [&[f64]; 3] {
        [&self.w_x.data, &self.w_h.data, &self.bias]
    }

    pub fn add(&mut self, other: &LstmGrads) {
        for (a, b) in self
            .w_x
            .data
            .iter_mut()
            .chain(self.w_h.data.iter_mut())
            .chain(self.bias.iter_mut())
            .zip(other.w_x.data.iter().chain(&other.w_h.data).chain(&other.bias))
        {
            *a += b;
        }
    }
}

fn matvec_add(m: &Tensor2, v: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        *o += m.row(r).iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += m^T v`
fn matvec_t_add(m: &Tensor2, v: &[f64], out: &mut [f64]) {
    for (r, &vr) in v.iter().enumerate() {
        if vr == 0.0 {
            continue;
        }
        out.iter_mut().zip(m.row(r)).for_each(|(o, w)| *o += w * vr);
    }
}

fn outer_add(m: &mut Tensor2, col: &[f64], row: &[f64]) {
    for (r, &c) in col.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        m.row_mut(r).iter_mut().zip(row).for_each(|(o, x)| *o += c * x);
    }
}

impl LstmCell {
    /// Glorot-uniform kernels, zero biases except a forget-gate bias of 1.
    pub fn new<R: Rng + ?Sized>(input_size: usize, hidden: usize, rng: &mut R) -> Self {
        let g = 4 * hidden;
        let mut bias = vec![0.0; g];
        bias[hidden..2 * hidden].fill(1.0);
        Self {
            input_size,
            hidden,
            w_x: Tensor2::from_vec(g, input_size, glorot_uniform(input_size, g, g * input_size, rng))
                .expect("sized by construction"),
            w_h: Tensor2::from_vec(g, hidden, glorot_uniform(hidden, g, g * hidden, rng))
                .expect("sized by construction"),
            bias,
        }
    }

    pub fn param_count(&self) -> usize {
        self.w_x.data.len() + self.w_h.data.len() + self.bias.len()
    }

    pub fn param_slices_mut(&mut self) -> [&mut [f64]; 3] {
        [&mut self.w_x.data, &mut self.w_h.data, &mut self.bias]
    }

    pub fn step(&self, x: &[f64], h: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>, LstmStepCache)> {
        let hs = self.hidden;
        if x.len() != self.input_size || h.len() != hs || c.len() != hs {
            return Err(NeuralError::ShapeMismatch(format!(
                "lstm step expects x[{}], h[{hs}], c[{hs}]; got x[{}], h[{}], c[{}]",
                self.input_size,
                x.len(),
                h.len(),
                c.len()
            )));
        }
        let mut a = self.bias.clone();
        matvec_add(&self.w_x, x, &mut a);
        matvec_add(&self.w_h, h, &mut a);

        let i: Vec<f64> = a[..hs].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = a[hs..2 * hs].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = a[2 * hs..3 * hs].iter().map(|&v| v.tanh()).collect();
        let o: Vec<f64> = a[3 * hs..].iter().map(|&v| sigmoid(v)).collect();
        let c_new: Vec<f64> = (0..hs).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
        let h_new: Vec<f64> = o.iter().zip(&tanh_c).map(|(a, b)| a * b).collect();

        let cache = LstmStepCache {
            x: x.to_vec(),
            h_prev: h.to_vec(),
            c_prev: c.to_vec(),
            i,
            f,
            g,
            o,
            tanh_c,
        };
        Ok((h_new, c_new, cache))
    }

    /// Runs the cell over `xs` from a zero state; returns every hidden state.
    pub fn forward_sequence(&self, xs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<LstmStepCache>)> {
        let mut h = vec![0.0; self.hidden];
        let mut c = vec![0.0; self.hidden];
        let mut hs = Vec::with_capacity(xs.len());
        let mut caches = Vec::with_capacity(xs.len());
        for x in xs {
            let (h2, c2, cache) = self.step(x, &h, &c)?;
            hs.push(h2.clone());
            caches.push(cache);
            h = h2;
            c = c2;
        }
        Ok((hs, caches))
    }

    /// Backpropagation through time. `grad_h[t]` is the loss gradient
    /// w.r.t. the hidden state emitted at step `t` from outside the
    /// recurrence. Returns parameter gradients and per-step input gradients.
    pub fn backward_sequence(
        &self,
        caches: &[LstmStepCache],
        grad_h: &[Vec<f64>],
    ) -> Result<(LstmGrads, Vec<Vec<f64>>)> {
        if caches.len() != grad_h.len() {
            return Err(NeuralError::ShapeMismatch(format!(
                "{} cached steps but {} hidden gradients",
                caches.len(),
                grad_h.len()
            )));
        }
        let hs = self.hidden;
        let mut grads = LstmGrads::zeros_like(self);
        let mut grad_x = vec![Vec::new(); caches.len()];
        let mut dh_next = vec![0.0; hs];
        let mut dc_next = vec![0.0; hs];
        let mut da = vec![0.0; 4 * hs];

        for t in (0..caches.len()).rev() {
            let s = &caches[t];
            if grad_h[t].len() != hs {
                return Err(NeuralError::ShapeMismatch("hidden gradient width".into()));
            }
            for k in 0..hs {
                let dh = grad_h[t][k] + dh_next[k];
                let d_o = dh * s.tanh_c[k];
                let dc = dh * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]) + dc_next[k];
                let d_i = dc * s.g[k];
                let d_g = dc * s.i[k];
                let d_f = dc * s.c_prev[k];
                dc_next[k] = dc * s.f[k];
                da[k] = d_i * s.i[k] * (1.0 - s.i[k]);
                da[hs + k] = d_f * s.f[k] * (1.0 - s.f[k]);
                da[2 * hs + k] = d_g * (1.0 - s.g[k] * s.g[k]);
                da[3 * hs + k] = d_o * s.o[k] * (1.0 - s.o[k]);
            }
            outer_add(&mut grads.w_x, &da, &s.x);
            outer_add(&mut grads.w_h, &da, &s.h_prev);
            grads.bias.iter_mut().zip(&da).for_each(|(b, d)| *b += d);

            let mut dx = vec![0.0; self.input_size];
            matvec_t_add(&self.w_x, &da, &mut dx);
            grad_x[t] = dx;
            dh_next.fill(0.0);
            matvec_t_add(&self.w_h, &da, &mut dh_next);
        }
        Ok((grads, grad_x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_cell(input: usize, hidden: usize) -> LstmCell {
        LstmCell {
            input_size: input,
            hidden,
            w_x: Tensor2::zeros(4 * hidden, input),
            w_h: Tensor2::zeros(4 * hidden, hidden),
            bias: vec![0.0; 4 * hidden],
        }
    }

    #[test]
    fn all_zero_cell_stays_at_zero() {
        let cell = zero_cell(3, 2);
        let (h, c, cache) = cell.step(&[0.0; 3], &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!(h, vec![0.0; 2]);
        assert_eq!(c, vec![0.0; 2]);
        assert_eq!(cache.i, vec![0.5; 2]);
        assert_eq!(cache.f, vec![0.5; 2]);
        assert_eq!(cache.o, vec![0.5; 2]);
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let mut cell = zero_cell(2, 2);
        // forget bias +30, input bias -30
        cell.bias[2..4].fill(30.0);
        cell.bias[0..2].fill(-30.0);
        let c0 = [0.7, -1.3];
        let (_, c, _) = cell.step(&[0.0; 2], &[0.1, 0.2], &c0).unwrap();
        for (a, b) in c.iter().zip(c0) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn step_rejects_bad_shapes() {
        let cell = zero_cell(3, 2);
        assert!(cell.step(&[0.0; 2], &[0.0; 2], &[0.0; 2]).is_err());
    }

    #[test]
    fn forget_bias_initialized_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cell = LstmCell::new(5, 4, &mut rng);
        assert_eq!(&cell.bias[4..8], &[1.0; 4]);
        assert_eq!(cell.param_count(), 16 * 5 + 16 * 4 + 16);
    }
}
