//! Finite-difference gradient checks shared by the gradient tests and the
//! acceptance run.
#![allow(dead_code)]

use affect::metrics::ccc_gradient;
use affect::models::{
    FeatInput, FeatTextNet, FeatTextSpec, LandmarksNet, LandmarksSpec, Network, SeqTextNet, SeqTextSpec,
};
use affect::neural::{
    composite_loss, dropout, Activation, DenseLayer, LossWeights, LstmCell, SparseVector, Target, Tensor2,
};
use affect::text_features::VocabularyConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-6;
pub const INSTANCES: u64 = 20;
pub const LAYER_TOL: f64 = 1e-5;
pub const LOSS_TOL: f64 = 1e-4;

/// Below this magnitude a gradient entry is compared on an absolute scale;
/// central differences at step 1e-6 carry roughly 1e-10 of rounding noise.
const FLOOR: f64 = 1e-4;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

pub fn worst(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic.iter().zip(numeric).map(|(a, n)| rel_err(*a, *n)).fold(0.0, f64::max)
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + STEP;
            let up = f(&probe);
            probe[i] = orig - STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn random_vec(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn random_tensor(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Tensor2 {
    Tensor2::from_vec(rows, cols, random_vec(rows * cols, scale, rng)).unwrap()
}

fn dot(a: &Tensor2, b: &Tensor2) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub worst: f64,
    pub tol: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.worst <= self.tol
    }
}

/// Worst error over every parameter and input of a random 4x3 layer, with
/// the loss `sum(output * r)` for a random `r`.
pub fn dense_check(activation: Activation) -> f64 {
    let mut worst_err: f64 = 0.0;
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = DenseLayer::new(4, 3, activation, &mut rng);
        layer.bias = random_vec(3, 0.5, &mut rng);
        let x = random_tensor(5, 4, 1.0, &mut rng);
        let r = random_tensor(5, 3, 1.0, &mut rng);

        let (_, cache) = layer.forward(&x).unwrap();
        let (dx, grads) = layer.backward(&cache, &r, true).unwrap();

        let loss = |l: &DenseLayer, x: &Tensor2| dot(&l.infer(x).unwrap(), &r);
        let nw = numeric_grad(&layer.weights.data, |w| {
            let mut l = layer.clone();
            l.weights.data.copy_from_slice(w);
            loss(&l, &x)
        });
        let nb = numeric_grad(&layer.bias, |b| {
            let mut l = layer.clone();
            l.bias.copy_from_slice(b);
            loss(&l, &x)
        });
        let nx = numeric_grad(&x.data, |v| loss(&layer, &Tensor2::from_vec(5, 4, v.to_vec()).unwrap()));
        worst_err = worst_err
            .max(worst(&grads.weights.data, &nw))
            .max(worst(&grads.bias, &nb))
            .max(worst(&dx.unwrap().data, &nx));
    }
    worst_err
}

/// Sigmoid, tanh and softmax as used by the output head.
pub fn head_activation_check() -> f64 {
    let mut worst_err: f64 = 0.0;
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let z = random_tensor(3, 7, 3.0, &mut rng);
        let r = random_tensor(3, 7, 1.0, &mut rng);
        for act in [Activation::Sigmoid, Activation::Tanh, Activation::Softmax] {
            let mut out = z.clone();
            act.apply(&mut out);
            let mut analytic = r.clone();
            act.backward(&out, &mut analytic);
            let numeric = numeric_grad(&z.data, |v| {
                let mut t = Tensor2::from_vec(3, 7, v.to_vec()).unwrap();
                act.apply(&mut t);
                dot(&t, &r)
            });
            worst_err = worst_err.max(worst(&analytic.data, &numeric));
        }
    }
    worst_err
}

/// Full-sequence unroll of a random cell: every parameter and every input.
pub fn lstm_check() -> f64 {
    let (input, hidden, steps) = (3, 4, 5);
    let mut worst_err: f64 = 0.0;
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let mut cell = LstmCell::new(input, hidden, &mut rng);
        cell.bias = random_vec(4 * hidden, 0.5, &mut rng);
        let xs: Vec<Vec<f64>> = (0..steps).map(|_| random_vec(input, 1.0, &mut rng)).collect();
        let r: Vec<Vec<f64>> = (0..steps).map(|_| random_vec(hidden, 1.0, &mut rng)).collect();

        let loss = |c: &LstmCell, xs: &[Vec<f64>]| -> f64 {
            let (hs, _) = c.forward_sequence(xs).unwrap();
            hs.iter().zip(&r).flat_map(|(h, g)| h.iter().zip(g).map(|(a, b)| a * b)).sum()
        };
        let (_, caches) = cell.forward_sequence(&xs).unwrap();
        let (grads, dxs) = cell.backward_sequence(&caches, &r).unwrap();

        let nwx = numeric_grad(&cell.w_x.data, |w| {
            let mut c = cell.clone();
            c.w_x.data.copy_from_slice(w);
            loss(&c, &xs)
        });
        let nwh = numeric_grad(&cell.w_h.data, |w| {
            let mut c = cell.clone();
            c.w_h.data.copy_from_slice(w);
            loss(&c, &xs)
        });
        let nb = numeric_grad(&cell.bias, |b| {
            let mut c = cell.clone();
            c.bias.copy_from_slice(b);
            loss(&c, &xs)
        });
        let flat: Vec<f64> = xs.concat();
        let nx = numeric_grad(&flat, |v| {
            let rows: Vec<Vec<f64>> = v.chunks(input).map(<[f64]>::to_vec).collect();
            loss(&cell, &rows)
        });
        worst_err = worst_err
            .max(worst(&grads.w_x.data, &nwx))
            .max(worst(&grads.w_h.data, &nwh))
            .max(worst(&grads.bias, &nb))
            .max(worst(&dxs.concat(), &nx));
    }
    worst_err
}

/// Eval-mode dropout is the identity; a fixed training mask is linear.
pub fn dropout_check() -> f64 {
    let mut worst_err: f64 = 0.0;
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let x = random_tensor(4, 6, 1.0, &mut rng);
        let r = random_tensor(4, 6, 1.0, &mut rng);
        let (out, mask) = dropout(&x, 0.3, &mut rng, false).unwrap();
        assert!(mask.is_none());
        assert_eq!(out, x);
        let numeric = numeric_grad(&x.data, |v| {
            let t = Tensor2::from_vec(4, 6, v.to_vec()).unwrap();
            dot(&dropout(&t, 0.3, &mut rng.clone(), false).unwrap().0, &r)
        });
        worst_err = worst_err.max(worst(&r.data, &numeric));

        let mask_rng = rng.clone();
        let (_, mask) = dropout(&x, 0.3, &mut mask_rng.clone(), true).unwrap();
        let mut analytic = r.data.clone();
        mask.unwrap().backward(&mut analytic);
        let numeric = numeric_grad(&x.data, |v| {
            let t = Tensor2::from_vec(4, 6, v.to_vec()).unwrap();
            dot(&dropout(&t, 0.3, &mut mask_rng.clone(), true).unwrap().0, &r)
        });
        worst_err = worst_err.max(worst(&analytic, &numeric));
    }
    worst_err
}

/// Gradient of the composite loss w.r.t. all 9 logits on batches of 8.
pub fn composite_loss_check() -> f64 {
    let mut worst_err: f64 = 0.0;
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let logits = random_tensor(8, 9, 2.0, &mut rng);
        let targets: Vec<Target> = (0..8)
            .map(|_| Target {
                arousal: rng.random_range(0.0..1.0),
                valence: rng.random_range(-1.0..1.0),
                emotion: Some(rng.random_range(0..7)),
            })
            .collect();
        let weights = LossWeights::new(rng.random_range(0.0..2.0), rng.random_range(0.0..1.0)).unwrap();
        let out = composite_loss(&logits, &targets, weights).unwrap();
        let numeric = numeric_grad(&logits.data, |v| {
            let t = Tensor2::from_vec(8, 9, v.to_vec()).unwrap();
            composite_loss(&t, &targets, weights).unwrap().loss
        });
        worst_err = worst_err.max(worst(&out.grad_logits.data, &numeric));
    }
    worst_err
}

/// Worst vector error of `ccc_gradient` over `pairs` random series of length 2-64.
pub fn ccc_gradient_check(pairs: u64) -> f64 {
    let mut worst_err: f64 = 0.0;
    for seed in 0..pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let n = rng.random_range(2..=64);
        let y = random_vec(n, 1.0, &mut rng);
        let p = random_vec(n, 1.0, &mut rng);
        let analytic = ccc_gradient(&y, &p).unwrap();
        let numeric = numeric_grad(&p, |q| affect::metrics::ccc(&y, q).unwrap());
        worst_err = worst_err.max(vector_rel_err(&analytic, &numeric));
    }
    worst_err
}

/// `|a - n| / max(|a|, |n|)` over the whole gradient vector. Individual
/// entries can be small enough that differencing noise alone exceeds 1e-6
/// of their magnitude.
pub fn vector_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Parameter gradients of a whole network under `sum(logits * r)`, with the
/// dropout masks pinned by reusing the same generator state.
/// Parameters are jittered first so zero-initialized biases do not park a
/// ReLU exactly on its kink.
pub fn network_check<N: Network>(net: &N, batch: &[&N::Input], seed: u64) -> f64 {
    let mut net = net.clone();
    let mut jitter = ChaCha8Rng::seed_from_u64(seed ^ 0x5A5A);
    for slice in net.param_slices_mut() {
        slice.iter_mut().for_each(|v| *v += jitter.random_range(-0.1..0.1));
    }
    let net = &net;
    let rng = ChaCha8Rng::seed_from_u64(seed);
    let (logits, cache) = net.forward_train(batch, &mut rng.clone()).unwrap();
    let mut r_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let r = random_tensor(logits.rows, logits.cols, 1.0, &mut r_rng);
    let grads = net.backward(cache, &r).unwrap();
    let loss = |n: &N| dot(&n.forward_train(batch, &mut rng.clone()).unwrap().0, &r);

    let mut probe = net.clone();
    let sizes: Vec<usize> = probe.param_slices_mut().iter().map(|s| s.len()).collect();
    assert_eq!(sizes.len(), grads.len());
    let mut worst_err: f64 = 0.0;
    for (s, &len) in sizes.iter().enumerate() {
        assert_eq!(grads[s].len(), len);
        for (i, &analytic) in grads[s].iter().enumerate() {
            let orig = probe.param_slices_mut()[s][i];
            probe.param_slices_mut()[s][i] = orig + STEP;
            let up = loss(&probe);
            probe.param_slices_mut()[s][i] = orig - STEP;
            let down = loss(&probe);
            probe.param_slices_mut()[s][i] = orig;
            worst_err = worst_err.max(rel_err(analytic, (up - down) / (2.0 * STEP)));
        }
    }
    worst_err
}

pub fn landmarks_net_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
    let spec = LandmarksSpec {
        window: 3,
        stream: vec![6, 5],
        trunk: vec![4],
    };
    let net = LandmarksNet::new(8, &spec, &mut rng);
    let inputs: Vec<Tensor2> = (0..3).map(|_| random_tensor(3, 8, 1.0, &mut rng)).collect();
    let batch: Vec<&Tensor2> = inputs.iter().collect();
    network_check(&net, &batch, seed)
}

pub fn seq_net_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
    let spec = SeqTextSpec {
        hidden: 4,
        max_len: 6,
        trunk: vec![3],
    };
    let net = SeqTextNet::new(5, &spec, &mut rng);
    let inputs: Vec<Vec<Vec<f64>>> = (1..=3)
        .map(|len| (0..len + 1).map(|_| random_vec(5, 1.0, &mut rng)).collect())
        .collect();
    let batch: Vec<&Vec<Vec<f64>>> = inputs.iter().collect();
    network_check(&net, &batch, seed)
}

pub fn feat_net_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(800 + seed);
    let spec = FeatTextSpec {
        tfidf_stream: vec![5, 4],
        tfidf_dropout: 0.3,
        high_level_stream: vec![3],
        trunk: vec![4],
        vocabulary: VocabularyConfig::default(),
        transductive: false,
    };
    let dim = 12;
    let net = FeatTextNet::new(dim, &spec, &mut rng).unwrap();
    let inputs: Vec<FeatInput> = (0..3)
        .map(|_| {
            let indices: Vec<usize> = (0..dim).filter(|_| rng.random_bool(0.5)).collect();
            let values = random_vec(indices.len(), 1.0, &mut rng);
            let mut high_level = [0.0; 9];
            high_level.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            FeatInput {
                tfidf: SparseVector { dim, indices, values },
                high_level,
            }
        })
        .collect();
    let batch: Vec<&FeatInput> = inputs.iter().collect();
    network_check(&net, &batch, seed)
}

pub fn network_suite(check: fn(u64) -> f64) -> f64 {
    (0..INSTANCES).map(check).fold(0.0, f64::max)
}

/// Every check that the acceptance run reports under the gradient criterion.
pub fn gradient_suite() -> Vec<Check> {
    let layer = |name, worst| Check {
        name,
        worst,
        tol: LAYER_TOL,
    };
    vec![
        layer("dense relu", dense_check(Activation::Relu)),
        layer("dense sigmoid", dense_check(Activation::Sigmoid)),
        layer("dense tanh", dense_check(Activation::Tanh)),
        layer("dense linear", dense_check(Activation::Linear)),
        layer("dense softmax", dense_check(Activation::Softmax)),
        layer("head activations", head_activation_check()),
        layer("lstm", lstm_check()),
        layer("dropout", dropout_check()),
        Check {
            name: "composite loss",
            worst: composite_loss_check(),
            tol: LOSS_TOL,
        },
    ]
}
