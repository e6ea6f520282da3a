mod common;

use affect::neural::Activation;
use common::*;

#[test]
fn dense_layers_every_activation() {
    for act in [
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::Linear,
        Activation::Softmax,
    ] {
        let err = dense_check(act);
        assert!(err <= LAYER_TOL, "{act:?}: {err:e}");
    }
}

#[test]
fn head_activations() {
    let err = head_activation_check();
    assert!(err <= LAYER_TOL, "{err:e}");
}

#[test]
fn lstm_full_unroll() {
    let err = lstm_check();
    assert!(err <= LAYER_TOL, "{err:e}");
}

#[test]
fn dropout_masks() {
    let err = dropout_check();
    assert!(err <= LAYER_TOL, "{err:e}");
}

#[test]
fn composite_loss_logits() {
    let err = composite_loss_check();
    assert!(err <= LOSS_TOL, "{err:e}");
}

#[test]
fn ccc_gradient_against_differences() {
    let err = ccc_gradient_check(100);
    assert!(err <= 1e-6, "{err:e}");
}

#[test]
fn landmarks_network() {
    let err = network_suite(landmarks_net_check);
    assert!(err <= LAYER_TOL, "{err:e}");
}

#[test]
fn sequence_text_network() {
    let err = network_suite(seq_net_check);
    assert!(err <= LAYER_TOL, "{err:e}");
}

#[test]
fn feature_text_network_with_dropout() {
    let err = network_suite(feat_net_check);
    assert!(err <= LAYER_TOL, "{err:e}");
}
