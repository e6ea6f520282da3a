//! Valence/arousal regression from facial landmarks and transcripts.
//!
//! The crate provides three trainable models (a shared-stream landmarks
//! network, an LSTM transcript model over frozen word vectors, and a
//! two-stream tf-idf + lexicon-feature network), all trained against a
//! concordance-correlation loss, plus CCC-weighted late fusion of their
//! predictions.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod cli;
pub mod data_io;
pub mod ensemble;
pub mod landmark_features;
pub mod metrics;
pub mod models;
pub mod neural;
pub mod text_features;
