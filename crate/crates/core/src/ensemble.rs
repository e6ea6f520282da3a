//! CCC-weighted late fusion of per-model predictions.
//!
//! Each model's weight for a variable is its validation CCC clamped at zero
//! and normalized over the models; when every CCC clamps to zero the weights
//! are uniform. An utterance that only some models predicted is fused over
//! those models with their weights renormalized.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

use crate::models::{Prediction, PredictionSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("no models to fuse")]
    NoModels,
    #[error("utterance {0} has no prediction from any model")]
    UncoveredUtterance(String),
    #[error("no fusion weight for model {0}")]
    UnknownModel(String),
    #[error("model {0} appears more than once")]
    DuplicateModel(String),
    #[error("validation CCC for model {0} is not finite")]
    NonFiniteCcc(String),
}

pub type Result<T> = std::result::Result<T, FusionError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub model: String,
    pub ccc: f64,
    pub weight: f64,
}

/// Audit record of the fusion weights, sorted by model id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionSpec {
    pub arousal: Vec<WeightEntry>,
    pub valence: Vec<WeightEntry>,
}

fn normalize(cccs: &[(String, f64)]) -> Vec<WeightEntry> {
    let clamped: Vec<f64> = cccs.iter().map(|(_, c)| c.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    let n = cccs.len() as f64;
    cccs.iter()
        .zip(clamped)
        .map(|((model, ccc), c)| WeightEntry {
            model: model.clone(),
            ccc: *ccc,
            weight: if total > 0.0 { c / total } else { 1.0 / n },
        })
        .collect()
}

/// Weights from `(arousal CCC, valence CCC)` per model id.
pub fn compute_weights(val_cccs: &BTreeMap<String, (f64, f64)>) -> Result<FusionSpec> {
    if val_cccs.is_empty() {
        return Err(FusionError::NoModels);
    }
    if let Some((m, _)) = val_cccs.iter().find(|(_, (a, v))| !a.is_finite() || !v.is_finite()) {
        return Err(FusionError::NonFiniteCcc(m.clone()));
    }
    let arousal: Vec<(String, f64)> = val_cccs.iter().map(|(m, (a, _))| (m.clone(), *a)).collect();
    let valence: Vec<(String, f64)> = val_cccs.iter().map(|(m, (_, v))| (m.clone(), *v)).collect();
    Ok(FusionSpec {
        arousal: normalize(&arousal),
        valence: normalize(&valence),
    })
}

impl FusionSpec {
    fn weight(entries: &[WeightEntry], model: &str) -> Option<f64> {
        entries.iter().find(|e| e.model == model).map(|e| e.weight)
    }
}

/// Weighted mean over the contributions present, clamped to their range so
/// rounding never leaves the convex hull. Zero total weight falls back to
/// the plain mean.
fn combine(values: &[(f64, f64)]) -> f64 {
    let total: f64 = values.iter().map(|(_, w)| w).sum();
    let mean = if total > 0.0 {
        values.iter().map(|(x, w)| x * w).sum::<f64>() / total
    } else {
        values.iter().map(|(x, _)| x).sum::<f64>() / values.len() as f64
    };
    let lo = values.iter().map(|(x, _)| *x).fold(f64::INFINITY, f64::min);
    let hi = values.iter().map(|(x, _)| *x).fold(f64::NEG_INFINITY, f64::max);
    mean.clamp(lo, hi)
}

/// Fuses prediction sets with the weights of `spec`.
///
/// Output rows follow first appearance when the sets are visited in model-id
/// order, so the result does not depend on the order of `sets`. Every id in
/// `expected` must be covered by at least one set.
pub fn fuse(sets: &[PredictionSet], spec: &FusionSpec, expected: Option<&[String]>) -> Result<PredictionSet> {
    if sets.is_empty() {
        return Err(FusionError::NoModels);
    }
    let mut ordered: Vec<&PredictionSet> = sets.iter().collect();
    ordered.sort_by(|a, b| a.model_id.cmp(&b.model_id));
    for pair in ordered.windows(2) {
        if pair[0].model_id == pair[1].model_id {
            return Err(FusionError::DuplicateModel(pair[0].model_id.clone()));
        }
    }
    let mut weights = Vec::with_capacity(ordered.len());
    for set in &ordered {
        let wa = FusionSpec::weight(&spec.arousal, &set.model_id);
        let wv = FusionSpec::weight(&spec.valence, &set.model_id);
        match (wa, wv) {
            (Some(a), Some(v)) => weights.push((a, v)),
            _ => return Err(FusionError::UnknownModel(set.model_id.clone())),
        }
    }

    let mut ids: Vec<&str> = Vec::new();
    // per utterance: (value, weight) pairs for arousal and for valence
    let mut contributions: HashMap<&str, [Vec<(f64, f64)>; 2]> = HashMap::new();
    for (set, &(wa, wv)) in ordered.iter().zip(&weights) {
        for row in &set.rows {
            let entry = contributions.entry(row.utterance_id.as_str()).or_insert_with(|| {
                ids.push(row.utterance_id.as_str());
                [Vec::new(), Vec::new()]
            });
            entry[0].push((row.arousal, wa));
            entry[1].push((row.valence, wv));
        }
    }
    if let Some(expected) = expected {
        if let Some(id) = expected.iter().find(|id| !contributions.contains_key(id.as_str())) {
            return Err(FusionError::UncoveredUtterance(id.clone()));
        }
    }

    let rows = ids
        .iter()
        .map(|id| {
            let [a, v] = &contributions[id];
            Prediction {
                utterance_id: id.to_string(),
                arousal: combine(a),
                valence: combine(v),
            }
        })
        .collect();
    Ok(PredictionSet::new("fused", rows))
}
