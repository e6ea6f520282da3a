//! CCC-weighted late fusion of two noisy prediction sets.
//!
//! Usage: cargo run --example late_fusion

use affect::data_io::{generate_synthetic, UtteranceRecord};
use affect::ensemble::{compute_weights, fuse};
use affect::models::{evaluate_predictions, Prediction, PredictionSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn noisy(id: &str, records: &[&UtteranceRecord], sigma: f64, seed: u64) -> PredictionSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |x: f64| x + sigma * (rng.random::<f64>() - 0.5);
    let rows = records
        .iter()
        .map(|r| Prediction {
            utterance_id: r.id.clone(),
            arousal: jitter(r.arousal.unwrap()).clamp(0.0, 1.0),
            valence: jitter(r.valence.unwrap()).clamp(-1.0, 1.0),
        })
        .collect();
    PredictionSet::new(id, rows)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_synthetic(300, 9, 68, 2);
    let records: Vec<&UtteranceRecord> = corpus.records.iter().collect();
    let sets = [noisy("face", &records, 0.3, 1), noisy("text", &records, 0.8, 2)];

    let mut cccs = BTreeMap::new();
    for set in &sets {
        let report = evaluate_predictions(set, &records)?;
        println!("{}:\n{}", set.model_id, report.table());
        cccs.insert(set.model_id.clone(), (report.arousal.ccc, report.valence.ccc));
    }
    let spec = compute_weights(&cccs)?;
    println!("{}", serde_json::to_string_pretty(&spec)?);
    let fused = fuse(&sets, &spec, None)?;
    print!("fused:\n{}", evaluate_predictions(&fused, &records)?.table());
    Ok(())
}
