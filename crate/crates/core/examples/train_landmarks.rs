//! Train the shared-stream landmarks model on a synthetic corpus and score
//! it on an independently generated held-out set.
//!
//! Usage: cargo run --release --example train_landmarks [n_train] [epochs]

use affect::data_io::{generate_synthetic, UtteranceRecord};
use affect::models::{evaluate_predictions, fit, ModelFamily, ModelSpec, Resources, TrainConfig, TrainingData};
use std::time::Instant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(Ok(2000), |a| a.parse())?;
    let epochs: Option<usize> = args.next().map(|a| a.parse()).transpose()?;

    let corpus = generate_synthetic(n, 7, 68, 9);
    let holdout = generate_synthetic(500, 8, 68, 9);
    let train: Vec<&UtteranceRecord> = corpus.records.iter().collect();
    let val: Vec<&UtteranceRecord> = holdout.records.iter().collect();

    let resources = Resources::default();
    let data = TrainingData {
        train: &train,
        val: &val,
        unlabeled: &[],
        resources: &resources,
    };
    let mut config = TrainConfig::default_for(ModelFamily::Landmarks);
    if let Some(e) = epochs {
        config.epochs = e;
    }

    let start = Instant::now();
    let outcome = fit(&ModelSpec::default_for(ModelFamily::Landmarks), &data, &config)?;
    println!("trained {} epochs in {:.1?}", config.epochs, start.elapsed());
    println!("epoch  loss     val_a    val_v");
    for e in &outcome.log.epochs {
        println!(
            "{:>5}  {:>7.4}  {:>7.4}  {:>7.4}",
            e.epoch, e.train_loss, e.val_ccc_arousal, e.val_ccc_valence
        );
    }

    let predictions = outcome.model.predict_set(&val, "landmarks")?;
    let report = evaluate_predictions(&predictions, &val)?;
    print!("{}", report.table());
    Ok(())
}
