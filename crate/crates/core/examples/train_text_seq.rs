//! Train the two-layer LSTM text model over the bundled frozen word vectors.
//!
//! Usage: cargo run --release --example train_text_seq [n_train] [epochs] [embeddings.txt]

use affect::data_io::{bundled_embeddings, generate_synthetic, load_embeddings, UtteranceRecord};
use affect::models::{evaluate_predictions, fit, ModelFamily, ModelSpec, Resources, TrainConfig, TrainingData};
use std::path::Path;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(Ok(2000), |a| a.parse())?;
    let epochs: Option<usize> = args.next().map(|a| a.parse()).transpose()?;
    let embeddings = match args.next() {
        Some(path) => load_embeddings(Path::new(&path))?,
        None => bundled_embeddings(),
    };

    let corpus = generate_synthetic(n, 7, 68, 3);
    let holdout = generate_synthetic(500, 8, 68, 3);
    let train: Vec<&UtteranceRecord> = corpus.records.iter().collect();
    let val: Vec<&UtteranceRecord> = holdout.records.iter().collect();

    let resources = Resources {
        embeddings: Some(embeddings),
        ..Resources::default()
    };
    let data = TrainingData {
        train: &train,
        val: &val,
        unlabeled: &[],
        resources: &resources,
    };
    let mut config = TrainConfig::default_for(ModelFamily::TextSeq);
    if let Some(e) = epochs {
        config.epochs = e;
    }
    let outcome = fit(&ModelSpec::default_for(ModelFamily::TextSeq), &data, &config)?;
    for e in &outcome.log.epochs {
        println!(
            "epoch {:>3}  loss {:>7.4}  val a {:>7.4}  v {:>7.4}",
            e.epoch, e.train_loss, e.val_ccc_arousal, e.val_ccc_valence
        );
    }
    let report = evaluate_predictions(&outcome.model.predict_set(&val, "text-seq")?, &val)?;
    print!("{}", report.table());
    Ok(())
}
