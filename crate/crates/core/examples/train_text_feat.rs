//! Train the two-stream tf-idf + high-level feature text model with
//! transductive document frequencies and score it on held-out transcripts.
//!
//! Usage: cargo run --release --example train_text_feat [n_train] [epochs]

use affect::data_io::{generate_synthetic, UtteranceRecord};
use affect::models::{evaluate_predictions, fit, Model, ModelFamily, ModelSpec, Resources, TrainConfig, TrainingData};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(Ok(2000), |a| a.parse())?;
    let epochs: Option<usize> = args.next().map(|a| a.parse()).transpose()?;

    let corpus = generate_synthetic(n, 7, 68, 3);
    let holdout = generate_synthetic(500, 8, 68, 3);
    let train: Vec<&UtteranceRecord> = corpus.records.iter().collect();
    let val: Vec<&UtteranceRecord> = holdout.records.iter().collect();

    let resources = Resources::default();
    // held-out transcripts count towards document frequencies only
    let data = TrainingData {
        train: &train,
        val: &val,
        unlabeled: &[],
        resources: &resources,
    };
    let mut config = TrainConfig::default_for(ModelFamily::TextFeat);
    if let Some(e) = epochs {
        config.epochs = e;
    }
    let outcome = fit(&ModelSpec::default_for(ModelFamily::TextFeat), &data, &config)?;
    if let Model::TextFeat { featurizer, .. } = &outcome.model.model {
        println!("vocabulary: {} terms over {} documents", featurizer.vocabulary.len(), featurizer.vocabulary.n_docs);
    }
    for e in &outcome.log.epochs {
        println!(
            "epoch {:>3}  loss {:>7.4}  val a {:>7.4}  v {:>7.4}",
            e.epoch, e.train_loss, e.val_ccc_arousal, e.val_ccc_valence
        );
    }
    let report = evaluate_predictions(&outcome.model.predict_set(&val, "text-feat")?, &val)?;
    print!("{}", report.table());
    Ok(())
}
