//! Small grid search over loss weights and trunk sizes for the landmark
//! model, selecting the best point per variable on validation CCC.
//!
//! Usage: cargo run --release --example grid_search [epochs]

use affect::data_io::{generate_synthetic, Split};
use affect::models::{grid_search, Grid, ModelFamily, ModelSpec, Resources, TrainConfig, TrainingData};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs: usize = std::env::args().nth(1).map_or(Ok(15), |a| a.parse())?;
    let corpus = generate_synthetic(400, 5, 68, 3);
    let resources = Resources::default();
    let data = TrainingData {
        train: &corpus.split(Split::Train),
        val: &corpus.split(Split::Val),
        unlabeled: &[],
        resources: &resources,
    };
    let family = ModelFamily::Landmarks;
    let mut base = TrainConfig::default_for(family);
    base.epochs = epochs;
    let grid = Grid {
        lambda: vec![0.5, 2.0],
        beta: vec![0.0, 0.5],
        l2: vec![1e-4],
        trunk: vec![vec![16], vec![32, 16]],
    };
    let result = grid_search(&ModelSpec::default_for(family), &base, &grid, &data)?;
    for e in &result.entries {
        println!(
            "#{:<2} λ {:.1} β {:.1} trunk {:?}  params {:>6}  a {:.4}  v {:.4}",
            e.index, e.point.lambda, e.point.beta, e.point.trunk, e.param_count, e.val_ccc_arousal, e.val_ccc_valence
        );
    }
    println!("best arousal: #{}  best valence: #{}", result.best_arousal, result.best_valence);
    Ok(())
}
