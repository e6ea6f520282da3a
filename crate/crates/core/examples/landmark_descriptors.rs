//! Per-frame landmark descriptors: normalized coordinates, their temporal
//! derivatives and centroid-relative geometry.
//!
//! Usage: cargo run --example landmark_descriptors [window]

use affect::data_io::generate_synthetic;
use affect::landmark_features::{build_sequence_input, LandmarkScheme};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let window: usize = std::env::args().nth(1).map_or(Ok(9), |a| a.parse())?;
    let corpus = generate_synthetic(1, 3, 68, 6);
    let record = &corpus.records[0];
    let scheme = LandmarkScheme::default();
    let input = build_sequence_input(&record.frames, window, &scheme)?;
    println!(
        "{}: {} source frames resampled to {}, {} values per frame",
        record.id,
        record.frames.len(),
        input.window(),
        scheme.descriptor_len()
    );
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for (t, f) in input.frames.iter().enumerate() {
        println!(
            "t={t}  |velocity| {:.4}  |acceleration| {:.4}  mean radius {:.4}",
            norm(&f.velocity),
            norm(&f.acceleration),
            f.euclid.iter().sum::<f64>() / f.euclid.len() as f64
        );
    }
    Ok(())
}
