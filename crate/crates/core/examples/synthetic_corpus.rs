//! Generate a labeled synthetic corpus, write it with its manifest and load
//! it back.
//!
//! Usage: cargo run --example synthetic_corpus [n] [seed]

use affect::data_io::{generate_synthetic, load_corpus, save_corpus, Split};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(Ok(200), |a| a.parse())?;
    let seed: u64 = args.next().map_or(Ok(1), |a| a.parse())?;

    let corpus = generate_synthetic(n, seed, 68, 5);
    let dir = std::env::temp_dir().join(format!("affect-synth-{seed}"));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("corpus.jsonl");
    let manifest = save_corpus(&corpus, &path)?;
    println!("wrote {} ({} train, {} val, {} test)", path.display(), manifest.train, manifest.val, manifest.test);

    let loaded = load_corpus(&path)?;
    assert_eq!(loaded, corpus);
    for r in loaded.split(Split::Test).iter().take(5) {
        println!(
            "{}  a {:.3}  v {:+.3}  emotion {}  {:?}",
            r.id,
            r.arousal.unwrap_or(f64::NAN),
            r.valence.unwrap_or(f64::NAN),
            r.emotion.unwrap_or(0),
            r.transcript.as_deref().unwrap_or("")
        );
    }
    Ok(())
}
