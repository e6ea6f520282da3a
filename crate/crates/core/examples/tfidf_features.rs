//! Word and part-of-speech n-gram tf-idf plus lexicon-based high-level
//! features for a handful of transcripts.
//!
//! Usage: cargo run --example tfidf_features

use affect::text_features::{Lexicons, TextFeaturizer, VocabularyConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let train = [
        "i really love this wonderful day",
        "this is not good at all",
        "what a terrible awful mess",
        "the day was fine i guess",
    ];
    // unlabeled text only contributes document frequencies
    let unlabeled = ["not a wonderful mess"];
    let items = |texts: &[&'static str]| texts.iter().map(|t| (*t, None)).collect::<Vec<_>>();
    let featurizer =
        TextFeaturizer::fit(&items(&train), &items(&unlabeled), Lexicons::bundled(), &VocabularyConfig::default())?;
    let vocab = &featurizer.vocabulary;
    println!("{} terms over {} documents", vocab.len(), vocab.n_docs);

    let v = featurizer.transform("this day is not wonderful", None);
    let mut weights: Vec<(&str, f64)> = v.tfidf.indices.iter().zip(&v.tfidf.values).map(|(&i, &w)| (vocab.terms[i].as_str(), w)).collect();
    weights.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (term, w) in weights.iter().take(8) {
        println!("{w:.4}  {term}");
    }
    println!("high-level: {:?}", v.high_level);
    Ok(())
}
