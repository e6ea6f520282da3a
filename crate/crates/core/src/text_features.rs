//! Transcript features for the feature-engineering text model: a tf-idf
//! vector over word and part-of-speech n-grams, and a small dense vector of
//! lexicon-driven counts.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

pub use crate::neural::SparseVector;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("cannot fit a vocabulary on an empty corpus")]
    EmptyCorpus,
    #[error("missing lexicon file {0}")]
    MissingLexicon(String),
    #[error("{file}:{line}: {message}")]
    LexiconParse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("unknown part-of-speech tag {0:?}")]
    UnknownTag(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TextError>;

/// Lowercased maximal runs of letters, digits, apostrophes and asterisks.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() || ch == '\'' || ch == '*' {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Contiguous n-grams joined with `_`, all n-grams of the first order first.
pub fn ngrams<S: AsRef<str>>(tokens: &[S], orders: &[usize]) -> Vec<String> {
    let mut out = Vec::new();
    for &n in orders {
        if n == 0 || n > tokens.len() {
            continue;
        }
        for window in tokens.windows(n) {
            let parts: Vec<&str> = window.iter().map(AsRef::as_ref).collect();
            out.push(parts.join("_"));
        }
    }
    out
}

/// Coarse universal part-of-speech tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Noun,
    Verb,
    Adj,
    Adv,
    Pron,
    Det,
    Adp,
    Num,
    Conj,
    Prt,
    X,
}

impl PosTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Noun => "NOUN",
            PosTag::Verb => "VERB",
            PosTag::Adj => "ADJ",
            PosTag::Adv => "ADV",
            PosTag::Pron => "PRON",
            PosTag::Det => "DET",
            PosTag::Adp => "ADP",
            PosTag::Num => "NUM",
            PosTag::Conj => "CONJ",
            PosTag::Prt => "PRT",
            PosTag::X => "X",
        }
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PosTag {
    type Err = TextError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "NOUN" => PosTag::Noun,
            "VERB" => PosTag::Verb,
            "ADJ" => PosTag::Adj,
            "ADV" => PosTag::Adv,
            "PRON" => PosTag::Pron,
            "DET" => PosTag::Det,
            "ADP" => PosTag::Adp,
            "NUM" => PosTag::Num,
            "CONJ" => PosTag::Conj,
            "PRT" => PosTag::Prt,
            "X" => PosTag::X,
            other => return Err(TextError::UnknownTag(other.to_string())),
        })
    }
}

/// Word lists driving the tagger and the high-level counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicons {
    pub polarity: BTreeMap<String, f64>,
    pub stopwords: std::collections::BTreeSet<String>,
    pub negations: std::collections::BTreeSet<String>,
    pub pos: BTreeMap<String, PosTag>,
}

pub const POLARITY_FILE: &str = "polarity.tsv";
pub const STOPWORDS_FILE: &str = "stopwords.txt";
pub const NEGATIONS_FILE: &str = "negations.txt";
pub const POS_FILE: &str = "pos_lexicon.tsv";

const BUNDLED_POLARITY: &str = include_str!("../resources/polarity.tsv");
const BUNDLED_STOPWORDS: &str = include_str!("../resources/stopwords.txt");
const BUNDLED_NEGATIONS: &str = include_str!("../resources/negations.txt");
const BUNDLED_POS: &str = include_str!("../resources/pos_lexicon.tsv");

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_pairs<'a>(file: &str, text: &'a str) -> Result<Vec<(usize, &'a str, &'a str)>> {
    content_lines(text)
        .map(|(line, l)| {
            let mut parts = l.split('\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(w), Some(v), None) => Ok((line, w.trim(), v.trim())),
                _ => Err(TextError::LexiconParse {
                    file: file.to_string(),
                    line,
                    message: "expected two tab-separated fields".into(),
                }),
            }
        })
        .collect()
}

impl Lexicons {
    pub fn bundled() -> Self {
        Self::parse(
            BUNDLED_POLARITY,
            BUNDLED_STOPWORDS,
            BUNDLED_NEGATIONS,
            BUNDLED_POS,
        )
        .expect("bundled lexicons are well formed")
    }

    /// Loads the four lexicon files from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<String> {
            let path = dir.join(name);
            if !path.is_file() {
                return Err(TextError::MissingLexicon(path.display().to_string()));
            }
            Ok(std::fs::read_to_string(path)?)
        };
        Self::parse(
            &read(POLARITY_FILE)?,
            &read(STOPWORDS_FILE)?,
            &read(NEGATIONS_FILE)?,
            &read(POS_FILE)?,
        )
    }

    pub fn parse(polarity: &str, stopwords: &str, negations: &str, pos: &str) -> Result<Self> {
        let mut pol = BTreeMap::new();
        for (line, word, score) in parse_pairs(POLARITY_FILE, polarity)? {
            let value: f64 = score.parse().map_err(|_| TextError::LexiconParse {
                file: POLARITY_FILE.into(),
                line,
                message: format!("bad score {score:?}"),
            })?;
            if !(-1.0..=1.0).contains(&value) {
                return Err(TextError::LexiconParse {
                    file: POLARITY_FILE.into(),
                    line,
                    message: format!("score {value} outside [-1, 1]"),
                });
            }
            pol.insert(word.to_lowercase(), value);
        }
        let mut tags = BTreeMap::new();
        for (line, word, tag) in parse_pairs(POS_FILE, pos)? {
            let tag = tag.parse().map_err(|_| TextError::LexiconParse {
                file: POS_FILE.into(),
                line,
                message: format!("unknown tag {tag:?}"),
            })?;
            tags.insert(word.to_lowercase(), tag);
        }
        let words = |text: &str| content_lines(text).map(|(_, l)| l.to_lowercase()).collect();
        Ok(Self {
            polarity: pol,
            stopwords: words(stopwords),
            negations: words(negations),
            pos: tags,
        })
    }

    pub fn is_negation(&self, token: &str) -> bool {
        self.negations.contains(token) || token.ends_with("n't")
    }
}

/// Closed-class lexicon, then suffix rules, then `NOUN`.
pub fn pos_tag<S: AsRef<str>>(tokens: &[S], lexicons: &Lexicons) -> Vec<PosTag> {
    tokens
        .iter()
        .map(|t| tag_token(t.as_ref(), lexicons))
        .collect()
}

fn tag_token(token: &str, lexicons: &Lexicons) -> PosTag {
    if let Some(&tag) = lexicons.pos.get(token) {
        return tag;
    }
    if token.contains('*') {
        return PosTag::X;
    }
    if token.chars().all(|c| c.is_ascii_digit()) {
        return PosTag::Num;
    }
    if token.ends_with("n't") {
        return PosTag::Verb;
    }
    const RULES: &[(&str, PosTag)] = &[
        ("ing", PosTag::Verb),
        ("ed", PosTag::Verb),
        ("ize", PosTag::Verb),
        ("ise", PosTag::Verb),
        ("ly", PosTag::Adv),
        ("ous", PosTag::Adj),
        ("ful", PosTag::Adj),
        ("ive", PosTag::Adj),
        ("able", PosTag::Adj),
        ("ible", PosTag::Adj),
        ("less", PosTag::Adj),
        ("ish", PosTag::Adj),
        ("ic", PosTag::Adj),
        ("al", PosTag::Adj),
    ];
    RULES
        .iter()
        .find(|(suffix, _)| token.len() > suffix.len() + 1 && token.ends_with(suffix))
        .map(|&(_, tag)| tag)
        .unwrap_or(PosTag::Noun)
}

/// One transcript ready for vocabulary fitting or transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub tokens: Vec<String>,
    pub pos: Option<Vec<PosTag>>,
}

impl Document {
    pub fn words(tokens: Vec<String>) -> Self {
        Self { tokens, pos: None }
    }

    /// Tokenizes and tags; `tags` from the input record take precedence.
    pub fn from_text(text: &str, tags: Option<Vec<PosTag>>, lexicons: &Lexicons) -> Self {
        let tokens = tokenize(text);
        let pos = match tags {
            Some(t) if t.len() == tokens.len() => t,
            _ => pos_tag(&tokens, lexicons),
        };
        Self {
            tokens,
            pos: Some(pos),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabularyConfig {
    pub orders: Vec<usize>,
    /// Add n-grams over part-of-speech tags with a `POS:` prefix.
    pub use_pos: bool,
    pub min_df: usize,
}

impl Default for VocabularyConfig {
    fn default() -> Self {
        Self {
            orders: vec![1, 2, 3],
            use_pos: true,
            min_df: 1,
        }
    }
}

fn document_terms(doc: &Document, config: &VocabularyConfig) -> Vec<String> {
    let mut terms = ngrams(&doc.tokens, &config.orders);
    if config.use_pos {
        if let Some(tags) = &doc.pos {
            let names: Vec<&str> = tags.iter().map(|t| t.as_str()).collect();
            terms.extend(
                ngrams(&names, &config.orders)
                    .into_iter()
                    .map(|g| format!("POS:{g}")),
            );
        }
    }
    terms
}

/// Term index with document frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub config: VocabularyConfig,
    pub terms: Vec<String>,
    pub df: Vec<usize>,
    pub n_docs: usize,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Terms come from `corpus`; document frequencies and the document count
    /// also include `transductive` documents.
    pub fn fit(
        corpus: &[Document],
        transductive: &[Document],
        config: &VocabularyConfig,
    ) -> Result<Self> {
        if corpus.is_empty() {
            return Err(TextError::EmptyCorpus);
        }
        let mut terms: Vec<String> = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for doc in corpus {
            for term in document_terms(doc, config) {
                if !seen.contains_key(&term) {
                    seen.insert(term.clone(), terms.len());
                    terms.push(term);
                }
            }
        }
        let mut df = vec![0usize; terms.len()];
        for doc in corpus.iter().chain(transductive) {
            let unique: HashSet<String> = document_terms(doc, config).into_iter().collect();
            for term in unique {
                if let Some(&i) = seen.get(&term) {
                    df[i] += 1;
                }
            }
        }
        let (terms, df): (Vec<_>, Vec<_>) = terms
            .into_iter()
            .zip(df)
            .filter(|(_, d)| *d >= config.min_df.max(1))
            .unzip();
        let mut vocab = Self {
            config: config.clone(),
            terms,
            df,
            n_docs: corpus.len() + transductive.len(),
            index: HashMap::new(),
        };
        vocab.rebuild_index();
        Ok(vocab)
    }

    /// Restores the lookup table after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn document_frequency(&self, term: &str) -> Option<usize> {
        self.index_of(term).map(|i| self.df[i])
    }

    /// Smoothed inverse document frequency `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, index: usize) -> f64 {
        smoothed_idf(self.n_docs, self.df[index])
    }

    pub fn transform(&self, doc: &Document) -> SparseVector {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for term in document_terms(doc, &self.config) {
            if let Some(i) = self.index_of(&term) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let mut indices = Vec::with_capacity(counts.len());
        let mut values = Vec::with_capacity(counts.len());
        for (i, count) in counts {
            indices.push(i);
            values.push(count * self.idf(i));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        SparseVector {
            dim: self.len(),
            indices,
            values,
        }
    }
}

pub fn smoothed_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// Names of the dense high-level features, in vector order.
pub const HIGH_LEVEL_FEATURES: [&str; 9] = [
    "aggregated_polarity",
    "positive_count",
    "neutral_count",
    "negative_count",
    "subjectivity",
    "token_count",
    "stopword_count",
    "swear_count",
    "negation_count",
];

const POLARITY_THRESHOLD: f64 = 0.1;

pub fn is_masked_swear(token: &str) -> bool {
    token.contains('*') && token.chars().any(char::is_alphabetic)
}

pub fn high_level_features<S: AsRef<str>>(tokens: &[S], lexicons: &Lexicons) -> [f64; 9] {
    let mut hits = 0usize;
    let mut polarity_sum = 0.0;
    let (mut positive, mut neutral, mut negative) = (0usize, 0usize, 0usize);
    let (mut stop, mut swear, mut negation) = (0usize, 0usize, 0usize);
    for token in tokens.iter().map(AsRef::as_ref) {
        if let Some(&score) = lexicons.polarity.get(token) {
            hits += 1;
            polarity_sum += score;
            if score > POLARITY_THRESHOLD {
                positive += 1;
            } else if score < -POLARITY_THRESHOLD {
                negative += 1;
            } else {
                neutral += 1;
            }
        }
        if lexicons.stopwords.contains(token) {
            stop += 1;
        }
        if is_masked_swear(token) {
            swear += 1;
        }
        if lexicons.is_negation(token) {
            negation += 1;
        }
    }
    let n = tokens.len();
    let aggregated = if hits > 0 {
        polarity_sum / hits as f64
    } else {
        0.0
    };
    let subjectivity = if n > 0 { hits as f64 / n as f64 } else { 0.0 };
    [
        aggregated,
        positive as f64,
        neutral as f64,
        negative as f64,
        subjectivity,
        n as f64,
        stop as f64,
        swear as f64,
        negation as f64,
    ]
}

/// tf-idf and high-level features of one transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct TextVector {
    pub tfidf: SparseVector,
    pub high_level: [f64; 9],
}

/// Fitted vocabulary plus the lexicons used to tag and count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextFeaturizer {
    pub vocabulary: Vocabulary,
    pub lexicons: Lexicons,
}

impl TextFeaturizer {
    pub fn fit(
        transcripts: &[(&str, Option<Vec<PosTag>>)],
        transductive: &[(&str, Option<Vec<PosTag>>)],
        lexicons: Lexicons,
        config: &VocabularyConfig,
    ) -> Result<Self> {
        let docs = |items: &[(&str, Option<Vec<PosTag>>)]| -> Vec<Document> {
            items
                .iter()
                .map(|(t, tags)| Document::from_text(t, tags.clone(), &lexicons))
                .collect()
        };
        let vocabulary = Vocabulary::fit(&docs(transcripts), &docs(transductive), config)?;
        Ok(Self {
            vocabulary,
            lexicons,
        })
    }

    pub fn transform(&self, text: &str, tags: Option<Vec<PosTag>>) -> TextVector {
        let doc = Document::from_text(text, tags, &self.lexicons);
        TextVector {
            tfidf: self.vocabulary.transform(&doc),
            high_level: high_level_features(&doc.tokens, &self.lexicons),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn words(text: &str) -> Document {
        Document::words(tokenize(text))
    }

    fn uni_bi() -> VocabularyConfig {
        VocabularyConfig {
            orders: vec![1, 2],
            use_pos: false,
            min_df: 1,
        }
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("I don't like this"), ["i", "don't", "like", "this"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("F*** yes!"), ["f***", "yes"]);
    }

    #[test]
    fn ngram_examples() {
        assert_eq!(
            ngrams(&["a", "b", "c"], &[1, 2, 3]),
            ["a", "b", "c", "a_b", "b_c", "a_b_c"]
        );
        assert_eq!(ngrams(&["a"], &[1, 2, 3]), ["a"]);
        assert_eq!(ngrams(&["a", "b"], &[2]), ["a_b"]);
    }

    #[test]
    fn tagger_examples() {
        let lex = Lexicons::bundled();
        assert_eq!(pos_tag(&["the"], &lex), [PosTag::Det]);
        assert_eq!(pos_tag(&["running"], &lex), [PosTag::Verb]);
        assert!(pos_tag::<&str>(&[], &lex).is_empty());
        assert_eq!(pos_tag(&["quickly", "f***", "42"], &lex), [PosTag::Adv, PosTag::X, PosTag::Num]);
    }

    #[test]
    fn record_tags_override_tagger() {
        let lex = Lexicons::bundled();
        let doc = Document::from_text("the cat", Some(vec![PosTag::X, PosTag::X]), &lex);
        assert_eq!(doc.pos.unwrap(), [PosTag::X, PosTag::X]);
    }

    #[test]
    fn vocabulary_counts() {
        let corpus = [words("good movie"), words("bad movie")];
        let v = Vocabulary::fit(&corpus, &[], &uni_bi()).unwrap();
        let mut terms = v.terms.clone();
        terms.sort();
        assert_eq!(terms, ["bad", "bad_movie", "good", "good_movie", "movie"]);
        assert_eq!(v.document_frequency("movie"), Some(2));
        assert_eq!(v.document_frequency("good"), Some(1));
        assert_eq!(v.n_docs, 2);

        let t = Vocabulary::fit(&corpus, &[words("great movie")], &uni_bi()).unwrap();
        assert_eq!(t.n_docs, 3);
        assert_eq!(t.document_frequency("movie"), Some(3));
        assert_eq!(t.index_of("great"), None);

        let single = Vocabulary::fit(&[words("one two two")], &[], &uni_bi()).unwrap();
        assert!(single.df.iter().all(|&d| d == 1));

        assert!(matches!(
            Vocabulary::fit(&[], &[], &uni_bi()),
            Err(TextError::EmptyCorpus)
        ));
    }

    #[test]
    fn tfidf_example() {
        let corpus = [words("good movie"), words("bad movie")];
        let v = Vocabulary::fit(&corpus, &[], &uni_bi()).unwrap();
        let x = v.transform(&words("good movie"));
        let raw_good = 1.5f64.ln() + 1.0;
        assert_abs_diff_eq!(raw_good, 1.405465, epsilon = 1e-6);
        let norm = (2.0 * raw_good * raw_good + 1.0).sqrt();
        let dense = x.to_dense();
        assert_abs_diff_eq!(dense[v.index_of("good").unwrap()], raw_good / norm, epsilon = 1e-12);
        assert_abs_diff_eq!(dense[v.index_of("movie").unwrap()], 1.0 / norm, epsilon = 1e-12);
        assert_abs_diff_eq!(dense[v.index_of("good_movie").unwrap()], raw_good / norm, epsilon = 1e-12);
        assert_abs_diff_eq!(x.norm(), 1.0, epsilon = 1e-12);

        assert_eq!(v.transform(&words("")).nnz(), 0);
        assert_eq!(v.transform(&words("unseen words only")).nnz(), 0);
    }

    #[test]
    fn high_level_examples() {
        let lex = Lexicons::bundled();
        assert_eq!(high_level_features::<&str>(&[], &lex), [0.0; 9]);

        let f = high_level_features(&tokenize("I don't like this"), &lex);
        assert_eq!(f[5], 4.0);
        assert_eq!(f[8], 1.0);
        assert_eq!(f[7], 0.0);
        // "i" and "this" are bundled stop-words
        assert_eq!(f[6], 2.0);
        // "like" is the only polarity hit
        assert_abs_diff_eq!(f[0], 0.2, epsilon = 1e-12);
        assert_eq!(f[1], 1.0);
        assert_abs_diff_eq!(f[4], 0.25, epsilon = 1e-12);

        let s = high_level_features(&tokenize("F*** yes!"), &lex);
        assert_eq!(s[7], 1.0);
        assert!(!is_masked_swear("***"));
    }

    #[test]
    fn missing_lexicon_file() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            Lexicons::load_dir(dir.path()),
            Err(TextError::MissingLexicon(_))
        ));
    }

    #[test]
    fn pos_channel_terms() {
        let lex = Lexicons::bundled();
        let doc = Document::from_text("the movie", None, &lex);
        let v = Vocabulary::fit(&[doc], &[], &VocabularyConfig::default()).unwrap();
        assert!(v.index_of("POS:DET_NOUN").is_some());
        assert!(v.index_of("the_movie").is_some());
    }
}
