//! Corpus schema and loaders, word-vector files, and the synthetic corpus
//! generator.
//!
//! A corpus is a JSON-lines file with one [`UtteranceRecord`] per line. A
//! sidecar `<file>.manifest.json` records the landmark count, split sizes
//! and a SHA-256 of the corpus bytes.

use log::warn;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::landmark_features::{FaceBox, LandmarkFrame};
use crate::neural::{EmbeddingTable, EMOTION_CLASSES};
use crate::text_features::{Lexicons, PosTag};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: invalid field `{field}`: {message}")]
    SchemaViolation {
        line: usize,
        field: &'static str,
        message: String,
    },
    #[error("line {line}: duplicate utterance id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{0} is empty")]
    EmptyFile(String),
    #[error("manifest mismatch: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (expected train, val or test)")),
        }
    }
}

/// Categorical emotion indices used by the seven-way head.
pub const EMOTION_NAMES: [&str; EMOTION_CLASSES] =
    ["anger", "disgust", "fear", "happy", "neutral", "sad", "surprise"];

/// One annotated utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    pub video_id: String,
    pub utterance_index: usize,
    pub frames: Vec<LandmarkFrame>,
    #[serde(default)]
    pub transcript: Option<String>,
    #[serde(default)]
    pub pos_tags: Option<Vec<PosTag>>,
    #[serde(default)]
    pub arousal: Option<f64>,
    #[serde(default)]
    pub valence: Option<f64>,
    #[serde(default)]
    pub emotion: Option<usize>,
    pub split: Split,
}

impl UtteranceRecord {
    /// Checks every field invariant; `expected_points` pins the landmark count.
    pub fn validate(&self, expected_points: Option<usize>) -> std::result::Result<(), (&'static str, String)> {
        if self.id.is_empty() {
            return Err(("id", "empty".into()));
        }
        if self.frames.is_empty() {
            return Err(("frames", "no frames".into()));
        }
        let k = expected_points.unwrap_or(self.frames[0].points.len());
        if k < 3 {
            return Err(("frames", format!("need at least 3 landmarks, got {k}")));
        }
        for (t, frame) in self.frames.iter().enumerate() {
            if frame.points.len() != k {
                return Err((
                    "frames",
                    format!("frame {t} has {} landmarks, expected {k}", frame.points.len()),
                ));
            }
            let b = frame.face_box;
            if !(b.width > 0.0 && b.height > 0.0) {
                return Err(("face_box", format!("frame {t}: non-positive box size")));
            }
            if !frame.points.iter().flatten().chain(&[b.x, b.y, b.width, b.height]).all(|v| v.is_finite()) {
                return Err(("frames", format!("frame {t}: non-finite coordinate")));
            }
        }
        if let Some(a) = self.arousal {
            if !(0.0..=1.0).contains(&a) {
                return Err(("arousal", format!("{a} outside [0, 1]")));
            }
        }
        if let Some(v) = self.valence {
            if !(-1.0..=1.0).contains(&v) {
                return Err(("valence", format!("{v} outside [-1, 1]")));
            }
        }
        if let Some(e) = self.emotion {
            if e >= EMOTION_CLASSES {
                return Err(("emotion", format!("class {e} outside 0..{}", EMOTION_CLASSES - 1)));
            }
        }
        Ok(())
    }

    pub fn landmark_count(&self) -> usize {
        self.frames.first().map_or(0, |f| f.points.len())
    }

    pub fn has_transcript(&self) -> bool {
        self.transcript.is_some()
    }
}

/// Sidecar summary of a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub landmarks: usize,
    pub total: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub sha256: String,
}

/// Validated utterances in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub records: Vec<UtteranceRecord>,
    pub landmarks: usize,
}

impl Corpus {
    pub fn new(records: Vec<UtteranceRecord>) -> Result<Self> {
        let landmarks = records.first().map_or(0, UtteranceRecord::landmark_count);
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            r.validate(Some(landmarks)).map_err(|(field, message)| DataError::SchemaViolation {
                line: i + 1,
                field,
                message,
            })?;
            if !seen.insert(r.id.clone()) {
                return Err(DataError::DuplicateId {
                    line: i + 1,
                    id: r.id.clone(),
                });
            }
        }
        Ok(Self { records, landmarks })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split(&self, split: Split) -> Vec<&UtteranceRecord> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.records.iter().filter(|r| r.split == split).count()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let bytes = self.to_jsonl()?;
        Ok(Manifest {
            landmarks: self.landmarks,
            total: self.len(),
            train: self.count(Split::Train),
            val: self.count(Split::Val),
            test: self.count(Split::Test),
            sha256: hex::encode(Sha256::digest(bytes.as_bytes())),
        })
    }
}

pub fn manifest_path(corpus: &Path) -> PathBuf {
    let mut name = corpus.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    corpus.with_file_name(name)
}

/// Writes the corpus as JSON lines plus its manifest sidecar.
pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<Manifest> {
    let body = corpus.to_jsonl()?;
    fs::write(path, &body).map_err(io_err(path))?;
    let manifest = corpus.manifest()?;
    let mpath = manifest_path(path);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&mpath, text).map_err(io_err(&mpath))?;
    Ok(manifest)
}

/// Reads and validates a JSON-lines corpus. Blank lines are skipped; errors
/// carry 1-based line numbers. When a manifest sidecar exists, its landmark
/// count is enforced.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let manifest: Option<Manifest> = {
        let mpath = manifest_path(path);
        if mpath.is_file() {
            let text = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
            Some(serde_json::from_str(&text)?)
        } else {
            None
        }
    };
    let mut expected = manifest.as_ref().map(|m| m.landmarks).filter(|&k| k > 0);
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: UtteranceRecord = serde_json::from_str(&line).map_err(|e| DataError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        record
            .validate(expected)
            .map_err(|(field, message)| DataError::SchemaViolation {
                line: line_no,
                field,
                message,
            })?;
        expected.get_or_insert(record.landmark_count());
        if !seen.insert(record.id.clone()) {
            return Err(DataError::DuplicateId {
                line: line_no,
                id: record.id,
            });
        }
        records.push(record);
    }
    if let Some(m) = &manifest {
        if m.total != records.len() {
            return Err(DataError::Manifest(format!(
                "manifest lists {} records, file has {}",
                m.total,
                records.len()
            )));
        }
    }
    Ok(Corpus {
        landmarks: expected.unwrap_or(0),
        records,
    })
}

/// Loads whitespace-separated `word v1 ... vD` lines into a frozen table.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut dim = None;
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io_err(path))?;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let vector = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| DataError::Parse {
                    line: line_no,
                    message: format!("bad number {p:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let d = *dim.get_or_insert(vector.len());
        if vector.len() != d || d == 0 {
            return Err(DataError::DimensionMismatch {
                line: line_no,
                expected: d,
                found: vector.len(),
            });
        }
        if !seen.insert(word.to_string()) {
            warn!("{}:{line_no}: duplicate word {word:?}, keeping the later vector", path.display());
        }
        entries.push((word.to_string(), vector));
    }
    let Some(dim) = dim else {
        return Err(DataError::EmptyFile(path.display().to_string()));
    };
    EmbeddingTable::from_entries(dim, entries, true).map_err(|e| DataError::Parse {
        line: 0,
        message: e.to_string(),
    })
}

pub fn save_embeddings(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let mut out = fs::File::create(path).map_err(io_err(path))?;
    for (i, word) in table.words.iter().enumerate() {
        let values: Vec<String> = table.vectors.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{word} {}", values.join(" ")).map_err(io_err(path))?;
    }
    Ok(())
}

const BUNDLED_EMBEDDINGS: &str = include_str!("../resources/embeddings50.txt");

/// The small 50-dimensional table shipped for tests and examples: about 200
/// lexicon words with seeded random vectors.
pub fn bundled_embeddings() -> EmbeddingTable {
    let entries = BUNDLED_EMBEDDINGS
        .lines()
        .filter_map(|l| {
            let mut parts = l.split_whitespace();
            let word = parts.next()?.to_string();
            Some((word, parts.map(|p| p.parse().expect("bundled embeddings are numeric")).collect()))
        })
        .collect();
    EmbeddingTable::from_entries(50, entries, true).expect("bundled embeddings are 50-d")
}

/// Emotion class from the (arousal, valence) quadrant: happy, anger, sad or
/// neutral.
pub fn quadrant_emotion(arousal: f64, valence: f64) -> usize {
    match (arousal >= 0.5, valence >= 0.0) {
        (true, true) => 3,
        (true, false) => 0,
        (false, false) => 5,
        (false, true) => 4,
    }
}

/// Neutral face in box-relative coordinates for the 68-point layout.
pub fn ibug68_template() -> Vec<[f64; 2]> {
    use std::f64::consts::PI;
    let mut pts = Vec::with_capacity(68);
    // jaw 0..=16, from the left temple round the chin
    for i in 0..17 {
        let th = PI - i as f64 * PI / 16.0;
        pts.push([0.5 + 0.42 * th.cos(), 0.30 + 0.66 * th.sin()]);
    }
    // brows 17..=26
    for side in [0.18, 0.58] {
        for i in 0..5 {
            let u = i as f64 / 4.0;
            pts.push([side + 0.24 * u, 0.22 - 0.04 * (PI * u).sin()]);
        }
    }
    // nose bridge 27..=30
    for i in 0..4 {
        pts.push([0.5, 0.30 + 0.08 * i as f64]);
    }
    // nostrils 31..=35
    for i in 0..5 {
        let u = i as f64 / 4.0;
        pts.push([0.40 + 0.20 * u, 0.60 + 0.02 * (PI * u).sin()]);
    }
    // eyes 36..=47
    for cx in [0.32, 0.68] {
        for i in 0..6 {
            let th = PI - i as f64 * PI / 3.0;
            pts.push([cx + 0.07 * th.cos(), 0.35 - 0.03 * th.sin()]);
        }
    }
    // outer lip 48..=59: left corner, over the top, back along the bottom
    for i in 0..12 {
        let th = PI - i as f64 * PI / 6.0;
        pts.push([0.5 + 0.16 * th.cos(), 0.76 - 0.06 * th.sin()]);
    }
    // inner lip 60..=67
    for i in 0..8 {
        let th = PI - i as f64 * PI / 4.0;
        pts.push([0.5 + 0.11 * th.cos(), 0.76 - 0.025 * th.sin()]);
    }
    pts
}

/// Landmark groups moved by the synthetic deformation.
struct TemplateGroups {
    template: Vec<[f64; 2]>,
    lower_lip: Vec<usize>,
    corners: Vec<usize>,
    brows: Vec<usize>,
}

fn template_for(points: usize) -> TemplateGroups {
    if points == 68 {
        return TemplateGroups {
            template: ibug68_template(),
            lower_lip: (55..=59).chain(65..=67).collect(),
            corners: vec![48, 54, 60, 64],
            brows: (17..=26).collect(),
        };
    }
    use std::f64::consts::PI;
    // elliptical ring with point 0 at the top
    let template: Vec<[f64; 2]> = (0..points)
        .map(|k| {
            let th = -PI / 2.0 + 2.0 * PI * k as f64 / points as f64;
            [0.5 + 0.38 * th.cos(), 0.5 + 0.38 * th.sin()]
        })
        .collect();
    let pick = |lo: f64, hi: f64| -> Vec<usize> {
        template
            .iter()
            .enumerate()
            .filter(|(_, p)| p[1] > lo && p[1] <= hi)
            .map(|(i, _)| i)
            .collect()
    };
    TemplateGroups {
        lower_lip: pick(0.80, 1.0),
        corners: pick(0.60, 0.80),
        brows: pick(0.0, 0.25),
        template,
    }
}

const MASKED_SWEARS: [&str; 5] = ["f***", "s***", "d***", "b****", "a******"];

fn synthetic_transcript<R: Rng + ?Sized>(rng: &mut R, valence: f64, lex: &Lexicons) -> String {
    let positive: Vec<&str> = lex
        .polarity
        .iter()
        .filter(|(_, &s)| s > 0.1)
        .map(|(w, _)| w.as_str())
        .collect();
    let negative: Vec<&str> = lex
        .polarity
        .iter()
        .filter(|(_, &s)| s < -0.1)
        .map(|(w, _)| w.as_str())
        .collect();
    let negations: Vec<&str> = lex.negations.iter().map(String::as_str).collect();
    let len = rng.random_range(5..=15usize);
    let p_positive = (valence + 1.0) / 2.0;
    let mut words: Vec<&str> = Vec::with_capacity(len + 1);
    while words.len() < len {
        let wants_positive = rng.random::<f64>() < p_positive;
        let negate = rng.random::<f64>() < 0.1 && len - words.len() >= 2;
        // a negation flips the polarity of the word that follows it
        let draw_positive = wants_positive != negate;
        if negate {
            words.push(negations.choose(rng).expect("negation list"));
        }
        let pool = if draw_positive { &positive } else { &negative };
        words.push(pool.choose(rng).expect("polarity list"));
    }
    if rng.random::<f64>() < 0.3 * (-valence).max(0.0) {
        let at = rng.random_range(0..=words.len());
        words.insert(at, MASKED_SWEARS.choose(rng).expect("swears"));
    }
    words.join(" ")
}

/// Split sizes for `n` records at 70/15/15, rounding train and val.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = (0.70 * n as f64).round() as usize;
    let val = ((0.15 * n as f64).round() as usize).min(n - train);
    (train, val, n - train - val)
}

/// Deterministic synthetic corpus of `n` utterances with `points` landmarks
/// over `window` frames.
///
/// Arousal opens the mouth and raises the brows, valence lifts the mouth
/// corners, each ramping linearly across the frames; transcripts mix
/// positive and negative lexicon words in proportion to valence.
pub fn generate_synthetic(n: usize, seed: u64, points: usize, window: usize) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, 0.005).expect("valid sigma");
    let groups = template_for(points.max(3));
    let lex = Lexicons::bundled();
    let (n_train, n_val, _) = split_sizes(n);
    let window = window.max(1);

    let records = (0..n)
        .map(|i| {
            let arousal: f64 = rng.random_range(0.0..=1.0);
            let valence: f64 = rng.random_range(-1.0..=1.0);
            let width: f64 = rng.random_range(120.0..240.0);
            let face_box = FaceBox {
                x: rng.random_range(50.0..250.0),
                y: rng.random_range(30.0..150.0),
                width,
                height: width * rng.random_range(1.0..1.2),
            };
            let frames = (0..window)
                .map(|t| {
                    let ramp = (t + 1) as f64 / window as f64;
                    let mut pts = groups.template.clone();
                    for &k in &groups.lower_lip {
                        pts[k][1] += 0.15 * arousal * ramp;
                    }
                    for &k in &groups.corners {
                        pts[k][1] -= 0.05 * valence * ramp;
                    }
                    for &k in &groups.brows {
                        pts[k][1] -= 0.08 * arousal * ramp;
                    }
                    let points = pts
                        .iter()
                        .map(|p| {
                            let x = p[0] + jitter.sample(&mut rng);
                            let y = p[1] + jitter.sample(&mut rng);
                            [face_box.x + x * face_box.width, face_box.y + y * face_box.height]
                        })
                        .collect();
                    LandmarkFrame { points, face_box }
                })
                .collect();
            let transcript = synthetic_transcript(&mut rng, valence, &lex);
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            UtteranceRecord {
                id: format!("s{seed}-{i:05}"),
                video_id: format!("s{seed}-v{:04}", i / 10),
                utterance_index: i % 10,
                frames,
                transcript: Some(transcript),
                pos_tags: None,
                arousal: Some(arousal),
                valence: Some(valence),
                emotion: Some(quadrant_emotion(arousal, valence)),
                split,
            }
        })
        .collect();
    Corpus {
        records,
        landmarks: points.max(3),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_is_inside_unit_box() {
        let t = ibug68_template();
        assert_eq!(t.len(), 68);
        assert!(t.iter().flatten().all(|&v| (0.0..=1.0).contains(&v)));
        // nose bridge runs straight down
        assert_eq!(t[27][0], t[30][0]);
        assert!(t[30][1] > t[27][1]);
    }

    #[test]
    fn quadrant_mapping() {
        assert_eq!(quadrant_emotion(0.9, 0.5), 3);
        assert_eq!(quadrant_emotion(0.9, -0.5), 0);
        assert_eq!(quadrant_emotion(0.1, -0.5), 5);
        assert_eq!(quadrant_emotion(0.1, 0.5), 4);
    }

    #[test]
    fn split_sizes_round() {
        assert_eq!(split_sizes(100), (70, 15, 15));
        assert_eq!(split_sizes(1), (1, 0, 0));
        assert_eq!(split_sizes(7), (5, 1, 1));
    }

    #[test]
    fn generator_is_deterministic() {
        let a = generate_synthetic(20, 3, 68, 9);
        let b = generate_synthetic(20, 3, 68, 9);
        assert_eq!(a, b);
        assert_ne!(a, generate_synthetic(20, 4, 68, 9));
    }

    #[test]
    fn generated_records_validate() {
        for k in [68, 12] {
            let c = generate_synthetic(30, 1, k, 5);
            assert_eq!(Corpus::new(c.records.clone()).unwrap(), c);
            assert!(c.records.iter().all(|r| r.frames.len() == 5 && r.landmark_count() == k));
        }
    }

    #[test]
    fn split_parsing() {
        assert_eq!("val".parse::<Split>().unwrap(), Split::Val);
        assert!("dev".parse::<Split>().is_err());
    }

    #[test]
    fn bundled_table_shape() {
        let t = bundled_embeddings();
        assert_eq!(t.dim, 50);
        assert_eq!(t.len(), 200);
        assert!(t.frozen);
    }
}
