//! The three trainable model families, their training loop, grid search and
//! prediction output.
//!
//! A [`ModelBundle`] holds everything needed to predict: the architecture
//! spec, the fitted input preprocessing, the network parameters, the loss
//! weights it was trained with and the optimizer state. It serializes to a
//! self-contained JSON checkpoint.
//!
//! Grid defaults follow [`Grid::default_for`]: λ ∈ {0.5, 1, 2},
//! β ∈ {0, 0.5, 1}, l2 ∈ {1e-4, 1e-3} and two trunk shapes. They are
//! starting points, not tuned values.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use thiserror::Error;

pub mod feat_text;
pub mod landmarks;
pub mod mlp;
mod prediction;
pub mod seq_text;

pub use feat_text::{FeatInput, FeatTextNet, FeatTextSpec};
pub use landmarks::{LandmarksNet, LandmarksSpec};
pub use mlp::{Mlp, Standardizer};
pub use prediction::{evaluate_predictions, MetricsReport, Prediction, PredictionSet, ValidationCcc};
pub use seq_text::{SeqTextNet, SeqTextSpec};

use crate::data_io::UtteranceRecord;
use crate::landmark_features::{build_sequence_input, FeatureError, LandmarkScheme};
use crate::metrics::{self, MetricError};
use crate::neural::{
    composite_loss, head_forward, AdamConfig, AdamState, EmbeddingTable, LossWeights, NeuralError, Target, Tensor2,
};
use crate::text_features::{tokenize, Lexicons, PosTag, TextError, TextFeaturizer, HIGH_LEVEL_FEATURES};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no usable records in the {0} split (need at least 2 labelled)")]
    EmptySplit(&'static str),
    #[error("empty search grid")]
    EmptyGrid,
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("{0} model requires {1}")]
    MissingResource(ModelFamily, &'static str),
    #[error("record {0} has no emotion label but the cross-entropy weight is positive")]
    MissingEmotionLabels(String),
    #[error("record {id} has no input for the {family} model")]
    InputTypeMismatch { family: ModelFamily, id: String },
    #[error("{} labelled utterance(s) have no prediction, first: {}", .0.len(), .0[0])]
    Uncovered(Vec<String>),
    #[error("invalid predictions: {0}")]
    InvalidPredictions(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl ModelError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFamily {
    Landmarks,
    TextSeq,
    TextFeat,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 3] = [ModelFamily::Landmarks, ModelFamily::TextSeq, ModelFamily::TextFeat];

    pub fn needs_transcript(self) -> bool {
        !matches!(self, ModelFamily::Landmarks)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Landmarks => "landmarks",
            ModelFamily::TextSeq => "text-seq",
            ModelFamily::TextFeat => "text-feat",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ModelFamily::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown model {s:?} (expected landmarks, text-seq or text-feat)"))
    }
}

/// Architecture of one model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelSpec {
    Landmarks(LandmarksSpec),
    TextSeq(SeqTextSpec),
    TextFeat(FeatTextSpec),
}

impl ModelSpec {
    pub fn default_for(family: ModelFamily) -> Self {
        match family {
            ModelFamily::Landmarks => ModelSpec::Landmarks(LandmarksSpec::default()),
            ModelFamily::TextSeq => ModelSpec::TextSeq(SeqTextSpec::default()),
            ModelFamily::TextFeat => ModelSpec::TextFeat(FeatTextSpec::default()),
        }
    }

    pub fn family(&self) -> ModelFamily {
        match self {
            ModelSpec::Landmarks(_) => ModelFamily::Landmarks,
            ModelSpec::TextSeq(_) => ModelFamily::TextSeq,
            ModelSpec::TextFeat(_) => ModelFamily::TextFeat,
        }
    }

    pub fn trunk(&self) -> &[usize] {
        match self {
            ModelSpec::Landmarks(s) => &s.trunk,
            ModelSpec::TextSeq(s) => &s.trunk,
            ModelSpec::TextFeat(s) => &s.trunk,
        }
    }

    pub fn with_trunk(mut self, trunk: Vec<usize>) -> Self {
        match &mut self {
            ModelSpec::Landmarks(s) => s.trunk = trunk,
            ModelSpec::TextSeq(s) => s.trunk = trunk,
            ModelSpec::TextFeat(s) => s.trunk = trunk,
        }
        self
    }

    fn validate(&self) -> Result<()> {
        let positive = |sizes: &[usize]| sizes.iter().all(|&s| s > 0);
        let ok = match self {
            ModelSpec::Landmarks(s) => s.window > 0 && !s.stream.is_empty() && positive(&s.stream) && positive(&s.trunk),
            ModelSpec::TextSeq(s) => s.hidden > 0 && s.max_len > 0 && positive(&s.trunk),
            ModelSpec::TextFeat(s) => {
                !s.tfidf_stream.is_empty()
                    && positive(&s.tfidf_stream)
                    && positive(&s.high_level_stream)
                    && positive(&s.trunk)
                    && (0.0..1.0).contains(&s.tfidf_dropout)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidSpec(format!("{self:?}")))
        }
    }
}

/// Optimisation settings for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Minibatch size; CCC terms use the statistics of each minibatch.
    pub batch_size: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub l2: f64,
    pub lambda: f64,
    pub beta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 32,
            seed: 7,
            learning_rate: 1e-3,
            l2: 1e-4,
            lambda: 1.0,
            beta: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn default_for(family: ModelFamily) -> Self {
        let epochs = match family {
            ModelFamily::Landmarks => 20,
            ModelFamily::TextSeq => 30,
            ModelFamily::TextFeat => 10,
        };
        Self {
            epochs,
            ..Self::default()
        }
    }

    pub fn loss_weights(&self) -> Result<LossWeights> {
        Ok(LossWeights::new(self.lambda, self.beta)?)
    }

    fn validate(&self) -> Result<()> {
        let rate_ok = self.learning_rate > 0.0;
        let l2_ok = self.l2 >= 0.0;
        if self.batch_size < 2 || !rate_ok || !l2_ok {
            return Err(ModelError::InvalidSpec(format!(
                "batch size must be at least 2 and learning rate positive, got {} and {}",
                self.batch_size, self.learning_rate
            )));
        }
        self.loss_weights().map(|_| ())
    }
}

/// Resources a model family may need beyond the corpus.
#[derive(Debug, Clone)]
pub struct Resources {
    pub lexicons: Lexicons,
    pub embeddings: Option<EmbeddingTable>,
}

impl Default for Resources {
    fn default() -> Self {
        Self {
            lexicons: Lexicons::bundled(),
            embeddings: None,
        }
    }
}

/// Records for one training run. `unlabeled` transcripts only contribute
/// document frequencies, and only when the spec asks for transductive idf.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub train: &'a [&'a UtteranceRecord],
    pub val: &'a [&'a UtteranceRecord],
    pub unlabeled: &'a [&'a UtteranceRecord],
    pub resources: &'a Resources,
}

/// Forward and backward passes of a trainable network.
pub trait Network: Clone {
    type Input;
    type Cache;

    fn param_count(&self) -> usize;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;
    /// Eval-mode logits, `B x 9`.
    fn infer(&self, batch: &[&Self::Input]) -> std::result::Result<Tensor2, NeuralError>;
    fn forward_train(
        &self,
        batch: &[&Self::Input],
        rng: &mut ChaCha8Rng,
    ) -> std::result::Result<(Tensor2, Self::Cache), NeuralError>;
    /// Parameter gradients in [`Network::param_slices_mut`] order.
    fn backward(&self, cache: Self::Cache, grad_logits: &Tensor2) -> std::result::Result<Vec<Vec<f64>>, NeuralError>;
}

/// Fitted preprocessing plus network for each family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Model {
    Landmarks {
        scheme: LandmarkScheme,
        standardizer: Standardizer,
        net: LandmarksNet,
    },
    TextSeq {
        max_len: usize,
        embeddings: EmbeddingTable,
        net: SeqTextNet,
    },
    TextFeat {
        featurizer: TextFeaturizer,
        standardizer: Standardizer,
        net: FeatTextNet,
    },
}

fn landmark_input(
    record: &UtteranceRecord,
    window: usize,
    scheme: &LandmarkScheme,
    standardizer: Option<&Standardizer>,
) -> Result<Tensor2> {
    let seq = build_sequence_input(&record.frames, window, scheme)?;
    let mut m = Tensor2::from_vec(window, scheme.descriptor_len(), seq.to_matrix())?;
    if let Some(s) = standardizer {
        for r in 0..m.rows {
            s.apply(m.row_mut(r));
        }
    }
    Ok(m)
}

fn token_rows(text: &str, max_len: usize, table: &EmbeddingTable) -> Vec<Vec<f64>> {
    let tokens = tokenize(text);
    let n = tokens.len().clamp(1, max_len);
    let m = table.lookup(&tokens, n);
    m.iter_rows().map(<[f64]>::to_vec).collect()
}

fn as_refs(docs: &[(String, Option<Vec<PosTag>>)]) -> Vec<(&str, Option<Vec<PosTag>>)> {
    docs.iter().map(|(t, p)| (t.as_str(), p.clone())).collect()
}

fn feat_input(text: &str, tags: Option<&Vec<PosTag>>, featurizer: &TextFeaturizer, standardizer: &Standardizer) -> FeatInput {
    let v = featurizer.transform(text, tags.cloned());
    let mut high = v.high_level;
    standardizer.apply(&mut high);
    FeatInput {
        tfidf: v.tfidf,
        high_level: high,
    }
}

impl Model {
    pub fn family(&self) -> ModelFamily {
        match self {
            Model::Landmarks { .. } => ModelFamily::Landmarks,
            Model::TextSeq { .. } => ModelFamily::TextSeq,
            Model::TextFeat { .. } => ModelFamily::TextFeat,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Model::Landmarks { net, .. } => net.param_count(),
            Model::TextSeq { net, .. } => net.param_count(),
            Model::TextFeat { net, .. } => net.param_count(),
        }
    }

    /// Whether the record carries this model's modality.
    pub fn accepts(&self, record: &UtteranceRecord) -> bool {
        !self.family().needs_transcript() || record.transcript.is_some()
    }

    fn rebuild_indexes(&mut self) {
        match self {
            Model::Landmarks { .. } => {}
            Model::TextSeq { embeddings, .. } => embeddings.rebuild_index(),
            Model::TextFeat { featurizer, .. } => featurizer.vocabulary.rebuild_index(),
        }
    }

    /// Eval-mode `(arousal, valence)` for records this model accepts, in
    /// chunks to bound memory.
    fn predict_records(&self, records: &[&UtteranceRecord]) -> Result<Vec<(f64, f64)>> {
        const CHUNK: usize = 256;
        let mut out = Vec::with_capacity(records.len());
        for chunk in records.chunks(CHUNK) {
            let logits = match self {
                Model::Landmarks {
                    scheme,
                    standardizer,
                    net,
                } => {
                    let xs = chunk
                        .iter()
                        .map(|r| landmark_input(r, net.window, scheme, Some(standardizer)))
                        .collect::<Result<Vec<_>>>()?;
                    net.infer(&xs.iter().collect::<Vec<_>>())?
                }
                Model::TextSeq {
                    max_len,
                    embeddings,
                    net,
                } => {
                    let xs = chunk
                        .iter()
                        .map(|r| Ok(token_rows(self.transcript(r)?, *max_len, embeddings)))
                        .collect::<Result<Vec<_>>>()?;
                    net.infer(&xs.iter().collect::<Vec<_>>())?
                }
                Model::TextFeat {
                    featurizer,
                    standardizer,
                    net,
                } => {
                    let xs = chunk
                        .iter()
                        .map(|r| Ok(feat_input(self.transcript(r)?, r.pos_tags.as_ref(), featurizer, standardizer)))
                        .collect::<Result<Vec<_>>>()?;
                    net.infer(&xs.iter().collect::<Vec<_>>())?
                }
            };
            for row in logits.iter_rows() {
                let h = head_forward(row)?;
                out.push((h.arousal, h.valence));
            }
        }
        Ok(out)
    }

    fn transcript<'r>(&self, record: &'r UtteranceRecord) -> Result<&'r str> {
        record.transcript.as_deref().ok_or_else(|| ModelError::InputTypeMismatch {
            family: self.family(),
            id: record.id.clone(),
        })
    }
}

/// A model with everything needed to predict or resume training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub spec: ModelSpec,
    pub seed: u64,
    pub loss_weights: LossWeights,
    pub model: Model,
    pub optimizer: Option<AdamState>,
}

impl ModelBundle {
    pub fn family(&self) -> ModelFamily {
        self.spec.family()
    }

    pub fn param_count(&self) -> usize {
        self.model.param_count()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| ModelError::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| ModelError::io(path, e))?;
        let mut bundle: ModelBundle = serde_json::from_reader(std::io::BufReader::new(file))?;
        bundle.model.rebuild_indexes();
        Ok(bundle)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut bundle: ModelBundle = serde_json::from_str(text)?;
        bundle.model.rebuild_indexes();
        Ok(bundle)
    }

    /// Predicts every accepted record; the rest are listed as omitted.
    pub fn predict_set(&self, records: &[&UtteranceRecord], model_id: &str) -> Result<PredictionSet> {
        let (accepted, omitted): (Vec<&UtteranceRecord>, Vec<&UtteranceRecord>) =
            records.iter().copied().partition(|r| self.model.accepts(r));
        let values = self.model.predict_records(&accepted)?;
        let rows = accepted
            .iter()
            .zip(values)
            .map(|(r, (arousal, valence))| Prediction {
                utterance_id: r.id.clone(),
                arousal,
                valence,
            })
            .collect();
        Ok(PredictionSet {
            model_id: model_id.to_string(),
            rows,
            omitted: omitted.iter().map(|r| r.id.clone()).collect(),
            validation: None,
        })
    }

    /// Eval-mode prediction for one record.
    pub fn predict_one(&self, record: &UtteranceRecord) -> Result<(f64, f64)> {
        if !self.model.accepts(record) {
            return Err(ModelError::InputTypeMismatch {
                family: self.family(),
                id: record.id.clone(),
            });
        }
        Ok(self.model.predict_records(&[record])?[0])
    }
}

/// Builds an untrained model, fitting its preprocessing on the training
/// records. Parameters depend only on `spec`, `seed` and those records.
pub fn build_model(spec: &ModelSpec, seed: u64, data: &TrainingData<'_>) -> Result<ModelBundle> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let family = spec.family();
    let train: Vec<&UtteranceRecord> = data
        .train
        .iter()
        .copied()
        .filter(|r| !family.needs_transcript() || r.transcript.is_some())
        .collect();
    if train.is_empty() {
        return Err(ModelError::EmptySplit("train"));
    }
    let model = match spec {
        ModelSpec::Landmarks(s) => {
            let scheme = LandmarkScheme::for_points(train[0].landmark_count())?;
            let inputs = train
                .iter()
                .map(|r| landmark_input(r, s.window, &scheme, None))
                .collect::<Result<Vec<_>>>()?;
            let standardizer = Standardizer::fit(
                scheme.descriptor_len(),
                inputs.iter().flat_map(|m| m.iter_rows()),
            );
            let net = LandmarksNet::new(scheme.descriptor_len(), s, &mut rng);
            Model::Landmarks {
                scheme,
                standardizer,
                net,
            }
        }
        ModelSpec::TextSeq(s) => {
            let embeddings = data
                .resources
                .embeddings
                .clone()
                .ok_or(ModelError::MissingResource(family, "word embeddings"))?;
            let net = SeqTextNet::new(embeddings.dim, s, &mut rng);
            Model::TextSeq {
                max_len: s.max_len,
                embeddings,
                net,
            }
        }
        ModelSpec::TextFeat(s) => {
            let docs = |rs: &[&UtteranceRecord]| -> Vec<(String, Option<Vec<PosTag>>)> {
                rs.iter()
                    .filter_map(|r| Some((r.transcript.clone()?, r.pos_tags.clone())))
                    .collect()
            };
            let labelled = docs(&train);
            let extra = if s.transductive {
                let mut others: Vec<&UtteranceRecord> = data.val.to_vec();
                others.extend(data.unlabeled);
                docs(&others)
            } else {
                Vec::new()
            };
            let featurizer = TextFeaturizer::fit(
                &as_refs(&labelled),
                &as_refs(&extra),
                data.resources.lexicons.clone(),
                &s.vocabulary,
            )?;
            let high: Vec<[f64; 9]> = labelled
                .iter()
                .map(|(t, p)| featurizer.transform(t, p.clone()).high_level)
                .collect();
            let standardizer = Standardizer::fit(HIGH_LEVEL_FEATURES.len(), high.iter().map(|h| h.as_slice()));
            if featurizer.vocabulary.is_empty() {
                return Err(ModelError::InvalidSpec("tf-idf vocabulary is empty".into()));
            }
            let net = FeatTextNet::new(featurizer.vocabulary.len(), s, &mut rng)?;
            Model::TextFeat {
                featurizer,
                standardizer,
                net,
            }
        }
    };
    Ok(ModelBundle {
        spec: spec.clone(),
        seed,
        loss_weights: LossWeights::default(),
        model,
        optimizer: None,
    })
}

/// One row of the training log. `best_*` are running maxima of the
/// validation CCC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_ccc_arousal: f64,
    pub val_ccc_valence: f64,
    pub best_ccc_arousal: f64,
    pub best_ccc_valence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub seed: u64,
    /// Eval-mode loss over the whole training set before the first update.
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Set when the validation split was too small and the CCC columns were
    /// computed on the training records instead.
    pub validation_on_train: bool,
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.epochs {
            w.serialize(e)?;
        }
        let bytes = w.into_inner().map_err(|e| ModelError::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn best_arousal(&self) -> f64 {
        self.epochs.last().map_or(f64::NEG_INFINITY, |e| e.best_ccc_arousal)
    }

    pub fn best_valence(&self) -> f64 {
        self.epochs.last().map_or(f64::NEG_INFINITY, |e| e.best_ccc_valence)
    }
}

/// Final model, the snapshots with the best validation CCC per variable,
/// and the log.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelBundle,
    pub best_arousal: ModelBundle,
    pub best_valence: ModelBundle,
    pub log: TrainLog,
}

struct Fit<N> {
    last: N,
    best_arousal: N,
    best_valence: N,
    optimizer: AdamState,
    log: TrainLog,
}

fn eval_outputs<N: Network>(net: &N, data: &[(N::Input, Target)]) -> Result<Tensor2> {
    let inputs: Vec<&N::Input> = data.iter().map(|(x, _)| x).collect();
    let mut rows = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(256) {
        let logits = net.infer(chunk)?;
        rows.extend(logits.iter_rows().map(<[f64]>::to_vec));
    }
    Ok(Tensor2::from_rows(&rows)?)
}

fn eval_ccc<N: Network>(net: &N, data: &[(N::Input, Target)]) -> Result<(f64, f64)> {
    let logits = eval_outputs(net, data)?;
    let (mut ya, mut pa, mut yv, mut pv) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for ((_, t), row) in data.iter().zip(logits.iter_rows()) {
        let h = head_forward(row)?;
        ya.push(t.arousal);
        pa.push(h.arousal);
        yv.push(t.valence);
        pv.push(h.valence);
    }
    Ok((metrics::ccc(&ya, &pa)?, metrics::ccc(&yv, &pv)?))
}

fn eval_loss<N: Network>(net: &N, data: &[(N::Input, Target)], weights: LossWeights) -> Result<f64> {
    let logits = eval_outputs(net, data)?;
    let targets: Vec<Target> = data.iter().map(|(_, t)| *t).collect();
    Ok(composite_loss(&logits, &targets, weights)?.loss)
}

/// Shuffled minibatches; a trailing batch of one joins the previous batch
/// since a CCC needs at least two items.
fn minibatches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut batches: Vec<&[usize]> = order.chunks(size).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() < 2) {
        batches.pop();
        let start = (batches.len() - 1) * size;
        *batches.last_mut().expect("at least one batch") = &order[start..];
    }
    batches
}

fn fit_network<N: Network>(
    mut net: N,
    train: &[(N::Input, Target)],
    val: &[(N::Input, Target)],
    config: &TrainConfig,
    weights: LossWeights,
) -> Result<Fit<N>> {
    if train.len() < 2 {
        return Err(ModelError::EmptySplit("train"));
    }
    let validation_on_train = val.len() < 2;
    let monitor = if validation_on_train { train } else { val };
    let sizes: Vec<usize> = net.param_slices_mut().iter().map(|s| s.len()).collect();
    let mut adam = AdamState::new(
        AdamConfig {
            learning_rate: config.learning_rate,
            l2: config.l2,
            ..AdamConfig::default()
        },
        &sizes,
    );
    // same seed as initialisation, separate stream
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let initial_loss = eval_loss(&net, train, weights)?;
    let mut best_arousal = net.clone();
    let mut best_valence = net.clone();
    let (mut best_a, mut best_v) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let batches = minibatches(&order, config.batch_size);
        for batch in &batches {
            let inputs: Vec<&N::Input> = batch.iter().map(|&i| &train[i].0).collect();
            let targets: Vec<Target> = batch.iter().map(|&i| train[i].1).collect();
            let (logits, cache) = net.forward_train(&inputs, &mut rng)?;
            let out = composite_loss(&logits, &targets, weights)?;
            loss_sum += out.loss;
            let grads = net.backward(cache, &out.grad_logits)?;
            let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
            adam.update(&mut net.param_slices_mut(), &grad_refs)?;
        }
        let (ccc_a, ccc_v) = eval_ccc(&net, monitor)?;
        if ccc_a > best_a {
            best_a = ccc_a;
            best_arousal = net.clone();
        }
        if ccc_v > best_v {
            best_v = ccc_v;
            best_valence = net.clone();
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches.len() as f64,
            val_ccc_arousal: ccc_a,
            val_ccc_valence: ccc_v,
            best_ccc_arousal: best_a,
            best_ccc_valence: best_v,
        };
        debug!(
            "epoch {epoch}: loss {:.4} val ccc a={ccc_a:.4} v={ccc_v:.4}",
            record.train_loss
        );
        epochs.push(record);
    }
    let final_loss = eval_loss(&net, train, weights)?;
    info!("trained {} epochs: loss {initial_loss:.4} -> {final_loss:.4}", config.epochs);
    Ok(Fit {
        last: net,
        best_arousal,
        best_valence,
        optimizer: adam,
        log: TrainLog {
            seed: config.seed,
            initial_loss,
            final_loss,
            validation_on_train,
            epochs,
        },
    })
}

fn labelled<'r>(
    records: &[&'r UtteranceRecord],
    family: ModelFamily,
    beta: f64,
) -> Result<Vec<(&'r UtteranceRecord, Target)>> {
    let mut out = Vec::new();
    for r in records {
        let (Some(arousal), Some(valence)) = (r.arousal, r.valence) else {
            continue;
        };
        if family.needs_transcript() && r.transcript.is_none() {
            continue;
        }
        if beta > 0.0 && r.emotion.is_none() {
            return Err(ModelError::MissingEmotionLabels(r.id.clone()));
        }
        out.push((
            *r,
            Target {
                arousal,
                valence,
                emotion: r.emotion,
            },
        ));
    }
    Ok(out)
}

/// Trains `bundle` on the labelled training records, monitoring the
/// validation records after every epoch. Records without both labels, and
/// records without a transcript for text models, are skipped.
pub fn train(mut bundle: ModelBundle, data: &TrainingData<'_>, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let weights = config.loss_weights()?;
    let family = bundle.family();
    let train_set = labelled(data.train, family, config.beta)?;
    let val_set = labelled(data.val, family, config.beta)?;
    if train_set.len() < 2 {
        return Err(ModelError::EmptySplit("train"));
    }

    macro_rules! run {
        ($net:expr, $prep:expr) => {{
            let prep = $prep;
            let tr = train_set
                .iter()
                .map(|(r, t)| Ok((prep(r)?, *t)))
                .collect::<Result<Vec<_>>>()?;
            let va = val_set
                .iter()
                .map(|(r, t)| Ok((prep(r)?, *t)))
                .collect::<Result<Vec<_>>>()?;
            fit_network($net.clone(), &tr, &va, config, weights)?
        }};
    }

    let (fit_model, fit_a, fit_v, optimizer, log) = match &bundle.model {
        Model::Landmarks {
            scheme,
            standardizer,
            net,
        } => {
            let fit = run!(net, |r: &UtteranceRecord| landmark_input(r, net.window, scheme, Some(standardizer)));
            let wrap = |n: LandmarksNet| Model::Landmarks {
                scheme: *scheme,
                standardizer: standardizer.clone(),
                net: n,
            };
            (wrap(fit.last), wrap(fit.best_arousal), wrap(fit.best_valence), fit.optimizer, fit.log)
        }
        Model::TextSeq {
            max_len,
            embeddings,
            net,
        } => {
            let fit = run!(net, |r: &UtteranceRecord| -> Result<Vec<Vec<f64>>> {
                Ok(token_rows(r.transcript.as_deref().unwrap_or(""), *max_len, embeddings))
            });
            let wrap = |n: SeqTextNet| Model::TextSeq {
                max_len: *max_len,
                embeddings: embeddings.clone(),
                net: n,
            };
            (wrap(fit.last), wrap(fit.best_arousal), wrap(fit.best_valence), fit.optimizer, fit.log)
        }
        Model::TextFeat {
            featurizer,
            standardizer,
            net,
        } => {
            let fit = run!(net, |r: &UtteranceRecord| -> Result<FeatInput> {
                Ok(feat_input(
                    r.transcript.as_deref().unwrap_or(""),
                    r.pos_tags.as_ref(),
                    featurizer,
                    standardizer,
                ))
            });
            let wrap = |n: FeatTextNet| Model::TextFeat {
                featurizer: featurizer.clone(),
                standardizer: standardizer.clone(),
                net: n,
            };
            (wrap(fit.last), wrap(fit.best_arousal), wrap(fit.best_valence), fit.optimizer, fit.log)
        }
    };

    bundle.loss_weights = weights;
    bundle.optimizer = Some(optimizer);
    let snapshot = |model: Model| ModelBundle {
        model,
        optimizer: None,
        ..bundle.clone()
    };
    let best_arousal = snapshot(fit_a);
    let best_valence = snapshot(fit_v);
    bundle.model = fit_model;
    Ok(TrainOutcome {
        model: bundle,
        best_arousal,
        best_valence,
        log,
    })
}

/// Builds with `config.seed` and trains.
pub fn fit(spec: &ModelSpec, data: &TrainingData<'_>, config: &TrainConfig) -> Result<TrainOutcome> {
    let bundle = build_model(spec, config.seed, data)?;
    train(bundle, data, config)
}

/// Axes of a grid search; every combination is trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    pub l2: Vec<f64>,
    pub trunk: Vec<Vec<usize>>,
}

impl Grid {
    pub fn default_for(family: ModelFamily) -> Self {
        let trunk = match family {
            ModelFamily::Landmarks => vec![vec![64], vec![128, 64]],
            ModelFamily::TextSeq => vec![vec![], vec![16]],
            ModelFamily::TextFeat => vec![vec![32], vec![64, 32]],
        };
        Self {
            lambda: vec![0.5, 1.0, 2.0],
            beta: vec![0.0, 0.5, 1.0],
            l2: vec![1e-4, 1e-3],
            trunk,
        }
    }

    /// Every combination, λ varying slowest and trunk fastest.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &lambda in &self.lambda {
            for &beta in &self.beta {
                for &l2 in &self.l2 {
                    for trunk in &self.trunk {
                        out.push(GridPoint {
                            lambda,
                            beta,
                            l2,
                            trunk: trunk.clone(),
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lambda: f64,
    pub beta: f64,
    pub l2: f64,
    pub trunk: Vec<usize>,
}

impl GridPoint {
    pub fn apply(&self, spec: &ModelSpec, base: &TrainConfig) -> (ModelSpec, TrainConfig) {
        (
            spec.clone().with_trunk(self.trunk.clone()),
            TrainConfig {
                lambda: self.lambda,
                beta: self.beta,
                l2: self.l2,
                ..base.clone()
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub index: usize,
    pub point: GridPoint,
    pub param_count: usize,
    pub val_ccc_arousal: f64,
    pub val_ccc_valence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub entries: Vec<GridEntry>,
    pub best_arousal: usize,
    pub best_valence: usize,
}

impl GridResult {
    pub fn best_arousal_entry(&self) -> &GridEntry {
        &self.entries[self.best_arousal]
    }

    pub fn best_valence_entry(&self) -> &GridEntry {
        &self.entries[self.best_valence]
    }
}

/// Picks the entry with the highest score; ties go to the smaller model,
/// then to the earlier grid index.
fn select(entries: &[GridEntry], score: impl Fn(&GridEntry) -> f64) -> usize {
    entries
        .iter()
        .min_by(|a, b| {
            score(b)
                .partial_cmp(&score(a))
                .unwrap_or(Ordering::Equal)
                .then(a.param_count.cmp(&b.param_count))
                .then(a.index.cmp(&b.index))
        })
        .map(|e| e.index)
        .expect("non-empty grid")
}

/// Trains every grid point and selects, independently for arousal and
/// valence, the point with the best validation CCC seen during training.
pub fn grid_search(
    spec: &ModelSpec,
    base: &TrainConfig,
    grid: &Grid,
    data: &TrainingData<'_>,
) -> Result<GridResult> {
    let points = grid.points();
    if points.is_empty() {
        return Err(ModelError::EmptyGrid);
    }
    let mut entries = Vec::with_capacity(points.len());
    for (index, point) in points.into_iter().enumerate() {
        let (spec_i, config_i) = point.apply(spec, base);
        let outcome = fit(&spec_i, data, &config_i)?;
        info!(
            "grid point {index}: a={:.4} v={:.4}",
            outcome.log.best_arousal(),
            outcome.log.best_valence()
        );
        entries.push(GridEntry {
            index,
            param_count: outcome.model.param_count(),
            val_ccc_arousal: outcome.log.best_arousal(),
            val_ccc_valence: outcome.log.best_valence(),
            point,
        });
    }
    let best_arousal = select(&entries, |e| e.val_ccc_arousal);
    let best_valence = select(&entries, |e| e.val_ccc_valence);
    Ok(GridResult {
        entries,
        best_arousal,
        best_valence,
    })
}
