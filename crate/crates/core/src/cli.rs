//! Command-line front end: `synth`, `train`, `evaluate`, `fuse` and
//! `extract-features`.
//!
//! Exit codes: 0 success, 1 I/O or data error, 2 argument error, 3 the
//! corpus lacks the modality a model needs, 4 predictions do not cover the
//! utterances being scored or fused.
//!
//! Every command writes its fully resolved configuration as JSON next to
//! its outputs. Nothing time-dependent is written, so identical arguments
//! give byte-identical files.

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::data_io::{self, load_corpus, load_embeddings, save_corpus, Split, UtteranceRecord};
use crate::ensemble::{compute_weights, fuse, FusionError};
use crate::landmark_features::{build_sequence_input, LandmarkScheme, DEFAULT_WINDOW};
use crate::models::{
    evaluate_predictions, fit, ModelBundle, ModelError, ModelFamily, ModelSpec, PredictionSet, Resources,
    TrainConfig, TrainingData, ValidationCcc,
};
use crate::text_features::Lexicons;

#[derive(Debug, Parser)]
#[command(name = "affect", version, about = "Valence/arousal regression from landmarks and transcripts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
    /// Train one model family on the train split, monitoring the val split.
    Train(TrainArgs),
    /// Score a checkpoint or a prediction file against a corpus split.
    Evaluate(EvaluateArgs),
    /// CCC-weighted late fusion of prediction files.
    Fuse(FuseArgs),
    /// Dump per-utterance landmark descriptors as JSON lines.
    ExtractFeatures(ExtractArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Landmarks per frame.
    #[arg(long, default_value_t = 68)]
    pub points: usize,
    /// Frames per utterance.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub frames: usize,
    /// Corpus file to write (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_family)]
    pub model: ModelFamily,
    #[arg(long)]
    pub corpus: PathBuf,
    /// JSON with any `TrainConfig` fields and an optional `spec` object.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Word vectors, required by text-seq.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Directory with replacement lexicon files.
    #[arg(long)]
    pub lexicons: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "val")]
    pub split: Split,
    /// Checkpoint to run.
    #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
    pub model: Option<PathBuf>,
    /// Existing prediction CSV to score.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Output directory for metrics.json (and predictions.csv with --model).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Prediction CSVs, as `id=path` or a bare path whose stem is the id.
    #[arg(long = "predictions", required = true)]
    pub predictions: Vec<String>,
    /// JSON map of model id to `{"arousal": ccc, "valence": ccc}`.
    #[arg(long)]
    pub cccs: PathBuf,
    /// With --split, every utterance of that split must be covered.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, requires = "corpus")]
    pub split: Option<Split>,
    /// Fused CSV; the fusion audit is written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub split: Option<Split>,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_family(s: &str) -> Result<ModelFamily, String> {
    s.parse()
}

/// Failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Display) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }

    fn data(e: impl Display) -> Self {
        Self::new(1, e)
    }

    fn usage(e: impl Display) -> Self {
        Self::new(2, e)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Uncovered(_) => Self::new(4, e),
            ModelError::MissingResource(..) | ModelError::InvalidSpec(_) => Self::usage(e),
            other => Self::data(other),
        }
    }
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        match e {
            FusionError::UncoveredUtterance(_) => Self::new(4, e),
            other => Self::usage(other),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Fuse(a) => fuse_cmd(a),
        Command::ExtractFeatures(a) => extract(a),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::data)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn make_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))
}

fn make_parent(file: &Path) -> CliResult<()> {
    match file.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => make_dir(dir),
        _ => Ok(()),
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn synth(a: SynthArgs) -> CliResult<()> {
    if a.n == 0 || a.points < 3 || a.frames == 0 {
        return Err(CliError::usage("--n and --frames must be positive and --points at least 3"));
    }
    let corpus = data_io::generate_synthetic(a.n, a.seed, a.points, a.frames);
    make_parent(&a.out)?;
    let manifest = save_corpus(&corpus, &a.out).map_err(CliError::data)?;
    write_json(
        &sidecar(&a.out, ".run.json"),
        &json!({
            "command": "synth",
            "n": a.n,
            "seed": a.seed,
            "points": a.points,
            "frames": a.frames,
            "out": display(&a.out),
            "sha256": manifest.sha256,
        }),
    )?;
    println!("wrote {} utterances to {}", corpus.len(), a.out.display());
    Ok(())
}

/// Family defaults overlaid with the fields present in the config file.
fn resolve_config(a: &TrainArgs) -> CliResult<(ModelSpec, TrainConfig)> {
    let mut spec = ModelSpec::default_for(a.model);
    let mut config = serde_json::to_value(TrainConfig::default_for(a.model)).map_err(CliError::data)?;
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let user: Value =
            serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let Value::Object(fields) = user else {
            return Err(CliError::usage("config must be a JSON object"));
        };
        for (key, value) in fields {
            if key == "spec" {
                let mut tagged = value;
                if let Value::Object(m) = &mut tagged {
                    m.insert("family".into(), json!(a.model.as_str()));
                }
                spec = serde_json::from_value(tagged).map_err(|e| CliError::usage(format!("spec: {e}")))?;
            } else {
                config[key] = value;
            }
        }
    }
    let mut config: TrainConfig = serde_json::from_value(config).map_err(|e| CliError::usage(format!("config: {e}")))?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(epochs) = a.epochs {
        config.epochs = epochs;
    }
    Ok((spec, config))
}

fn train(a: TrainArgs) -> CliResult<()> {
    let (spec, config) = resolve_config(&a)?;
    if a.model == ModelFamily::TextSeq && a.embeddings.is_none() {
        return Err(CliError::usage("text-seq needs --embeddings"));
    }
    let corpus = load_corpus(&a.corpus).map_err(CliError::data)?;
    if a.model.needs_transcript() && !corpus.records.iter().any(UtteranceRecord::has_transcript) {
        return Err(CliError::new(3, format!("{} has no transcripts for a {} model", a.corpus.display(), a.model)));
    }
    let lexicons = match &a.lexicons {
        Some(dir) => Lexicons::load_dir(dir).map_err(CliError::usage)?,
        None => Lexicons::bundled(),
    };
    let embeddings = match &a.embeddings {
        Some(p) => Some(load_embeddings(p).map_err(CliError::data)?),
        None => None,
    };
    let resources = Resources { lexicons, embeddings };
    let train_split = corpus.split(Split::Train);
    let val_split = corpus.split(Split::Val);
    let test_split = corpus.split(Split::Test);
    let data = TrainingData {
        train: &train_split,
        val: &val_split,
        unlabeled: &test_split,
        resources: &resources,
    };
    let outcome = fit(&spec, &data, &config)?;

    make_dir(&a.out)?;
    outcome.model.save(&a.out.join("model.json"))?;
    outcome.best_arousal.save(&a.out.join("best_arousal.json"))?;
    outcome.best_valence.save(&a.out.join("best_valence.json"))?;
    write_text(&a.out.join("train_log.csv"), &outcome.log.to_csv()?)?;
    let validation = ValidationCcc {
        arousal: outcome.log.best_arousal(),
        valence: outcome.log.best_valence(),
    };
    write_json(&a.out.join("validation.json"), &validation)?;
    write_json(
        &a.out.join("run_config.json"),
        &json!({
            "command": "train",
            "model": a.model.as_str(),
            "corpus": display(&a.corpus),
            "embeddings": a.embeddings.as_deref().map(display),
            "lexicons": a.lexicons.as_deref().map(display),
            "seed": config.seed,
            "train": config,
            "spec": spec,
            "initial_loss": outcome.log.initial_loss,
            "final_loss": outcome.log.final_loss,
            "validation_on_train": outcome.log.validation_on_train,
        }),
    )?;
    println!(
        "trained {} for {} epochs; best validation ccc arousal {:.4} valence {:.4}",
        a.model, config.epochs, validation.arousal, validation.valence
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> CliResult<()> {
    let corpus = load_corpus(&a.corpus).map_err(CliError::data)?;
    let records = corpus.split(a.split);
    make_dir(&a.out)?;
    let (predictions, source) = match (&a.model, &a.predictions) {
        (Some(path), _) => {
            let bundle = ModelBundle::load(path)?;
            let set = bundle.predict_set(&records, bundle.family().as_str())?;
            set.write_csv(&a.out.join("predictions.csv"))?;
            if !set.omitted.is_empty() {
                eprintln!("{} utterance(s) lack the model's modality", set.omitted.len());
            }
            (set, json!({ "model": display(path) }))
        }
        (None, Some(path)) => (PredictionSet::read_csv(path)?, json!({ "predictions": display(path) })),
        (None, None) => return Err(CliError::usage("give --model or --predictions")),
    };
    let report = evaluate_predictions(&predictions, &records)?;
    write_json(&a.out.join("metrics.json"), &report)?;
    write_json(
        &a.out.join("run_config.json"),
        &json!({
            "command": "evaluate",
            "corpus": display(&a.corpus),
            "split": a.split.to_string(),
            "source": source,
        }),
    )?;
    print!("{}", report.table());
    Ok(())
}

#[derive(serde::Deserialize)]
struct CccEntry {
    arousal: f64,
    valence: f64,
}

fn fuse_cmd(a: FuseArgs) -> CliResult<()> {
    let mut sets = Vec::new();
    let mut inputs = BTreeMap::new();
    for item in &a.predictions {
        let (id, path) = match item.split_once('=') {
            Some((id, path)) => (Some(id.to_string()), PathBuf::from(path)),
            None => (None, PathBuf::from(item)),
        };
        let mut set = PredictionSet::read_csv(&path)?;
        if let Some(id) = id {
            set.model_id = id;
        }
        inputs.insert(set.model_id.clone(), display(&path));
        sets.push(set);
    }
    let text = fs::read_to_string(&a.cccs).map_err(|e| CliError::usage(format!("{}: {e}", a.cccs.display())))?;
    let raw: BTreeMap<String, CccEntry> =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", a.cccs.display())))?;
    let used: BTreeMap<String, (f64, f64)> = raw
        .into_iter()
        .filter(|(id, _)| inputs.contains_key(id))
        .map(|(id, c)| (id, (c.arousal, c.valence)))
        .collect();
    let spec = compute_weights(&used)?;

    let expected: Option<Vec<String>> = match (&a.corpus, a.split) {
        (Some(path), split) => {
            let corpus = load_corpus(path).map_err(CliError::data)?;
            let records = match split {
                Some(s) => corpus.split(s),
                None => corpus.records.iter().collect(),
            };
            Some(records.iter().map(|r| r.id.clone()).collect())
        }
        (None, _) => None,
    };
    let fused = fuse(&sets, &spec, expected.as_deref())?;
    make_parent(&a.out)?;
    fused.write_csv(&a.out)?;
    write_json(&sidecar(&a.out, ".fusion.json"), &spec)?;
    write_json(
        &sidecar(&a.out, ".run.json"),
        &json!({
            "command": "fuse",
            "predictions": inputs,
            "cccs": display(&a.cccs),
            "corpus": a.corpus.as_deref().map(display),
            "split": a.split.map(|s| s.to_string()),
            "out": display(&a.out),
        }),
    )?;
    println!("fused {} model(s) into {} rows", sets.len(), fused.len());
    Ok(())
}

fn extract(a: ExtractArgs) -> CliResult<()> {
    if a.window == 0 {
        return Err(CliError::usage("--window must be positive"));
    }
    let corpus = load_corpus(&a.corpus).map_err(CliError::data)?;
    let scheme = LandmarkScheme::for_points(corpus.landmarks.max(3)).map_err(CliError::data)?;
    let records: Vec<&UtteranceRecord> = match a.split {
        Some(s) => corpus.split(s),
        None => corpus.records.iter().collect(),
    };
    make_parent(&a.out)?;
    let file = fs::File::create(&a.out).map_err(|e| CliError::data(format!("{}: {e}", a.out.display())))?;
    let mut out = std::io::BufWriter::new(file);
    for r in &records {
        let seq = build_sequence_input(&r.frames, a.window, &scheme).map_err(|e| CliError::data(format!("{}: {e}", r.id)))?;
        let line = json!({
            "id": r.id,
            "window": a.window,
            "width": scheme.descriptor_len(),
            "descriptor": seq.to_matrix(),
        });
        writeln!(out, "{line}").map_err(CliError::data)?;
    }
    out.flush().map_err(CliError::data)?;
    write_json(
        &sidecar(&a.out, ".run.json"),
        &json!({
            "command": "extract-features",
            "corpus": display(&a.corpus),
            "split": a.split.map(|s| s.to_string()),
            "window": a.window,
            "out": display(&a.out),
        }),
    )?;
    println!("wrote {} descriptors to {}", records.len(), a.out.display());
    Ok(())
}
