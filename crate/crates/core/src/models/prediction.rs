use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

use super::{ModelError, Result};
use crate::data_io::UtteranceRecord;
use crate::metrics::{MetricError, VariableReport};

/// One row of a prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub utterance_id: String,
    pub arousal: f64,
    pub valence: f64,
}

/// Validation CCC of the model that produced a prediction set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationCcc {
    pub arousal: f64,
    pub valence: f64,
}

/// Per-utterance predictions of one model. Utterances the model could not
/// read (no transcript for a text model) are listed in `omitted`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionSet {
    pub model_id: String,
    pub rows: Vec<Prediction>,
    pub omitted: Vec<String>,
    pub validation: Option<ValidationCcc>,
}

fn check_row(row: &Prediction) -> std::result::Result<(), String> {
    if !(0.0..=1.0).contains(&row.arousal) {
        return Err(format!("{}: arousal {} outside [0, 1]", row.utterance_id, row.arousal));
    }
    if !(-1.0..=1.0).contains(&row.valence) {
        return Err(format!("{}: valence {} outside [-1, 1]", row.utterance_id, row.valence));
    }
    Ok(())
}

impl PredictionSet {
    pub fn new(model_id: impl Into<String>, rows: Vec<Prediction>) -> Self {
        Self {
            model_id: model_id.into(),
            rows,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn by_id(&self) -> HashMap<&str, &Prediction> {
        self.rows.iter().map(|r| (r.utterance_id.as_str(), r)).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record(["utterance_id", "arousal", "valence"])?;
        }
        let bytes = w.into_inner().map_err(|e| ModelError::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| ModelError::io(path, e))
    }

    /// Parses a prediction CSV, checking the value ranges of every row.
    pub fn from_csv(model_id: impl Into<String>, text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["utterance_id", "arousal", "valence"] {
            return Err(ModelError::InvalidPredictions(format!(
                "expected header utterance_id,arousal,valence, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for row in reader.deserialize() {
            let row: Prediction = row?;
            check_row(&row).map_err(ModelError::InvalidPredictions)?;
            rows.push(row);
        }
        Ok(Self::new(model_id, rows))
    }

    /// Reads a CSV; the model id is the file stem.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::io(path, e))?;
        let id = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        Self::from_csv(id, &text)
    }

    pub fn check_ranges(&self) -> Result<()> {
        self.rows
            .iter()
            .try_for_each(check_row)
            .map_err(ModelError::InvalidPredictions)
    }
}

/// CCC and MSE for both variables over `n` utterances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub arousal: VariableReport,
    pub valence: VariableReport,
    pub n: usize,
}

impl MetricsReport {
    pub fn table(&self) -> String {
        format!(
            "variable   ccc       mse\narousal    {:<9.4} {:.4}\nvalence    {:<9.4} {:.4}\nn = {}\n",
            self.arousal.ccc, self.arousal.mse, self.valence.ccc, self.valence.mse, self.n
        )
    }
}

/// Scores predictions against every labelled record. Fails when a labelled
/// record has no prediction.
pub fn evaluate_predictions(set: &PredictionSet, records: &[&UtteranceRecord]) -> Result<MetricsReport> {
    let by_id = set.by_id();
    let mut missing = Vec::new();
    let (mut ya, mut pa, mut yv, mut pv) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for r in records {
        let (Some(a), Some(v)) = (r.arousal, r.valence) else {
            continue;
        };
        match by_id.get(r.id.as_str()) {
            Some(p) => {
                ya.push(a);
                pa.push(p.arousal);
                yv.push(v);
                pv.push(p.valence);
            }
            None => missing.push(r.id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(ModelError::Uncovered(missing));
    }
    if ya.len() < 2 {
        return Err(MetricError::TooShort { needed: 2, got: ya.len() }.into());
    }
    Ok(MetricsReport {
        arousal: VariableReport::compute(&ya, &pa)?,
        valence: VariableReport::compute(&yv, &pv)?,
        n: ya.len(),
    })
}
