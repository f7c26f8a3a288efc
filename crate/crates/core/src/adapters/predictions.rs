//! Prediction sets and the `image_id,label,score` CSV exchange format.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AdapterError;
use crate::manifest::{Label, Manifest};

pub const PREDICTION_HEADER: &str = "image_id,label,score";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image_id: String,
    pub label: Label,
    /// Probability of the fractured class.
    pub score: f64,
}

/// Classifier scores for every test image at one noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    level_tag: String,
    records: Vec<PredictionRecord>,
}

impl PredictionSet {
    pub fn new(level_tag: impl Into<String>, records: Vec<PredictionRecord>) -> Result<Self, AdapterError> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            check_score(&r.image_id, r.score)?;
            if !seen.insert(r.image_id.as_str()) {
                return Err(AdapterError::DuplicateImage(r.image_id.clone()));
            }
        }
        Ok(Self { level_tag: level_tag.into(), records })
    }

    pub fn level_tag(&self) -> &str {
        &self.level_tag
    }

    pub fn records(&self) -> &[PredictionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Same scores with every label inverted.
    pub fn with_flipped_labels(&self) -> Self {
        let records = self
            .records
            .iter()
            .map(|r| PredictionRecord { label: r.label.flipped(), ..r.clone() })
            .collect();
        Self { level_tag: self.level_tag.clone(), records }
    }

    /// Checks that the set covers exactly the manifest's images with matching labels.
    pub fn check_against(&self, manifest: &Manifest) -> Result<(), AdapterError> {
        let by_id: HashMap<&str, &PredictionRecord> = self.records.iter().map(|r| (r.image_id.as_str(), r)).collect();
        for r in &self.records {
            if manifest.get(&r.image_id).is_none() {
                return Err(AdapterError::UnknownImage(r.image_id.clone()));
            }
        }
        for e in manifest.entries() {
            match by_id.get(e.id.as_str()) {
                None => return Err(AdapterError::MissingImage(e.id.clone())),
                Some(r) if r.label != e.label => {
                    return Err(AdapterError::LabelMismatch { image_id: e.id.clone(), manifest: e.label, file: r.label })
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// CSV text: the fixed header, then one row per record. Scores use the
    /// shortest decimal form that round-trips.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(PREDICTION_HEADER.split(',')).expect("in-memory write");
        for r in &self.records {
            w.write_record([r.image_id.as_str(), &r.label.to_string(), &r.score.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), AdapterError> {
        std::fs::write(path, self.to_csv()).map_err(|e| AdapterError::io(path, e))
    }
}

fn check_score(id: &str, score: f64) -> Result<(), AdapterError> {
    if score.is_finite() && (0.0..=1.0).contains(&score) {
        Ok(())
    } else {
        Err(AdapterError::ScoreOutOfRange { image_id: id.to_string(), score })
    }
}

/// Parses prediction CSV text without reference to a manifest.
pub fn parse_predictions(level_tag: &str, text: &str) -> Result<PredictionSet, AdapterError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut rows = reader.records();
    let header = rows
        .next()
        .ok_or_else(|| AdapterError::MalformedRow { line: 1, reason: "missing header".into() })?
        .map_err(|e| AdapterError::MalformedRow { line: 1, reason: e.to_string() })?;
    if header.iter().collect::<Vec<_>>() != ["image_id", "label", "score"] {
        return Err(AdapterError::MalformedRow {
            line: 1,
            reason: format!("expected header '{PREDICTION_HEADER}', got '{}'", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut records = Vec::new();
    for (i, row) in rows.enumerate() {
        let line = i + 2;
        let malformed = |reason: String| AdapterError::MalformedRow { line, reason };
        let row = row.map_err(|e| malformed(e.to_string()))?;
        if row.len() != 3 {
            return Err(malformed(format!("expected 3 fields, got {}", row.len())));
        }
        let label = match &row[1] {
            "0" => Label::NotFractured,
            "1" => Label::Fractured,
            other => return Err(malformed(format!("label must be 0 or 1, got '{other}'"))),
        };
        let score: f64 = row[2].trim().parse().map_err(|_| malformed(format!("score '{}' is not a number", &row[2])))?;
        check_score(&row[0], score)?;
        records.push(PredictionRecord { image_id: row[0].to_string(), label, score });
    }
    PredictionSet::new(level_tag, records)
}

/// Reads a prediction CSV and validates it against the (test) manifest.
/// Records come back in manifest order.
pub fn ingest_predictions(file: &Path, manifest: &Manifest) -> Result<PredictionSet, AdapterError> {
    let text = std::fs::read_to_string(file).map_err(|e| AdapterError::io(file, e))?;
    let tag = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    ingest_predictions_str(&tag, &text, manifest)
}

pub fn ingest_predictions_str(level_tag: &str, text: &str, manifest: &Manifest) -> Result<PredictionSet, AdapterError> {
    let parsed = parse_predictions(level_tag, text)?;
    parsed.check_against(manifest)?;
    let mut by_id: HashMap<String, PredictionRecord> =
        parsed.records.into_iter().map(|r| (r.image_id.clone(), r)).collect();
    let records = manifest.entries().iter().map(|e| by_id.remove(&e.id).expect("checked above")).collect();
    PredictionSet::new(level_tag, records)
}
