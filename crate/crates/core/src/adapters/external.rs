use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::{ingest_predictions, AdapterError, PredictionSet};
use crate::manifest::{Label, Manifest};

pub const REQUEST_FILE: &str = "request.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

/// One line of the request manifest handed to an external classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestEntry {
    pub id: String,
    pub path: String,
    pub label: Label,
}

/// Where the corrupted copy of an image lives: the image id under `dir`, with a `.png` extension.
pub fn corrupted_image_path(dir: &Path, image_id: &str) -> PathBuf {
    dir.join(image_id).with_extension("png")
}

/// Writes `{id, path, label}` lines pointing at the corrupted copies in `corrupted_dir`.
pub fn write_request(manifest: &Manifest, corrupted_dir: &Path, out: &Path) -> Result<(), AdapterError> {
    let mut text = String::new();
    for e in manifest.entries() {
        let entry = RequestEntry {
            id: e.id.clone(),
            path: corrupted_image_path(corrupted_dir, &e.id).to_string_lossy().into_owned(),
            label: e.label,
        };
        text.push_str(&serde_json::to_string(&entry).expect("request entries always serialize"));
        text.push('\n');
    }
    std::fs::write(out, text).map_err(|e| AdapterError::io(out, e))
}

/// Runs `<command> --manifest <request.jsonl> --images <dir> --out <pred.csv>`
/// and validates the CSV it leaves behind.
///
/// The request and output files are written inside `corrupted_dir` as
/// [`REQUEST_FILE`] and [`PREDICTIONS_FILE`].
pub fn invoke_external(
    command: &[String],
    manifest: &Manifest,
    corrupted_dir: &Path,
    level_tag: &str,
) -> Result<PredictionSet, AdapterError> {
    let (program, args) = command
        .split_first()
        .ok_or_else(|| AdapterError::SpawnFailure { command: String::new(), reason: "empty command".into() })?;
    std::fs::create_dir_all(corrupted_dir).map_err(|e| AdapterError::io(corrupted_dir, e))?;
    let request = corrupted_dir.join(REQUEST_FILE);
    let out = corrupted_dir.join(PREDICTIONS_FILE);
    write_request(manifest, corrupted_dir, &request)?;
    if out.exists() {
        std::fs::remove_file(&out).map_err(|e| AdapterError::io(&out, e))?;
    }

    let output = Command::new(program)
        .args(args)
        .arg("--manifest")
        .arg(&request)
        .arg("--images")
        .arg(corrupted_dir)
        .arg("--out")
        .arg(&out)
        .output()
        .map_err(|e| AdapterError::SpawnFailure { command: command.join(" "), reason: e.to_string() })?;
    if !output.status.success() {
        return Err(AdapterError::NonZeroExit {
            code: output.status.code(),
            stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        });
    }
    if !out.exists() {
        return Err(AdapterError::ProtocolViolation(format!("command did not write {}", out.display())));
    }
    let set = ingest_predictions(&out, manifest).map_err(|e| AdapterError::ProtocolViolation(e.to_string()))?;
    PredictionSet::new(level_tag, set.records().to_vec())
}
