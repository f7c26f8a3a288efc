//! Sources of classifier scores: prediction files, external executables and
//! the built-in reference classifier.

mod external;
mod predictions;
mod reference;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::image::ImageError;
use crate::manifest::{Label, ManifestError};

pub use external::{corrupted_image_path, invoke_external, write_request, RequestEntry, PREDICTIONS_FILE, REQUEST_FILE};
pub use predictions::{
    ingest_predictions, ingest_predictions_str, parse_predictions, PredictionRecord, PredictionSet, PREDICTION_HEADER,
};
pub use reference::{
    features, reference_predict, reference_train, reference_train_images, ReferenceModel, TrainParams, TrainingMeta,
    FEATURE_COUNT, FEATURE_OFFSET, FEATURE_SIDE,
};

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("image '{0}' from the manifest has no prediction")]
    MissingImage(String),
    #[error("prediction for '{0}' which is not in the manifest")]
    UnknownImage(String),
    #[error("more than one prediction for '{0}'")]
    DuplicateImage(String),
    #[error("label mismatch for '{image_id}': manifest says {manifest}, predictions say {file}")]
    LabelMismatch { image_id: String, manifest: Label, file: Label },
    #[error("malformed prediction row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("score {score} for '{image_id}' is outside [0, 1]")]
    ScoreOutOfRange { image_id: String, score: f64 },
    #[error("failed to start classifier command '{command}': {reason}")]
    SpawnFailure { command: String, reason: String },
    #[error("classifier command exited with {code:?}: {stderr}")]
    NonZeroExit { code: Option<i32>, stderr: String },
    #[error("classifier output violates the prediction protocol: {0}")]
    ProtocolViolation(String),
    #[error("training split contains a single class ({0})")]
    SingleClassTrainingSet(Label),
    #[error("training split is empty")]
    EmptyTrainingSet,
    #[error("invalid training parameters: {0}")]
    InvalidParams(String),
    #[error("model file: {0}")]
    Model(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl AdapterError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        AdapterError::Io { path: path.to_path_buf(), source }
    }
}
