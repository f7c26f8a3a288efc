//! End-to-end noise sweeps: schedule, corrupt, score, measure, analyze.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adapters::{
    corrupted_image_path, ingest_predictions, invoke_external, reference_predict, reference_train, AdapterError,
    PredictionRecord, PredictionSet, ReferenceModel, TrainParams, PREDICTIONS_FILE,
};
use crate::analysis::{analyze, AnalysisError, AnalysisThresholds, CurvePoint, DegradationCurve, RobustnessVerdict};
use crate::image::{load_image, resize_bilinear, ImageBuffer, ImageError, CANONICAL_SIZE};
use crate::manifest::{Manifest, ManifestEntry, ManifestError, Split};
use crate::metrics::{evaluate, MetricsError, DEFAULT_THRESHOLD};
use crate::noise::{apply, NoiseError, NoiseFamily, NoiseSpec};
use crate::stream::derive_stream;

pub const WORKERS_ENV: &str = "NOISEBENCH_WORKERS";
pub const RESULT_FILE: &str = "result.json";
pub const MODEL_FILE: &str = "reference_model.json";

const DEFAULT_LEVELS: [f64; 11] = [0.0, 1e-5, 2.5e-5, 5e-5, 1e-4, 2.5e-4, 5e-4, 1e-3, 2.5e-3, 5e-3, 1e-2];

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep config: {0}")]
    Config(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("{family} level {level}: {reason}")]
    PartialLevelFailure { family: NoiseFamily, level: String, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SweepError + '_ {
    move |source| SweepError::Io { path: path.to_path_buf(), source }
}

/// Noise levels for one family: clean baseline first, then log-spaced steps
/// from `1e-5` to `1e-2`.
pub fn default_schedule(_family: NoiseFamily) -> Vec<f64> {
    DEFAULT_LEVELS.to_vec()
}

/// Canonical text form of a level, used in directory names and CSV files:
/// `0` for the clean level, otherwise Rust's shortest exponent form (`2.5e-5`).
pub fn level_tag(level: f64) -> String {
    if level == 0.0 {
        "0".to_string()
    } else {
        format!("{level:e}")
    }
}

/// How a Gaussian schedule level maps to the additive term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaussianLevel {
    #[default]
    Variance,
    StdDev,
}

/// The noise spec a schedule level stands for.
pub fn spec_for(family: NoiseFamily, level: f64, gaussian: GaussianLevel) -> Result<NoiseSpec, NoiseError> {
    let variance = match gaussian {
        GaussianLevel::Variance => level,
        GaussianLevel::StdDev => level * level,
    };
    match family {
        NoiseFamily::Gaussian => NoiseSpec::gaussian(variance),
        NoiseFamily::Poisson => NoiseSpec::poisson(level),
        NoiseFamily::Mixed => NoiseSpec::mixed(variance, level),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AdapterConfig {
    /// Pre-computed prediction CSVs. `{family}`, `{level}` and `{level_index}`
    /// in the template are substituted per level.
    File { template: String },
    /// Executable following the `--manifest/--images/--out` protocol.
    External { command: Vec<String> },
    Reference(TrainParams),
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig::Reference(TrainParams::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepThresholds {
    pub decision: f64,
    pub drop_points: f64,
    pub functional_percent: f64,
}

impl Default for SweepThresholds {
    fn default() -> Self {
        let a = AnalysisThresholds::default();
        Self { decision: DEFAULT_THRESHOLD, drop_points: a.drop_points, functional_percent: a.functional_percent }
    }
}

impl SweepThresholds {
    pub fn analysis(&self) -> AnalysisThresholds {
        AnalysisThresholds { drop_points: self.drop_points, functional_percent: self.functional_percent }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub manifest_path: PathBuf,
    pub noise_families: Vec<NoiseFamily>,
    /// Per-family overrides; families not listed use [`default_schedule`].
    pub schedule: BTreeMap<NoiseFamily, Vec<f64>>,
    pub master_seed: u64,
    pub adapter: AdapterConfig,
    pub thresholds: SweepThresholds,
    pub output_dir: PathBuf,
    pub workers: usize,
    pub image_size: usize,
    pub gaussian_level: GaussianLevel,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            manifest_path: PathBuf::from("manifest.jsonl"),
            noise_families: NoiseFamily::ALL.to_vec(),
            schedule: BTreeMap::new(),
            master_seed: 42,
            adapter: AdapterConfig::default(),
            thresholds: SweepThresholds::default(),
            output_dir: PathBuf::from("noisebench-out"),
            workers: 1,
            image_size: CANONICAL_SIZE,
            gaussian_level: GaussianLevel::default(),
        }
    }
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self, SweepError> {
        serde_json::from_str(text).map_err(|e| SweepError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SweepError> {
        Self::from_json(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }

    /// Applies `NOISEBENCH_WORKERS` when it is set.
    pub fn apply_env(&mut self) -> Result<(), SweepError> {
        if let Ok(v) = std::env::var(WORKERS_ENV) {
            self.workers = v
                .trim()
                .parse()
                .map_err(|_| SweepError::Config(format!("{WORKERS_ENV}='{v}' is not a worker count")))?;
        }
        Ok(())
    }

    pub fn schedule_for(&self, family: NoiseFamily) -> Vec<f64> {
        self.schedule.get(&family).cloned().unwrap_or_else(|| default_schedule(family))
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let bad = |m: String| Err(SweepError::Config(m));
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.image_size == 0 {
            return bad("image_size must be at least 1".into());
        }
        if self.noise_families.is_empty() {
            return bad("no noise families selected".into());
        }
        for (i, f) in self.noise_families.iter().enumerate() {
            if self.noise_families[..i].contains(f) {
                return bad(format!("family {f} listed twice"));
            }
        }
        for &family in &self.noise_families {
            let levels = self.schedule_for(family);
            if levels.first() != Some(&0.0) {
                return bad(format!("{family} schedule must start at 0"));
            }
            if levels.windows(2).any(|w| w[1].is_nan() || w[1] <= w[0]) || levels.iter().any(|l| !l.is_finite()) {
                return bad(format!("{family} schedule must be finite and strictly increasing"));
            }
            for &l in &levels {
                spec_for(family, l, self.gaussian_level)?;
            }
        }
        let t = &self.thresholds;
        if !(0.0..=1.0).contains(&t.decision) {
            return bad(format!("decision threshold {} outside [0, 1]", t.decision));
        }
        if t.drop_points.is_nan() || t.drop_points <= 0.0 || !t.functional_percent.is_finite() {
            return bad("drop and functional thresholds must be positive and finite".into());
        }
        match &self.adapter {
            AdapterConfig::External { command } if command.is_empty() => bad("external adapter needs a command".into()),
            AdapterConfig::File { template } if template.is_empty() => bad("file adapter needs a template".into()),
            _ => Ok(()),
        }
    }

    /// SHA-256 of the config's JSON serialization, ignoring `output_dir` and
    /// `workers` since neither changes the results.
    pub fn digest(&self) -> String {
        let canonical = Self { output_dir: PathBuf::new(), workers: 1, ..self.clone() };
        let json = serde_json::to_string(&canonical).expect("config always serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub master_seed: u64,
    pub schedules: BTreeMap<NoiseFamily, Vec<f64>>,
    pub config_digest: String,
    pub tool_version: String,
    /// Seconds since the Unix epoch; the only non-deterministic field.
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyResult {
    pub family: NoiseFamily,
    pub curve: DegradationCurve,
    pub verdict: RobustnessVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyFailure {
    pub family: NoiseFamily,
    pub level: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub families: Vec<FamilyResult>,
    #[serde(default)]
    pub failures: Vec<FamilyFailure>,
    pub thresholds: SweepThresholds,
    pub provenance: Provenance,
}

impl SweepResult {
    pub fn family(&self, family: NoiseFamily) -> Option<&FamilyResult> {
        self.families.iter().find(|f| f.family == family)
    }

    pub fn without_timestamp(&self) -> Self {
        let mut r = self.clone();
        r.provenance.timestamp = None;
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results always serialize") + "\n"
    }

    pub fn load(path: &Path) -> Result<Self, SweepError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| SweepError::Config(format!("{}: {e}", path.display())))
    }
}

/// Loads one manifest image and resizes it to `size x size`.
pub fn prepare_image(entry: &ManifestEntry, size: usize) -> Result<ImageBuffer, ImageError> {
    resize_bilinear(&load_image(Path::new(&entry.path))?, size, size)
}

/// Corrupts one image with the stream of its cell and quantizes it to 8 bits,
/// which is exactly what the saved PNG decodes to.
pub fn corrupt_image(
    entry: &ManifestEntry,
    spec: &NoiseSpec,
    master_seed: u64,
    image_index: usize,
    level_index: usize,
    size: usize,
) -> Result<ImageBuffer, SweepError> {
    let clean = prepare_image(entry, size)?;
    let mut stream = derive_stream(master_seed, image_index as u64, level_index as u64);
    Ok(apply(&clean, spec, &mut stream)?.quantized())
}

/// Corrupts every entry of `manifest` into `out_dir` (see [`corrupted_image_path`]).
/// Image indices are positions within `manifest`.
pub fn corrupt_manifest(
    manifest: &Manifest,
    spec: &NoiseSpec,
    master_seed: u64,
    level_index: usize,
    size: usize,
    out_dir: &Path,
) -> Result<Vec<ImageBuffer>, SweepError> {
    manifest
        .entries()
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let img = corrupt_image(e, spec, master_seed, i, level_index, size)?;
            img.save_png(&corrupted_image_path(out_dir, &e.id))?;
            Ok(img)
        })
        .collect()
}

enum Scorer {
    File(String),
    External(Vec<String>),
    Reference(ReferenceModel),
}

/// Runs the full sweep described by `config`.
///
/// A level that fails inside a family (adapter error, missing prediction
/// file, ...) aborts that family only; it is recorded in
/// [`SweepResult::failures`]. Configuration, manifest and training errors
/// abort the whole run.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult, SweepError> {
    config.validate()?;
    let manifest = Manifest::read(&config.manifest_path)?;
    let test = manifest.subset(Split::Test);
    if test.is_empty() {
        return Err(SweepError::Config("manifest has no test images".into()));
    }
    if test.entries().iter().all(|e| e.label == test.entries()[0].label) {
        return Err(MetricsError::SingleClassSet(test.len()).into());
    }
    std::fs::create_dir_all(&config.output_dir).map_err(io_err(&config.output_dir))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;

    pool.install(|| {
        let scorer = match &config.adapter {
            AdapterConfig::File { template } => Scorer::File(template.clone()),
            AdapterConfig::External { command } => Scorer::External(command.clone()),
            AdapterConfig::Reference(params) => {
                let model = reference_train(&manifest, params, Some(config.image_size))?;
                model.save(&config.output_dir.join(MODEL_FILE))?;
                Scorer::Reference(model)
            }
        };

        let mut families = Vec::new();
        let mut failures = Vec::new();
        for &family in &config.noise_families {
            match run_family(config, family, &test, &scorer) {
                Ok(curve) => {
                    let verdict = analyze(&curve, &config.thresholds.analysis())?;
                    families.push(FamilyResult { family, curve, verdict });
                }
                Err(SweepError::PartialLevelFailure { family, level, reason }) => {
                    log::warn!("{family} aborted at level {level}: {reason}");
                    failures.push(FamilyFailure { family, level, reason });
                }
                Err(e) => return Err(e),
            }
        }

        let schedules = config.noise_families.iter().map(|&f| (f, config.schedule_for(f))).collect();
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .ok();
        Ok(SweepResult {
            families,
            failures,
            thresholds: config.thresholds,
            provenance: Provenance {
                master_seed: config.master_seed,
                schedules,
                config_digest: config.digest(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                timestamp,
            },
        })
    })
}

fn run_family(
    config: &SweepConfig,
    family: NoiseFamily,
    test: &Manifest,
    scorer: &Scorer,
) -> Result<DegradationCurve, SweepError> {
    let levels = config.schedule_for(family);
    let points = levels
        .par_iter()
        .enumerate()
        .map(|(k, &level)| {
            let tag = level_tag(level);
            let fail = |reason: String| SweepError::PartialLevelFailure { family, level: tag.clone(), reason };
            let preds = score_level(config, family, k, level, test, scorer).map_err(|e| match e {
                SweepError::PartialLevelFailure { .. } => e,
                other => fail(other.to_string()),
            })?;
            let (cm, report) = evaluate(&preds, config.thresholds.decision).map_err(|e| fail(e.to_string()))?;
            Ok(CurvePoint { level, report, confusion: Some(cm) })
        })
        .collect::<Result<Vec<_>, SweepError>>()?;
    Ok(DegradationCurve::new(family, points)?)
}

fn score_level(
    config: &SweepConfig,
    family: NoiseFamily,
    level_index: usize,
    level: f64,
    test: &Manifest,
    scorer: &Scorer,
) -> Result<PredictionSet, SweepError> {
    let tag = format!("{family}/{}", level_tag(level));
    let level_dir = config.output_dir.join(family.as_str()).join(level_tag(level));
    let spec = spec_for(family, level, config.gaussian_level)?;
    match scorer {
        Scorer::File(template) => {
            let path = PathBuf::from(
                template
                    .replace("{family}", family.as_str())
                    .replace("{level_index}", &level_index.to_string())
                    .replace("{level}", &level_tag(level)),
            );
            if !path.exists() {
                return Err(SweepError::PartialLevelFailure {
                    family,
                    level: level_tag(level),
                    reason: format!("prediction file {} is missing", path.display()),
                });
            }
            let set = ingest_predictions(&path, test)?;
            Ok(PredictionSet::new(tag, set.records().to_vec())?)
        }
        Scorer::External(command) => {
            corrupt_manifest(test, &spec, config.master_seed, level_index, config.image_size, &level_dir)?;
            Ok(invoke_external(command, test, &level_dir, &tag)?)
        }
        Scorer::Reference(model) => {
            let images = corrupt_manifest(test, &spec, config.master_seed, level_index, config.image_size, &level_dir)?;
            let records = test
                .entries()
                .iter()
                .zip(&images)
                .map(|(e, img)| PredictionRecord {
                    image_id: e.id.clone(),
                    label: e.label,
                    score: reference_predict(model, img),
                })
                .collect();
            let set = PredictionSet::new(tag, records)?;
            set.write_csv(&level_dir.join(PREDICTIONS_FILE))?;
            Ok(set)
        }
    }
}
