//! Python module `noisebench`.
//!
//! Structured results (metrics, verdicts, sweep results, manifests) cross the
//! boundary as plain dicts and lists built from their JSON form.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use noisebench::analysis::{analyze, detect_failure_points, functional_at, AnalysisThresholds};
use noisebench::image::{load_image, resize_bilinear};
use noisebench::manifest::{build_manifest_with, split_report, ClassMap};
use noisebench::metrics::{auc_from_scores, evaluate};
use noisebench::sweep::{default_schedule, level_tag, SweepResult};
use noisebench::{derive_stream, noise, DegradationCurve, Label, NoiseFamily, NoiseSpec, PredictionRecord, PredictionSet};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn family(name: &str) -> PyResult<NoiseFamily> {
    name.parse().map_err(value_err)
}

/// Float image in row-major HWC order with intensities on [0, 1].
#[pyclass(name = "ImageBuffer", module = "noisebench", from_py_object)]
#[derive(Clone)]
struct PyImage {
    inner: noisebench::ImageBuffer,
}

#[pymethods]
impl PyImage {
    #[new]
    #[pyo3(signature = (height, width, channels, data))]
    fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: noisebench::ImageBuffer::new(height, width, channels, data).map_err(value_err)? })
    }

    #[staticmethod]
    fn filled(height: usize, width: usize, channels: usize, value: f64) -> PyResult<Self> {
        Ok(Self { inner: noisebench::ImageBuffer::filled(height, width, channels, value).map_err(value_err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: load_image(&path).map_err(|e| PyIOError::new_err(e.to_string()))? })
    }

    fn save_png(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_png(&path).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels()
    }

    #[getter]
    fn data(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn get(&self, row: usize, col: usize, channel: usize) -> PyResult<f64> {
        if row >= self.inner.height() || col >= self.inner.width() || channel >= self.inner.channels() {
            return Err(pyo3::exceptions::PyIndexError::new_err("pixel index out of range"));
        }
        Ok(self.inner.get(row, col, channel))
    }

    fn resize(&self, height: usize, width: usize) -> PyResult<Self> {
        Ok(Self { inner: resize_bilinear(&self.inner, height, width).map_err(value_err)? })
    }

    fn to_grayscale(&self) -> Self {
        Self { inner: self.inner.to_grayscale() }
    }

    fn quantized(&self) -> Self {
        Self { inner: self.inner.quantized() }
    }

    fn min_max(&self) -> (f64, f64) {
        self.inner.min_max()
    }

    fn __repr__(&self) -> String {
        format!("ImageBuffer({}x{}x{})", self.inner.height(), self.inner.width(), self.inner.channels())
    }
}

/// Corrupts `image` at one schedule level using the stream of cell
/// `(seed, image_index, level_index)`. Mixed noise uses `level` for both terms
/// unless `variance` is given.
#[pyfunction]
#[pyo3(signature = (image, family_name, level, seed=42, image_index=0, level_index=0, variance=None))]
fn apply_noise(
    image: &PyImage,
    family_name: &str,
    level: f64,
    seed: u64,
    image_index: u64,
    level_index: u64,
    variance: Option<f64>,
) -> PyResult<PyImage> {
    let spec = match (family(family_name)?, variance) {
        (NoiseFamily::Mixed, Some(v)) => NoiseSpec::mixed(v, level),
        (f, _) => NoiseSpec::at_level(f, level),
    }
    .map_err(value_err)?;
    let mut stream = derive_stream(seed, image_index, level_index);
    Ok(PyImage { inner: noise::apply(&image.inner, &spec, &mut stream).map_err(value_err)? })
}

fn records(labels: &[u8], scores: &[f64]) -> PyResult<PredictionSet> {
    if labels.len() != scores.len() {
        return Err(value_err(format!("{} labels but {} scores", labels.len(), scores.len())));
    }
    let records = labels
        .iter()
        .zip(scores)
        .enumerate()
        .map(|(i, (&l, &score))| {
            let label = match l {
                0 => Label::NotFractured,
                1 => Label::Fractured,
                other => return Err(value_err(format!("label must be 0 or 1, got {other}"))),
            };
            Ok(PredictionRecord { image_id: i.to_string(), label, score })
        })
        .collect::<PyResult<Vec<_>>>()?;
    PredictionSet::new("python", records).map_err(value_err)
}

#[pyfunction]
fn auc(labels: Vec<u8>, scores: Vec<f64>) -> PyResult<f64> {
    let set = records(&labels, &scores)?;
    let pairs: Vec<(bool, f64)> = set.records().iter().map(|r| (r.label.is_positive(), r.score)).collect();
    auc_from_scores(&pairs).map_err(value_err)
}

/// Returns `{"confusion": {...}, "metrics": {...}}`.
#[pyfunction]
#[pyo3(signature = (labels, scores, threshold=0.5))]
fn evaluate_scores(py: Python<'_>, labels: Vec<u8>, scores: Vec<f64>, threshold: f64) -> PyResult<Py<PyAny>> {
    let (cm, report) = evaluate(&records(&labels, &scores)?, threshold).map_err(value_err)?;
    let out = PyDict::new(py);
    out.set_item("confusion", to_py(py, &cm)?)?;
    out.set_item("metrics", to_py(py, &report)?)?;
    Ok(out.into_any().unbind())
}

fn curve(family_name: &str, levels: Vec<f64>, accuracies: Vec<f64>) -> PyResult<DegradationCurve> {
    if levels.len() != accuracies.len() {
        return Err(value_err("levels and accuracies differ in length"));
    }
    let points: Vec<(f64, f64)> = levels.into_iter().zip(accuracies).collect();
    DegradationCurve::from_accuracies(family(family_name)?, &points).map_err(value_err)
}

/// Failure analysis of an accuracy curve (accuracies as fractions).
#[pyfunction]
#[pyo3(signature = (levels, accuracies, drop_points=40.0, functional_percent=70.0, family_name="gaussian"))]
fn analyze_curve(
    py: Python<'_>,
    levels: Vec<f64>,
    accuracies: Vec<f64>,
    drop_points: f64,
    functional_percent: f64,
    family_name: &str,
) -> PyResult<Py<PyAny>> {
    let c = curve(family_name, levels, accuracies)?;
    let verdict = analyze(&c, &AnalysisThresholds { drop_points, functional_percent }).map_err(value_err)?;
    to_py(py, &verdict)
}

/// `(level, accuracy_before, accuracy_after)` for each failure point.
#[pyfunction]
#[pyo3(signature = (levels, accuracies, drop_points=40.0))]
fn failure_points(levels: Vec<f64>, accuracies: Vec<f64>, drop_points: f64) -> PyResult<Vec<(f64, f64, f64)>> {
    let c = curve("gaussian", levels, accuracies)?;
    Ok(detect_failure_points(&c, drop_points)
        .map_err(value_err)?
        .into_iter()
        .map(|f| (f.level, f.accuracy_before, f.accuracy_after))
        .collect())
}

#[pyfunction]
#[pyo3(name = "functional_at", signature = (levels, accuracies, level, functional_percent=70.0))]
fn py_functional_at(levels: Vec<f64>, accuracies: Vec<f64>, level: f64, functional_percent: f64) -> PyResult<bool> {
    functional_at(&curve("gaussian", levels, accuracies)?, level, functional_percent).map_err(value_err)
}

#[pyfunction]
#[pyo3(name = "default_schedule", signature = (family_name="gaussian"))]
fn py_default_schedule(family_name: &str) -> PyResult<Vec<f64>> {
    Ok(default_schedule(family(family_name)?))
}

#[pyfunction]
#[pyo3(name = "level_tag")]
fn py_level_tag(level: f64) -> String {
    level_tag(level)
}

/// Inventories `root/{train,valid,test}/<class>/<image>`; writes JSONL to `out`
/// when given and returns the entries as dicts.
#[pyfunction]
#[pyo3(signature = (root, out=None, class_map=None))]
fn build_manifest(py: Python<'_>, root: PathBuf, out: Option<PathBuf>, class_map: Option<PathBuf>) -> PyResult<Py<PyAny>> {
    let classes = match class_map {
        Some(p) => ClassMap::from_json_file(&p).map_err(value_err)?,
        None => ClassMap::default(),
    };
    let m = build_manifest_with(&root, &classes).map_err(value_err)?;
    if let Some(path) = out {
        m.write(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
    }
    to_py(py, &m.entries())
}

#[pyfunction]
fn manifest_report(py: Python<'_>, path: PathBuf) -> PyResult<Py<PyAny>> {
    let m = noisebench::Manifest::read(&path).map_err(value_err)?;
    to_py(py, &split_report(&m).map_err(value_err)?)
}

/// Runs a sweep from a config given as a JSON string and returns the result
/// as a dict. With `write_report`, `result.json` and the CSV/SVG report are
/// written to the config's output directory.
#[pyfunction]
#[pyo3(signature = (config_json, write_report=true))]
fn run_sweep(py: Python<'_>, config_json: &str, write_report: bool) -> PyResult<Py<PyAny>> {
    let mut config = noisebench::SweepConfig::from_json(config_json).map_err(value_err)?;
    config.apply_env().map_err(value_err)?;
    let result = py.detach(|| noisebench::run_sweep(&config)).map_err(value_err)?;
    if write_report {
        let path = config.output_dir.join(noisebench::sweep::RESULT_FILE);
        std::fs::write(&path, result.to_json()).map_err(|e| PyIOError::new_err(e.to_string()))?;
        noisebench::report::emit_report(&result, &config.output_dir).map_err(value_err)?;
    }
    to_py(py, &result)
}

/// Regenerates the CSV/SVG report from a saved `result.json`.
#[pyfunction]
fn emit_report(result_path: PathBuf, out_dir: PathBuf) -> PyResult<Vec<PathBuf>> {
    let result = SweepResult::load(&result_path).map_err(value_err)?;
    noisebench::report::emit_report(&result, &out_dir).map_err(value_err)
}

/// The built-in logistic-regression classifier.
#[pyclass(name = "ReferenceModel", module = "noisebench")]
struct PyReferenceModel {
    inner: noisebench::ReferenceModel,
}

#[pymethods]
impl PyReferenceModel {
    #[staticmethod]
    #[pyo3(signature = (manifest_path, epochs=None, learning_rate=None, batch_size=None, seed=0, image_size=180))]
    fn train(
        py: Python<'_>,
        manifest_path: PathBuf,
        epochs: Option<usize>,
        learning_rate: Option<f64>,
        batch_size: Option<usize>,
        seed: u64,
        image_size: usize,
    ) -> PyResult<Self> {
        let d = noisebench::TrainParams::default();
        let params = noisebench::TrainParams {
            epochs: epochs.unwrap_or(d.epochs),
            learning_rate: learning_rate.unwrap_or(d.learning_rate),
            batch_size: batch_size.unwrap_or(d.batch_size),
            seed,
        };
        let m = noisebench::Manifest::read(&manifest_path).map_err(value_err)?;
        let inner = py
            .detach(|| noisebench::adapters::reference_train(&m, &params, Some(image_size)))
            .map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: noisebench::ReferenceModel::load(&path).map_err(value_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(value_err)
    }

    fn predict(&self, image: &PyImage) -> f64 {
        noisebench::adapters::reference_predict(&self.inner, &image.inner)
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn meta(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.meta())
    }
}

#[pymodule]
#[pyo3(name = "noisebench")]
fn noisebench_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("NOISE_FAMILIES", NoiseFamily::ALL.iter().map(|f| f.as_str()).collect::<Vec<_>>())?;
    m.add_class::<PyImage>()?;
    m.add_class::<PyReferenceModel>()?;
    m.add_function(wrap_pyfunction!(apply_noise, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_scores, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_curve, m)?)?;
    m.add_function(wrap_pyfunction!(failure_points, m)?)?;
    m.add_function(wrap_pyfunction!(py_functional_at, m)?)?;
    m.add_function(wrap_pyfunction!(py_default_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(py_level_tag, m)?)?;
    m.add_function(wrap_pyfunction!(build_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(manifest_report, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(emit_report, m)?)?;
    Ok(())
}
