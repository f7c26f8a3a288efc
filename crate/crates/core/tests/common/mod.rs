#![allow(dead_code)]

use std::path::{Path, PathBuf};

use noisebench::analysis::{analyze, AnalysisThresholds, CurvePoint, DegradationCurve};
use noisebench::manifest::{build_manifest, ManifestEntry};
use noisebench::metrics::{summarize, ConfusionMatrix};
use noisebench::sweep::{FamilyResult, Provenance, SweepResult, SweepThresholds};
use noisebench::synthetic::{write_blob_dataset, BlobStyle};
use noisebench::{Label, Manifest, NoiseFamily, PredictionRecord, PredictionSet, Split};

/// Writes a blob dataset under `root/data` and its manifest to `root/manifest.jsonl`.
pub fn blob_manifest(root: &Path, train: usize, valid: usize, test: usize, size: usize, seed: u64) -> PathBuf {
    let data = root.join("data");
    write_blob_dataset(
        &data,
        &[(Split::Train, train), (Split::Valid, valid), (Split::Test, test)],
        size,
        seed,
        &BlobStyle::default(),
    )
    .unwrap();
    let path = root.join("manifest.jsonl");
    build_manifest(&data).unwrap().write(&path).unwrap();
    path
}

/// Every file below `dir`, as sorted (relative path, bytes) pairs.
pub fn tree_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(base, &path, out);
            } else {
                out.push((path.strip_prefix(base).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

pub fn golden_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

pub fn golden(name: &str) -> String {
    std::fs::read_to_string(golden_path(name)).unwrap()
}

pub fn golden_manifest() -> Manifest {
    let entry = |id: &str, label, split| ManifestEntry {
        id: id.to_string(),
        path: format!("/data/xr/{id}"),
        label,
        split,
    };
    Manifest::new(
        "xr",
        vec![
            entry("test/fractured/a.png", Label::Fractured, Split::Test),
            entry("test/not_fractured/b.jpg", Label::NotFractured, Split::Test),
            entry("train/fractured/c.png", Label::Fractured, Split::Train),
            entry("valid/not fractured/d,e.png", Label::NotFractured, Split::Valid),
        ],
    )
    .unwrap()
}

pub fn golden_predictions() -> PredictionSet {
    let rec = |id: &str, label, score| PredictionRecord { image_id: id.to_string(), label, score };
    PredictionSet::new(
        "gaussian/1e-3",
        vec![
            rec("test/fractured/a.png", Label::Fractured, 0.9),
            rec("test/not_fractured/b.jpg", Label::NotFractured, 0.125),
            rec("test/fractured/x.png", Label::Fractured, 1.0),
            rec("test/not_fractured/y.png", Label::NotFractured, 0.0),
            rec("test/fractured/z.png", Label::Fractured, 0.30000000000000004),
            rec("test/not_fractured/q,r.png", Label::NotFractured, 2.5e-7),
        ],
    )
    .unwrap()
}

fn point(level: f64, cm: ConfusionMatrix, auc: f64) -> CurvePoint {
    CurvePoint { level, report: summarize(&cm, auc, 0.5), confusion: Some(cm) }
}

/// A two-family result with hand-picked confusion matrices: gaussian falls
/// off a cliff and collapses, poisson degrades gently.
pub fn golden_result() -> SweepResult {
    let cm = |tp, fp, tn, fn_| ConfusionMatrix { tp, fp, tn, fn_ };
    let gaussian = DegradationCurve::new(
        NoiseFamily::Gaussian,
        vec![
            point(0.0, cm(45, 5, 45, 5), 0.95),
            point(5e-5, cm(46, 4, 46, 4), 0.9),
            point(1e-3, cm(0, 0, 50, 50), 0.61),
        ],
    )
    .unwrap();
    let poisson = DegradationCurve::new(
        NoiseFamily::Poisson,
        vec![
            point(0.0, cm(45, 5, 45, 5), 0.95),
            point(1e-4, cm(44, 6, 44, 6), 0.93),
            point(2.5e-3, cm(38, 12, 38, 12), 0.8125),
        ],
    )
    .unwrap();
    let family = |curve: DegradationCurve| FamilyResult {
        family: curve.family(),
        verdict: analyze(&curve, &AnalysisThresholds::default()).unwrap(),
        curve,
    };
    SweepResult {
        families: vec![family(gaussian), family(poisson)],
        failures: Vec::new(),
        thresholds: SweepThresholds::default(),
        provenance: Provenance {
            master_seed: 42,
            schedules: Default::default(),
            config_digest: String::new(),
            tool_version: String::new(),
            timestamp: None,
        },
    }
}
