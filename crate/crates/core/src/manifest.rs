//! Labeled image inventory built from a `split/class/image` directory tree.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Expected train/valid/test fractions of the reference fracture dataset.
pub const TARGET_SPLIT_FRACTIONS: [(Split, f64); 3] = [(Split::Train, 0.87), (Split::Valid, 0.08), (Split::Test, 0.05)];

/// Allowed deviation from [`TARGET_SPLIT_FRACTIONS`] before a warning is raised.
pub const SPLIT_TOLERANCE: f64 = 0.02;

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("dataset root {root} has no '{split}' directory")]
    MissingSplit { root: PathBuf, split: Split },
    #[error("class directory {split}/{class} contains no images")]
    EmptyClass { split: Split, class: String },
    #[error("split directory '{0}' contains no class directories")]
    EmptySplit(Split),
    #[error("unreadable file {path}: {reason}")]
    UnreadableFile { path: PathBuf, reason: String },
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("duplicate image id '{0}'")]
    DuplicateId(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid class map: {0}")]
    ClassMap(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Binary class label; serialized as the integer 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    NotFractured = 0,
    Fractured = 1,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Fractured
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::NotFractured => Label::Fractured,
            Label::Fractured => Label::NotFractured,
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Label::NotFractured),
            1 => Ok(Label::Fractured),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", *self as u8)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: String,
    pub label: Label,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    dataset_name: String,
    entries: Vec<ManifestEntry>,
}

/// Maps class directory names to labels. Without one, only a directory named
/// `fractured` (case-insensitive) is positive.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassMap(BTreeMap<String, Label>);

impl ClassMap {
    pub fn new(map: BTreeMap<String, Label>) -> Self {
        Self(map)
    }

    /// Reads a JSON object of `{"class_dir": 0 | 1}`.
    pub fn from_json_file(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path)?;
        let map: BTreeMap<String, Label> =
            serde_json::from_str(&text).map_err(|e| ManifestError::ClassMap(e.to_string()))?;
        Ok(Self(map))
    }

    pub fn label_for(&self, class_dir: &str) -> Label {
        if let Some(&label) = self.0.get(class_dir) {
            return label;
        }
        if class_dir.eq_ignore_ascii_case("fractured") {
            Label::Fractured
        } else {
            Label::NotFractured
        }
    }
}

impl Manifest {
    pub fn new(dataset_name: impl Into<String>, entries: Vec<ManifestEntry>) -> Result<Self, ManifestError> {
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(ManifestError::DuplicateId(e.id.clone()));
            }
        }
        Ok(Self { dataset_name: dataset_name.into(), entries })
    }

    pub fn dataset_name(&self) -> &str {
        &self.dataset_name
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// A manifest holding only one split, in original order.
    pub fn subset(&self, split: Split) -> Manifest {
        Manifest { dataset_name: self.dataset_name.clone(), entries: self.split(split).cloned().collect() }
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// One JSON object per line, LF-terminated.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("manifest entries always serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(dataset_name: impl Into<String>, text: &str) -> Result<Self, ManifestError> {
        let entries = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str::<ManifestEntry>(l).map_err(|e| ManifestError::Parse { line: i + 1, reason: e.to_string() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(dataset_name, entries)
    }

    pub fn read(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path)?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::from_jsonl(name, &text)
    }

    pub fn write(&self, path: &Path) -> Result<(), ManifestError> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }
}

pub fn build_manifest(root: &Path) -> Result<Manifest, ManifestError> {
    build_manifest_with(root, &ClassMap::default())
}

/// Walks `root/{train,valid,test}/<class>/<image>`.
///
/// Entries are sorted by id, where the id is the image path relative to `root`
/// with `/` separators. Files without a PNG/JPEG extension are skipped; image
/// headers are probed so undecodable files are reported up front.
pub fn build_manifest_with(root: &Path, classes: &ClassMap) -> Result<Manifest, ManifestError> {
    let mut entries = Vec::new();
    for split in Split::ALL {
        let split_dir = root.join(split.as_str());
        if !split_dir.is_dir() {
            return Err(ManifestError::MissingSplit { root: root.to_path_buf(), split });
        }
        let class_dirs = sorted_children(&split_dir)?.into_iter().filter(|p| p.is_dir()).collect::<Vec<_>>();
        if class_dirs.is_empty() {
            return Err(ManifestError::EmptySplit(split));
        }
        for class_dir in class_dirs {
            let class = class_dir.file_name().unwrap().to_string_lossy().into_owned();
            let label = classes.label_for(&class);
            let images: Vec<PathBuf> = sorted_children(&class_dir)?.into_iter().filter(|p| is_image_file(p)).collect();
            if images.is_empty() {
                return Err(ManifestError::EmptyClass { split, class });
            }
            for path in images {
                probe(&path)?;
                let file = path.file_name().unwrap().to_string_lossy();
                entries.push(ManifestEntry {
                    id: format!("{}/{}/{}", split.as_str(), class, file),
                    path: path.to_string_lossy().into_owned(),
                    label,
                    split,
                });
            }
        }
    }
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    let name = root
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "dataset".to_string());
    Manifest::new(name, entries)
}

fn sorted_children(dir: &Path) -> Result<Vec<PathBuf>, ManifestError> {
    let mut out = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<Vec<_>, _>>()?;
    out.sort();
    Ok(out)
}

fn is_image_file(p: &Path) -> bool {
    p.is_file()
        && p.extension()
            .map(|e| IMAGE_EXTENSIONS.iter().any(|x| e.eq_ignore_ascii_case(x)))
            .unwrap_or(false)
}

fn probe(path: &Path) -> Result<(), ManifestError> {
    let unreadable = |reason: String| ManifestError::UnreadableFile { path: path.to_path_buf(), reason };
    image::ImageReader::open(path)
        .map_err(|e| unreadable(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| unreadable(e.to_string()))?
        .into_dimensions()
        .map_err(|e| unreadable(e.to_string()))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitStat {
    pub split: Split,
    pub count: usize,
    pub fraction: f64,
    pub positives: usize,
    /// Share of fractured images within the split; 0 for an absent split.
    pub positive_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitReport {
    pub total: usize,
    pub splits: Vec<SplitStat>,
    pub warnings: Vec<String>,
}

/// Split fractions and class balance, with warnings for splits more than
/// [`SPLIT_TOLERANCE`] away from the 87/8/5 reference ratio.
pub fn split_report(m: &Manifest) -> Result<SplitReport, ManifestError> {
    if m.is_empty() {
        return Err(ManifestError::EmptyManifest);
    }
    let total = m.len();
    let mut splits = Vec::new();
    let mut warnings = Vec::new();
    for (split, target) in TARGET_SPLIT_FRACTIONS {
        let count = m.split(split).count();
        let positives = m.split(split).filter(|e| e.label.is_positive()).count();
        let fraction = count as f64 / total as f64;
        if count == 0 {
            warnings.push(format!("split '{split}' is absent (fraction 0, expected {target:.2})"));
        } else if (fraction - target).abs() > SPLIT_TOLERANCE {
            warnings.push(format!(
                "split '{split}' holds {:.1}% of images, expected {:.0}% +/- {:.0} points",
                fraction * 100.0,
                target * 100.0,
                SPLIT_TOLERANCE * 100.0
            ));
        }
        let positive_fraction = if count == 0 { 0.0 } else { positives as f64 / count as f64 };
        splits.push(SplitStat { split, count, fraction, positives, positive_fraction });
    }
    Ok(SplitReport { total, splits, warnings })
}
