//! Report files for a finished sweep: per-family metrics CSV, a summary CSV
//! with one row per family, and an SVG accuracy chart per family.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::analysis::{AnalysisError, CurvePoint, DegradationCurve};
use crate::noise::NoiseFamily;
use crate::sweep::{level_tag, FamilyResult, SweepResult, SweepThresholds};

pub const METRICS_HEADER: &str = "family,level,n,accuracy,precision,recall,f1,auc,collapse";
pub const SUMMARY_HEADER: &str =
    "family,clean_accuracy,clean_auc,critical_failure_level,accuracy_at_0.001,functional_at_0.001,pattern";

/// Level the summary's "performance at" columns refer to.
pub const SUMMARY_PROBE_LEVEL: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    UnwritableOutput { path: PathBuf, source: std::io::Error },
    #[error("curve file line {line}: {reason}")]
    CurveParse { line: usize, reason: String },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

fn metric(v: f64) -> String {
    format!("{v:.6}")
}

pub fn metrics_csv(family: &FamilyResult) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for p in family.curve.points() {
        let r = &p.report;
        let collapse = family.verdict.collapse_levels.contains(&p.level);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            family.family,
            level_tag(p.level),
            r.n,
            metric(r.accuracy),
            metric(r.precision),
            metric(r.recall),
            metric(r.f1),
            metric(r.auc),
            collapse
        )
        .unwrap();
    }
    out
}

pub fn summary_csv(result: &SweepResult) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for f in &result.families {
        writeln!(out, "{}", summary_row(f, &result.thresholds)).unwrap();
    }
    out
}

fn summary_row(f: &FamilyResult, thresholds: &SweepThresholds) -> String {
    let points = f.curve.points();
    let clean = f.curve.point_at(0.0).or(points.first());
    let (clean_acc, clean_auc) =
        clean.map(|p| (metric(p.report.accuracy), metric(p.report.auc))).unwrap_or_default();
    let failure = f.verdict.failure_points.first().map(|fp| level_tag(fp.level)).unwrap_or_default();
    let (probe_acc, probe_ok) = match f.curve.point_at(SUMMARY_PROBE_LEVEL) {
        Some(p) => (
            metric(p.report.accuracy),
            (p.report.accuracy * 100.0 >= thresholds.functional_percent - 1e-9).to_string(),
        ),
        None => (String::new(), String::new()),
    };
    format!("{},{clean_acc},{clean_auc},{failure},{probe_acc},{probe_ok},{}", f.family, f.verdict.pattern)
}

/// Accuracy and AUC against level on a log axis. The clean level is drawn at
/// the smallest non-zero level divided by ten.
pub fn svg_chart(family: &FamilyResult) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (64.0, 24.0, 40.0, 56.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let points = family.curve.points();
    let min_nonzero = points.iter().map(|p| p.level).filter(|&l| l > 0.0).fold(f64::INFINITY, f64::min);
    let max_level = points.iter().map(|p| p.level).fold(0.0, f64::max);
    let (lo, hi) = if min_nonzero.is_finite() {
        ((min_nonzero / 10.0).log10(), max_level.log10())
    } else {
        (-1.0, 0.0)
    };
    let span = if hi > lo { hi - lo } else { 1.0 };
    let x_of = |level: f64| {
        let l = if level > 0.0 { level.log10() } else { lo };
        left + (l - lo) / span * pw
    };
    let y_of = |v: f64| top + (1.0 - v.clamp(0.0, 1.0)) * ph;

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{} noise: accuracy vs level</text>"#,
        w / 2.0,
        family.family
    )
    .unwrap();
    writeln!(
        s,
        r##"<g stroke="#333" stroke-width="1"><line x1="{left}" y1="{}" x2="{}" y2="{}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{}"/></g>"##,
        top + ph,
        left + pw,
        top + ph,
        top + ph
    )
    .unwrap();

    // decade ticks
    for k in lo.ceil() as i32..=hi.floor() as i32 {
        let x = left + (f64::from(k) - lo) / span * pw;
        writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#333"/><text x="{x:.2}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">1e{k}</text>"##,
            top + ph,
            top + ph + 5.0,
            top + ph + 18.0
        )
        .unwrap();
    }
    if min_nonzero.is_finite() {
        writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">clean</text>"#,
            x_of(0.0),
            top + ph + 32.0
        )
        .unwrap();
    }
    for i in 0..=4 {
        let v = f64::from(i) / 4.0;
        let y = y_of(v);
        writeln!(
            s,
            r##"<line x1="{}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="#333"/><text x="{}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">{v:.2}</text>"##,
            left - 5.0,
            left - 8.0,
            y + 4.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">noise level (log scale)</text>"#,
        left + pw / 2.0,
        h - 6.0
    )
    .unwrap();

    for (name, color, dash, get) in [
        ("accuracy", "#1f77b4", "", (|p: &CurvePoint| p.report.accuracy) as fn(&CurvePoint) -> f64),
        ("auc", "#ff7f0e", r#" stroke-dasharray="6 4""#, |p: &CurvePoint| p.report.auc),
    ] {
        let coords: Vec<String> = points.iter().map(|p| format!("{:.2},{:.2}", x_of(p.level), y_of(get(p)))).collect();
        writeln!(
            s,
            r#"<polyline class="{name}" fill="none" stroke="{color}" stroke-width="2"{dash} points="{}"/>"#,
            coords.join(" ")
        )
        .unwrap();
        for p in points {
            writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, x_of(p.level), y_of(get(p))).unwrap();
        }
    }
    writeln!(
        s,
        r##"<g font-family="sans-serif" font-size="11"><rect x="{}" y="{}" width="12" height="3" fill="#1f77b4"/><text x="{}" y="{}">accuracy</text><rect x="{}" y="{}" width="12" height="3" fill="#ff7f0e"/><text x="{}" y="{}">AUC</text></g>"##,
        left + pw - 90.0,
        top + 8.0,
        left + pw - 74.0,
        top + 12.0,
        left + pw - 90.0,
        top + 24.0,
        left + pw - 74.0,
        top + 28.0
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

/// Writes `metrics_<family>.csv`, `accuracy_<family>.svg` and `summary.csv`.
pub fn emit_report(result: &SweepResult, output_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let write = |name: String, text: String| -> Result<PathBuf, ReportError> {
        let path = output_dir.join(name);
        std::fs::write(&path, text).map_err(|source| ReportError::UnwritableOutput { path: path.clone(), source })?;
        Ok(path)
    };
    std::fs::create_dir_all(output_dir)
        .map_err(|source| ReportError::UnwritableOutput { path: output_dir.to_path_buf(), source })?;
    let mut written = Vec::new();
    for f in &result.families {
        written.push(write(format!("metrics_{}.csv", f.family), metrics_csv(f))?);
        written.push(write(format!("accuracy_{}.svg", f.family), svg_chart(f))?);
    }
    written.push(write("summary.csv".into(), summary_csv(result))?);
    Ok(written)
}

/// A curve read from CSV, with collapse flags when the file carries them.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveFile {
    pub curve: DegradationCurve,
    pub collapse_levels: Option<Vec<f64>>,
}

/// Parses curves for `analyze`.
///
/// Columns are located by header name. `level` is required, plus either
/// `accuracy` (fraction) or `accuracy_pct` (percent). An optional `family`
/// column splits the file into one curve per family (otherwise
/// `default_family` is used) and an optional `collapse` column of
/// `true`/`false` supplies collapse flags. The metrics CSV written by
/// [`emit_report`] is accepted as is.
pub fn parse_curve_csv(text: &str, default_family: NoiseFamily) -> Result<Vec<CurveFile>, ReportError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let err = |line: usize, reason: String| ReportError::CurveParse { line, reason };
    let headers = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let level_col = col("level").ok_or_else(|| err(1, "missing 'level' column".into()))?;
    let (acc_col, scale) = match (col("accuracy"), col("accuracy_pct")) {
        (Some(c), _) => (c, 1.0),
        (None, Some(c)) => (c, 0.01),
        _ => return Err(err(1, "missing 'accuracy' or 'accuracy_pct' column".into())),
    };
    let family_col = col("family");
    let collapse_col = col("collapse");

    // (family, (level, accuracy) points, collapsed levels)
    type Group = (NoiseFamily, Vec<(f64, f64)>, Vec<f64>);
    let mut groups: Vec<Group> = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| err(line, e.to_string()))?;
        let field = |c: usize| row.get(c).ok_or_else(|| err(line, format!("missing column {}", c + 1)));
        let family = match family_col {
            Some(c) => field(c)?.parse::<NoiseFamily>().map_err(|e| err(line, e))?,
            None => default_family,
        };
        let level: f64 = field(level_col)?.parse().map_err(|_| err(line, "level is not a number".into()))?;
        let acc: f64 = field(acc_col)?.parse::<f64>().map_err(|_| err(line, "accuracy is not a number".into()))? * scale;
        if !(0.0..=1.0).contains(&acc) {
            return Err(err(line, format!("accuracy {acc} outside [0, 1]")));
        }
        let collapsed = match collapse_col {
            Some(c) => match field(c)? {
                "true" | "1" => true,
                "false" | "0" | "" => false,
                other => return Err(err(line, format!("collapse must be true/false, got '{other}'"))),
            },
            None => false,
        };
        let idx = match groups.iter().position(|g| g.0 == family) {
            Some(i) => i,
            None => {
                groups.push((family, Vec::new(), Vec::new()));
                groups.len() - 1
            }
        };
        groups[idx].1.push((level, acc));
        if collapsed {
            groups[idx].2.push(level);
        }
    }
    groups
        .into_iter()
        .map(|(family, points, collapse)| {
            Ok(CurveFile {
                curve: DegradationCurve::from_accuracies(family, &points)?,
                collapse_levels: collapse_col.map(|_| collapse),
            })
        })
        .collect()
}
