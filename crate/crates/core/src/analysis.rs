//! Robustness verdicts over degradation curves: critical failure points,
//! catastrophic vs graceful degradation, functional levels and collapse.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{ConfusionMatrix, MetricsReport};
use crate::noise::NoiseFamily;

/// Accuracy drop, in percentage points, between consecutive levels that marks a critical failure.
pub const DEFAULT_DROP_POINTS: f64 = 40.0;
/// Minimum accuracy, in percent, for a model to count as functional at a level.
pub const DEFAULT_FUNCTIONAL_PERCENT: f64 = 70.0;

// Absorbs binary rounding of percentages like (0.9 - 0.5) * 100.
const PERCENT_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("curve needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("curve levels must be finite, non-negative and strictly increasing (level {level} after {previous})")]
    UnorderedLevels { previous: f64, level: f64 },
    #[error("level {0} appears twice with different metrics")]
    ConflictingDuplicate(f64),
    #[error("level {0} is not part of the curve")]
    LevelNotInCurve(f64),
    #[error("level {0} has no confusion matrix attached")]
    MissingConfusion(f64),
    #[error("threshold must be positive and finite, got {0}")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub level: f64,
    pub report: MetricsReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
}

/// Metric reports ordered by strictly increasing noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationCurve {
    family: NoiseFamily,
    points: Vec<CurvePoint>,
}

impl DegradationCurve {
    /// Exact duplicate points (same level and metrics) are merged; any other
    /// repeat or decrease in level is rejected.
    pub fn new(family: NoiseFamily, points: Vec<CurvePoint>) -> Result<Self, AnalysisError> {
        let mut kept: Vec<CurvePoint> = Vec::with_capacity(points.len());
        for p in points {
            if !p.level.is_finite() || p.level < 0.0 {
                return Err(AnalysisError::UnorderedLevels { previous: f64::NAN, level: p.level });
            }
            if let Some(last) = kept.last() {
                if p.level == last.level {
                    if p == *last {
                        continue;
                    }
                    return Err(AnalysisError::ConflictingDuplicate(p.level));
                }
                if p.level < last.level {
                    return Err(AnalysisError::UnorderedLevels { previous: last.level, level: p.level });
                }
            }
            kept.push(p);
        }
        Ok(Self { family, points: kept })
    }

    /// Curve from `(level, accuracy)` pairs with accuracy as a fraction.
    /// Other metrics are left at zero and no confusion data is attached.
    pub fn from_accuracies(family: NoiseFamily, points: &[(f64, f64)]) -> Result<Self, AnalysisError> {
        Self::new(
            family,
            points
                .iter()
                .map(|&(level, accuracy)| CurvePoint { level, report: accuracy_only(accuracy), confusion: None })
                .collect(),
        )
    }

    pub fn family(&self) -> NoiseFamily {
        self.family
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn levels(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.level)
    }

    pub fn point_at(&self, level: f64) -> Option<&CurvePoint> {
        self.points.iter().find(|p| same_level(p.level, level))
    }
}

fn accuracy_only(accuracy: f64) -> MetricsReport {
    MetricsReport {
        accuracy,
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        auc: 0.0,
        n: 0,
        threshold: crate::metrics::DEFAULT_THRESHOLD,
        precision_undefined: false,
        recall_undefined: false,
    }
}

fn same_level(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailurePoint {
    /// The level at which the degraded accuracy is observed.
    pub level: f64,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    Catastrophic,
    Graceful,
}

impl Pattern {
    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::Catastrophic => "catastrophic",
            Pattern::Graceful => "graceful",
        }
    }
}

impl std::fmt::Display for Pattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisThresholds {
    pub drop_points: f64,
    pub functional_percent: f64,
}

impl Default for AnalysisThresholds {
    fn default() -> Self {
        Self { drop_points: DEFAULT_DROP_POINTS, functional_percent: DEFAULT_FUNCTIONAL_PERCENT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessVerdict {
    pub failure_points: Vec<FailurePoint>,
    pub pattern: Pattern,
    pub functional_levels: Vec<(f64, bool)>,
    pub collapse_levels: Vec<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Levels where accuracy falls by more than `drop_points` percentage points
/// relative to the previous level.
pub fn detect_failure_points(curve: &DegradationCurve, drop_points: f64) -> Result<Vec<FailurePoint>, AnalysisError> {
    if !(drop_points > 0.0 && drop_points.is_finite()) {
        return Err(AnalysisError::InvalidThreshold(drop_points));
    }
    if curve.points.len() < 2 {
        return Err(AnalysisError::TooFewPoints(curve.points.len()));
    }
    Ok(curve
        .points
        .windows(2)
        .filter_map(|w| {
            let (before, after) = (w[0].report.accuracy, w[1].report.accuracy);
            ((before - after) * 100.0 > drop_points + PERCENT_EPS).then_some(FailurePoint {
                level: w[1].level,
                accuracy_before: before,
                accuracy_after: after,
            })
        })
        .collect())
}

pub fn classify_pattern(failure_points: &[FailurePoint]) -> Pattern {
    if failure_points.is_empty() {
        Pattern::Graceful
    } else {
        Pattern::Catastrophic
    }
}

/// `accuracy(level) >= functional_percent`, inclusive.
pub fn functional_at(curve: &DegradationCurve, level: f64, functional_percent: f64) -> Result<bool, AnalysisError> {
    let point = curve.point_at(level).ok_or(AnalysisError::LevelNotInCurve(level))?;
    Ok(point.report.accuracy * 100.0 >= functional_percent - PERCENT_EPS)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CollapseScan {
    pub levels: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Levels where no positive is recovered although positives were evaluated
/// (`tp = 0`, `fn > 0`). Levels without positives are skipped with a warning.
pub fn detect_collapse(curve: &DegradationCurve) -> Result<CollapseScan, AnalysisError> {
    let mut scan = CollapseScan::default();
    for p in &curve.points {
        let cm = p.confusion.ok_or(AnalysisError::MissingConfusion(p.level))?;
        if cm.positives() == 0 {
            scan.warnings.push(format!("level {}: no positive records, collapse check is vacuous", p.level));
        } else if cm.tp == 0 {
            scan.levels.push(p.level);
        }
    }
    Ok(scan)
}

/// Runs every check. Collapse detection is skipped (with a warning) when the
/// curve carries no confusion data.
pub fn analyze(curve: &DegradationCurve, thresholds: &AnalysisThresholds) -> Result<RobustnessVerdict, AnalysisError> {
    if !(thresholds.functional_percent.is_finite()) {
        return Err(AnalysisError::InvalidThreshold(thresholds.functional_percent));
    }
    let failure_points = detect_failure_points(curve, thresholds.drop_points)?;
    let pattern = classify_pattern(&failure_points);
    let functional_levels = curve
        .points
        .iter()
        .map(|p| (p.level, p.report.accuracy * 100.0 >= thresholds.functional_percent - PERCENT_EPS))
        .collect();
    let (collapse_levels, warnings) = match detect_collapse(curve) {
        Ok(scan) => (scan.levels, scan.warnings),
        Err(AnalysisError::MissingConfusion(level)) => {
            (Vec::new(), vec![format!("collapse detection skipped: level {level} has no confusion matrix")])
        }
        Err(e) => return Err(e),
    };
    Ok(RobustnessVerdict { failure_points, pattern, functional_levels, collapse_levels, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::summarize;
    use proptest::prelude::*;

    fn curve(points: &[(f64, f64)]) -> DegradationCurve {
        DegradationCurve::from_accuracies(NoiseFamily::Gaussian, points).unwrap()
    }

    fn cm_point(level: f64, cm: ConfusionMatrix) -> CurvePoint {
        CurvePoint { level, report: summarize(&cm, 0.5, 0.5), confusion: Some(cm) }
    }

    #[test]
    fn resnet_transition_fails_at_later_level() {
        let c = curve(&[(2.5e-5, 0.8893), (5e-5, 0.4881)]);
        let f = detect_failure_points(&c, DEFAULT_DROP_POINTS).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].level, 5e-5);
        assert_eq!((f[0].accuracy_before, f[0].accuracy_after), (0.8893, 0.4881));
        assert_eq!(classify_pattern(&f), Pattern::Catastrophic);
    }

    #[test]
    fn gentle_or_flat_curves_have_no_failures() {
        let c = curve(&[(0.0, 0.95), (1e-4, 0.90), (1e-3, 0.85), (1e-2, 0.80)]);
        assert!(detect_failure_points(&c, 40.0).unwrap().is_empty());
        let c = curve(&[(0.0, 0.6), (1e-4, 0.6), (1e-3, 0.6)]);
        assert!(detect_failure_points(&c, 40.0).unwrap().is_empty());
    }

    #[test]
    fn vgg_style_curve_is_graceful() {
        let c = curve(&[(0.0, 0.9566), (5e-4, 0.90), (1e-3, 0.8379)]);
        assert_eq!(classify_pattern(&detect_failure_points(&c, 40.0).unwrap()), Pattern::Graceful);
        assert!(functional_at(&c, 1e-3, DEFAULT_FUNCTIONAL_PERCENT).unwrap());
    }

    #[test]
    fn single_big_drop_is_catastrophic() {
        let c = curve(&[(0.0, 0.96), (1e-3, 0.50)]);
        assert_eq!(classify_pattern(&detect_failure_points(&c, 40.0).unwrap()), Pattern::Catastrophic);
    }

    #[test]
    fn exactly_forty_points_is_not_a_failure() {
        let c = curve(&[(0.0, 0.9), (1e-3, 0.5)]);
        assert!(detect_failure_points(&c, 40.0).unwrap().is_empty());
    }

    #[test]
    fn too_few_points() {
        let c = curve(&[(0.0, 0.9)]);
        assert_eq!(detect_failure_points(&c, 40.0), Err(AnalysisError::TooFewPoints(1)));
    }

    #[test]
    fn functional_boundaries() {
        let c = curve(&[(0.0, 0.95), (1e-3, 0.8379), (2e-3, 0.4704), (3e-3, 0.70)]);
        assert!(functional_at(&c, 1e-3, 70.0).unwrap());
        assert!(!functional_at(&c, 2e-3, 70.0).unwrap());
        assert!(functional_at(&c, 3e-3, 70.0).unwrap());
        assert_eq!(functional_at(&c, 5e-3, 70.0), Err(AnalysisError::LevelNotInCurve(5e-3)));
    }

    #[test]
    fn unordered_levels_rejected() {
        assert!(matches!(
            DegradationCurve::from_accuracies(NoiseFamily::Poisson, &[(1e-3, 0.9), (1e-4, 0.8)]),
            Err(AnalysisError::UnorderedLevels { .. })
        ));
        assert!(matches!(
            DegradationCurve::from_accuracies(NoiseFamily::Poisson, &[(0.0, 0.9), (0.0, 0.8)]),
            Err(AnalysisError::ConflictingDuplicate(_))
        ));
    }

    #[test]
    fn collapse_detection() {
        let c = DegradationCurve::new(
            NoiseFamily::Gaussian,
            vec![
                cm_point(0.0, ConfusionMatrix { tp: 50, fn_: 0, tn: 50, fp: 0 }),
                cm_point(1e-3, ConfusionMatrix { tp: 0, fn_: 50, tn: 50, fp: 0 }),
                cm_point(2e-3, ConfusionMatrix { tp: 0, fn_: 0, tn: 40, fp: 10 }),
            ],
        )
        .unwrap();
        let scan = detect_collapse(&c).unwrap();
        assert_eq!(scan.levels, vec![1e-3]);
        assert_eq!(scan.warnings.len(), 1);
        // balanced single-class collapse sits at chance accuracy
        assert!(c.point_at(1e-3).unwrap().report.accuracy <= 0.55);
    }

    #[test]
    fn collapse_requires_confusion() {
        let c = curve(&[(0.0, 0.9), (1e-3, 0.5)]);
        assert_eq!(detect_collapse(&c), Err(AnalysisError::MissingConfusion(0.0)));
        let v = analyze(&c, &AnalysisThresholds::default()).unwrap();
        assert!(v.collapse_levels.is_empty());
        assert_eq!(v.warnings.len(), 1);
    }

    fn accuracies() -> impl Strategy<Value = Vec<(f64, f64)>> {
        proptest::collection::vec(0u32..=1000, 2..12)
            .prop_map(|accs| accs.into_iter().enumerate().map(|(i, a)| (i as f64 * 1e-4, f64::from(a) / 1000.0)).collect())
    }

    proptest! {
        #[test]
        fn raising_threshold_never_adds_failures(points in accuracies(), t in 1.0f64..80.0, dt in 0.0f64..20.0) {
            let c = curve(&points);
            let low = detect_failure_points(&c, t).unwrap();
            let high = detect_failure_points(&c, t + dt).unwrap();
            prop_assert!(high.len() <= low.len());
            prop_assert!(high.iter().all(|f| low.contains(f)));
        }

        #[test]
        fn graceful_iff_no_failures(points in accuracies()) {
            let c = curve(&points);
            let v = analyze(&c, &AnalysisThresholds::default()).unwrap();
            prop_assert_eq!(v.pattern == Pattern::Graceful, v.failure_points.is_empty());
        }

        #[test]
        fn leading_clean_duplicate_changes_nothing(points in accuracies()) {
            let c = curve(&points);
            let mut dup = points.clone();
            dup.insert(0, points[0]);
            let d = curve(&dup);
            let t = AnalysisThresholds::default();
            prop_assert_eq!(analyze(&c, &t).unwrap(), analyze(&d, &t).unwrap());
        }

        #[test]
        fn collapsed_levels_sit_near_chance(pos in 1u64..100, fp in 0u64..100) {
            // balanced evaluation set: as many negatives as positives
            let neg = pos;
            let fp = fp.min(neg);
            let cm = ConfusionMatrix { tp: 0, fn_: pos, fp, tn: neg - fp };
            let c = DegradationCurve::new(NoiseFamily::Mixed, vec![cm_point(0.0, cm)]).unwrap();
            let scan = detect_collapse(&c).unwrap();
            prop_assert_eq!(scan.levels.len(), 1);
            prop_assert!(c.points()[0].report.accuracy <= 0.55);
        }
    }
}
