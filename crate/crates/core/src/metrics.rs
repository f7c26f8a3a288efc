//! Binary classification metrics: confusion counts, accuracy, precision,
//! recall, F1 and rank-based ROC AUC.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::PredictionSet;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("prediction set is empty")]
    EmptyPredictions,
    #[error("AUC needs both classes, found only {0} records of one class")]
    SingleClassSet(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub n: u64,
    pub threshold: f64,
    /// No positive predictions, so precision was reported as 0.
    pub precision_undefined: bool,
    /// No positive records, so recall was reported as 0.
    pub recall_undefined: bool,
}

/// A record counts as predicted positive iff `score >= threshold`.
pub fn confusion(preds: &PredictionSet, threshold: f64) -> Result<ConfusionMatrix, MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::EmptyPredictions);
    }
    let mut cm = ConfusionMatrix::default();
    for r in preds.records() {
        match (r.label.is_positive(), r.score >= threshold) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fn_ += 1,
            (false, true) => cm.fp += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// Zero denominators produce 0 and set the matching `*_undefined` flag.
pub fn summarize(cm: &ConfusionMatrix, auc: f64, threshold: f64) -> MetricsReport {
    let n = cm.total();
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let accuracy = ratio(cm.tp + cm.tn, n);
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    MetricsReport {
        accuracy,
        precision,
        recall,
        f1,
        auc,
        n,
        threshold,
        precision_undefined: cm.tp + cm.fp == 0,
        recall_undefined: cm.tp + cm.fn_ == 0,
    }
}

/// Confusion matrix plus full report at `threshold`.
pub fn evaluate(preds: &PredictionSet, threshold: f64) -> Result<(ConfusionMatrix, MetricsReport), MetricsError> {
    let cm = confusion(preds, threshold)?;
    let auc = auc(preds)?;
    Ok((cm, summarize(&cm, auc, threshold)))
}

pub fn auc(preds: &PredictionSet) -> Result<f64, MetricsError> {
    let pairs: Vec<(bool, f64)> = preds.records().iter().map(|r| (r.label.is_positive(), r.score)).collect();
    auc_from_scores(&pairs)
}

/// Mann-Whitney AUC: `(concordant + ties / 2) / (P * N)`.
///
/// Scores are ranked once (`O(n log n)`); tied groups receive their average
/// rank. Everything is accumulated as doubled integers, so the result equals
/// exhaustive pair counting bit for bit.
pub fn auc_from_scores(records: &[(bool, f64)]) -> Result<f64, MetricsError> {
    let positives = records.iter().filter(|(p, _)| *p).count() as u64;
    let negatives = records.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::SingleClassSet(records.len()));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].1.total_cmp(&records[b].1));

    // Twice the rank sum of the positives.
    let mut doubled_rank_sum = 0u64;
    let mut start = 0usize;
    while start < order.len() {
        let score = records[order[start]].1;
        let mut end = start + 1;
        while end < order.len() && records[order[end]].1 == score {
            end += 1;
        }
        // 1-based ranks start+1 ..= end; twice their mean is start + 1 + end
        let doubled_rank = (start + 1 + end) as u64;
        let pos_in_group = order[start..end].iter().filter(|&&i| records[i].0).count() as u64;
        doubled_rank_sum += doubled_rank * pos_in_group;
        start = end;
    }
    let doubled_u = doubled_rank_sum - positives * (positives + 1);
    Ok(doubled_u as f64 / (2 * positives * negatives) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::PredictionRecord;
    use crate::manifest::Label;
    use proptest::prelude::*;

    fn set(pairs: &[(u8, f64)]) -> PredictionSet {
        let records = pairs
            .iter()
            .enumerate()
            .map(|(i, &(l, s))| PredictionRecord { image_id: format!("i{i}"), label: Label::try_from(l).unwrap(), score: s })
            .collect();
        PredictionSet::new("t", records).unwrap()
    }

    fn brute_force(records: &[(bool, f64)]) -> f64 {
        let mut doubled = 0u64;
        for &(_, sp) in records.iter().filter(|r| r.0) {
            for &(_, sn) in records.iter().filter(|r| !r.0) {
                doubled += if sp > sn { 2 } else if sp == sn { 1 } else { 0 };
            }
        }
        let p = records.iter().filter(|r| r.0).count() as u64;
        let n = records.len() as u64 - p;
        doubled as f64 / (2 * p * n) as f64
    }

    #[test]
    fn perfect_and_inverted_confusion() {
        let cm = confusion(&set(&[(1, 0.9), (0, 0.1)]), 0.5).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 1, fp: 0, tn: 1, fn_: 0 });
        let cm = confusion(&set(&[(1, 0.4), (0, 0.6)]), 0.5).unwrap();
        assert_eq!((cm.fn_, cm.fp), (1, 1));
    }

    #[test]
    fn zero_threshold_predicts_everything_positive() {
        let cm = confusion(&set(&[(1, 0.0), (0, 0.0), (0, 0.3), (1, 1.0)]), 0.0).unwrap();
        assert_eq!((cm.tp, cm.fp, cm.tn, cm.fn_), (2, 2, 0, 0));
    }

    #[test]
    fn score_equal_to_threshold_is_positive() {
        let cm = confusion(&set(&[(1, 0.5)]), 0.5).unwrap();
        assert_eq!(cm.tp, 1);
    }

    #[test]
    fn empty_predictions() {
        assert_eq!(confusion(&set(&[]), 0.5), Err(MetricsError::EmptyPredictions));
    }

    #[test]
    fn headline_accuracy() {
        let r = summarize(&ConfusionMatrix { tp: 46, tn: 46, fp: 4, fn_: 4 }, 0.9, 0.5);
        assert!((r.accuracy - 0.92).abs() < 1e-12);
        assert_eq!(r.n, 100);
    }

    #[test]
    fn no_positive_predictions_flags_precision() {
        let r = summarize(&ConfusionMatrix { tp: 0, fp: 0, tn: 50, fn_: 50 }, 0.5, 0.5);
        assert_eq!(r.precision, 0.0);
        assert!(r.precision_undefined);
        assert!(!r.recall_undefined);
        assert_eq!(r.f1, 0.0);
        assert_eq!(r.accuracy, 0.5);
    }

    #[test]
    fn half_recall_full_precision() {
        let r = summarize(&ConfusionMatrix { tp: 10, fn_: 10, fp: 0, tn: 0 }, 0.5, 0.5);
        assert_eq!(r.recall, 0.5);
        assert_eq!(r.precision, 1.0);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&set(&[(1, 0.9), (1, 0.8), (0, 0.1), (0, 0.7)])).unwrap(), 1.0);
        assert_eq!(auc(&set(&[(1, 0.9), (1, 0.4), (0, 0.1), (0, 0.7)])).unwrap(), 0.75);
        assert_eq!(auc(&set(&[(1, 0.3), (1, 0.3), (0, 0.3), (0, 0.3), (0, 0.3)])).unwrap(), 0.5);
    }

    #[test]
    fn auc_needs_both_classes() {
        assert!(matches!(auc(&set(&[(1, 0.9), (1, 0.2)])), Err(MetricsError::SingleClassSet(2))));
    }

    fn labeled_scores() -> impl Strategy<Value = Vec<(bool, f64)>> {
        // few distinct score values so ties are common
        proptest::collection::vec((any::<bool>(), 0u8..12), 2..200).prop_map(|v| {
            v.into_iter().map(|(l, s)| (l, f64::from(s) / 11.0)).collect()
        })
    }

    proptest! {
        #[test]
        fn auc_equals_pair_enumeration(records in labeled_scores()) {
            let both = records.iter().any(|r| r.0) && records.iter().any(|r| !r.0);
            prop_assume!(both);
            prop_assert_eq!(auc_from_scores(&records).unwrap(), brute_force(&records));
        }

        #[test]
        fn auc_invariant_under_monotone_transform(records in labeled_scores()) {
            prop_assume!(records.iter().any(|r| r.0) && records.iter().any(|r| !r.0));
            let squashed: Vec<(bool, f64)> = records.iter().map(|&(l, s)| (l, (3.0 * s - 1.0).tanh())).collect();
            prop_assert_eq!(auc_from_scores(&records).unwrap(), auc_from_scores(&squashed).unwrap());
        }

        #[test]
        fn flipping_labels_complements_auc(records in labeled_scores()) {
            prop_assume!(records.iter().any(|r| r.0) && records.iter().any(|r| !r.0));
            let flipped: Vec<(bool, f64)> = records.iter().map(|&(l, s)| (!l, s)).collect();
            let a = auc_from_scores(&records).unwrap();
            let b = auc_from_scores(&flipped).unwrap();
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }

        #[test]
        fn accuracy_is_a_step_function_of_threshold(records in labeled_scores()) {
            let pairs: Vec<(u8, f64)> = records.iter().map(|&(l, s)| (l as u8, s)).collect();
            let preds = set(&pairs);
            let mut seen = std::collections::BTreeSet::new();
            for k in 0..=100 {
                let cm = confusion(&preds, k as f64 / 100.0).unwrap();
                seen.insert(cm.tp + cm.tn);
            }
            prop_assert!(seen.len() <= preds.len() + 1);
        }

        #[test]
        fn report_invariants(tp in 0u64..50, fp in 0u64..50, tn in 0u64..50, fn_ in 0u64..50) {
            prop_assume!(tp + fp + tn + fn_ > 0);
            let r = summarize(&ConfusionMatrix { tp, fp, tn, fn_ }, 0.5, 0.5);
            for v in [r.accuracy, r.precision, r.recall, r.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if r.precision + r.recall > 0.0 {
                prop_assert!((r.f1 - 2.0 * r.precision * r.recall / (r.precision + r.recall)).abs() < 1e-12);
            } else {
                prop_assert_eq!(r.f1, 0.0);
            }
        }
    }
}
