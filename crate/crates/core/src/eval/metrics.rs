//! Threshold metrics, ROC sweep and the rank-statistic AUROC.

use serde::{Deserialize, Serialize};

use crate::error::{OdrError, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores at or above this value are called positive at this point.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auroc: f64,
    /// False when the labels hold a single class; `auroc` is then 0.5.
    pub auroc_defined: bool,
    pub accuracy: f64,
    pub precision: f64,
    /// False when nothing was predicted positive; `precision` is then 0.
    pub precision_defined: bool,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
    pub n: usize,
    pub positives: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub roc_points: Vec<RocPoint>,
}

/// Mann-Whitney AUROC: the share of positive-negative pairs ranked
/// correctly, ties counting one half. `None` for single-class labels.
///
/// Counts are accumulated over tie groups as integers and half-integers, so
/// the result is exactly the pairwise count divided by the pair total.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut q) = (0u128, 0u128);
        while j < order.len() && scores[order[j]].total_cmp(&scores[order[i]]).is_eq() {
            if labels[order[j]] == 1 {
                p += 1;
            } else {
                q += 1;
            }
            j += 1;
        }
        twice_u += 2 * p * neg_below + p * q;
        neg_below += q;
        i = j;
    }
    Some(twice_u as f64 / (2 * n_pos as u128 * n_neg as u128) as f64)
}

/// ROC points from a descending score sweep, one per distinct score,
/// starting at (0,0) and ending at (1,1).
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Vec<RocPoint> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count().max(1) as f64;
    let n_neg = (labels.len() - labels.iter().filter(|&&y| y == 1).count()).max(1) as f64;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]].total_cmp(&s).is_eq() {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n_neg,
            tpr: tp as f64 / n_pos,
            threshold: s,
        });
    }
    if let Some(last) = points.last_mut() {
        last.fpr = 1.0;
        last.tpr = 1.0;
    }
    points
}

/// Trapezoid area under ROC points.
pub fn trapezoid_auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

pub fn compute_metrics(scores: &[f64], labels: &[u8], threshold: f64) -> Result<EvalReport> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(OdrError::InvalidInput(format!(
            "{} scores for {} labels; need equal non-zero lengths",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(OdrError::InvalidInput("NaN score".into()));
    }
    let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fneg += 1,
        }
    }
    let n = scores.len();
    let positives = tp + fneg;
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, positives);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let auc = auroc(scores, labels);
    Ok(EvalReport {
        auroc: auc.unwrap_or(0.5),
        auroc_defined: auc.is_some(),
        accuracy: ratio(tp + tn, n),
        precision,
        precision_defined: tp + fp > 0,
        recall,
        f1,
        threshold,
        n,
        positives,
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fneg,
        roc_points: roc_curve(scores, labels),
    })
}

/// Rounds half away from zero to `digits` decimals, as tables are printed.
pub fn round_to(v: f64, digits: i32) -> f64 {
    let f = 10f64.powi(digits);
    (v * f).round() / f
}

/// Arithmetic means of the headline metrics over several reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub auroc: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MeanMetrics {
    pub fn of(reports: &[EvalReport]) -> MeanMetrics {
        let n = reports.len().max(1) as f64;
        let mean = |f: fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        MeanMetrics {
            auroc: mean(|r| r.auroc),
            accuracy: mean(|r| r.accuracy),
            precision: mean(|r| r.precision),
            recall: mean(|r| r.recall),
            f1: mean(|r| r.f1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn brute(scores: &[f64], labels: &[u8]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &a) in scores.iter().enumerate() {
            for (j, &b) in scores.iter().enumerate() {
                if labels[i] == 1 && labels[j] == 0 {
                    den += 1.0;
                    if a > b {
                        num += 1.0;
                    } else if a == b {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn perfect_ranking() {
        assert_eq!(auroc(&[0.9, 0.2], &[1, 0]), Some(1.0));
        assert_eq!(auroc(&[0.2, 0.9], &[1, 0]), Some(0.0));
        assert_eq!(auroc(&[0.5, 0.5], &[1, 0]), Some(0.5));
        assert_eq!(auroc(&[0.5, 0.5], &[1, 1]), None);
    }

    #[test]
    fn rank_statistic_equals_pairwise_count_with_ties() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let n = r.random_range(2..=200);
            let scores: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..12u8)) / 11.0).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.4))).collect();
            labels[0] = 0;
            labels[1] = 1;
            let a = auroc(&scores, &labels).unwrap();
            assert!((a - brute(&scores, &labels)).abs() <= 1e-12);
        }
    }

    #[test]
    fn monotone_transforms_preserve_auroc() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let scores: Vec<f64> = (0..80).map(|_| r.random_range(-2.0..2.0)).collect();
            let labels: Vec<u8> = (0..80).map(|i| u8::from(i % 3 == 0)).collect();
            let cubed: Vec<f64> = scores.iter().map(|s| s * s * s).collect();
            assert_eq!(auroc(&scores, &labels), auroc(&cubed, &labels));
        }
    }

    #[test]
    fn trapezoid_area_matches_rank_statistic() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let n = r.random_range(2..150);
            let scores: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..20u8))).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.5))).collect();
            labels[0] = 1;
            labels[1] = 0;
            let rep = compute_metrics(&scores, &labels, 10.0).unwrap();
            assert!((trapezoid_auc(&rep.roc_points) - rep.auroc).abs() <= 1e-12);
            let pts = &rep.roc_points;
            assert_eq!((pts[0].fpr, pts[0].tpr), (0.0, 0.0));
            assert_eq!((pts[pts.len() - 1].fpr, pts[pts.len() - 1].tpr), (1.0, 1.0));
            assert!(pts.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr));
        }
    }

    #[test]
    fn majority_row() {
        let labels: Vec<u8> = (0..1000).map(|i| u8::from(i < 596)).collect();
        let rep = compute_metrics(&vec![0.596; 1000], &labels, DEFAULT_THRESHOLD).unwrap();
        let row: Vec<f64> = [rep.accuracy, rep.precision, rep.recall, rep.f1, rep.auroc]
            .iter()
            .map(|&v| round_to(v, 2))
            .collect();
        assert_eq!(row, vec![0.60, 0.60, 1.0, 0.75, 0.5]);
    }

    #[test]
    fn confusion_counts_reproduce_metrics() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let scores: Vec<f64> = (0..300).map(|_| r.random()).collect();
        let labels: Vec<u8> = scores.iter().map(|&s| u8::from(s + r.random_range(-0.4..0.4) > 0.5)).collect();
        let m = compute_metrics(&scores, &labels, 0.5).unwrap();
        let (tp, fp, tn, fneg) = (
            m.true_positives as f64,
            m.false_positives as f64,
            m.true_negatives as f64,
            m.false_negatives as f64,
        );
        assert_eq!(m.accuracy, (tp + tn) / 300.0);
        assert_eq!(m.precision, tp / (tp + fp));
        assert_eq!(m.recall, tp / (tp + fneg));
        assert_eq!(m.f1, 2.0 * m.precision * m.recall / (m.precision + m.recall));
    }

    #[test]
    fn undefined_cases_are_flagged() {
        let m = compute_metrics(&[0.1, 0.2], &[1, 0], 0.5).unwrap();
        assert!(!m.precision_defined);
        assert_eq!(m.precision, 0.0);
        let single = compute_metrics(&[0.1, 0.9], &[1, 1], 0.5).unwrap();
        assert!(!single.auroc_defined);
        assert!(compute_metrics(&[], &[], 0.5).is_err());
        assert!(compute_metrics(&[0.1], &[1, 0], 0.5).is_err());
    }
}
