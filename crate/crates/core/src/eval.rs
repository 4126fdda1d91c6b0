//! Binary classification metrics: confusion counts, accuracy, precision,
//! recall, F1, macro-F1 and AUROC.
//!
//! A score equal to the threshold counts as a positive prediction, here and
//! everywhere else thresholds are applied.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{probs} scores but {labels} labels")]
    LengthMismatch { probs: usize, labels: usize },
    #[error("no examples to evaluate")]
    Empty,
    #[error("label {0} is not 0 or 1")]
    BadLabel(u8),
    #[error("AUROC needs both classes present")]
    SingleClass,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    /// 0 when nothing was predicted positive.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// 0 when there are no actual positives.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// The same predictions scored with class 0 as the positive class.
    pub fn swapped(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }

    pub fn macro_f1(&self) -> f64 {
        (self.f1() + self.swapped().f1()) / 2.0
    }
}

fn check(probs: &[f64], labels: &[u8]) -> Result<(), EvalError> {
    if probs.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            probs: probs.len(),
            labels: labels.len(),
        });
    }
    if probs.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
        return Err(EvalError::BadLabel(bad));
    }
    Ok(())
}

pub fn confusion(probs: &[f64], labels: &[u8], tau: f64) -> Result<ConfusionMatrix, EvalError> {
    check(probs, labels)?;
    let mut cm = ConfusionMatrix::default();
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= tau, y == 1) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

pub fn macro_f1(probs: &[f64], labels: &[u8], tau: f64) -> Result<f64, EvalError> {
    Ok(confusion(probs, labels, tau)?.macro_f1())
}

/// Area under the ROC curve as the Mann-Whitney statistic, with tied
/// scores given their mean rank (half credit per tied pair).
pub fn auroc(probs: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    check(probs, labels)?;
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    let mut pos_rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && probs[order[j + 1]] == probs[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        let pos_in_block = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        pos_rank_sum += mid * pos_in_block as f64;
        i = j + 1;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub macro_f1: f64,
    /// `None` when only one class is present.
    pub auroc: Option<f64>,
    pub tau: f64,
    pub confusion: ConfusionMatrix,
}

pub fn evaluate(probs: &[f64], labels: &[u8], tau: f64) -> Result<MetricsReport, EvalError> {
    let cm = confusion(probs, labels, tau)?;
    let auroc = match auroc(probs, labels) {
        Ok(a) => Some(a),
        Err(EvalError::SingleClass) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricsReport {
        accuracy: cm.accuracy(),
        precision: cm.precision(),
        recall: cm.recall(),
        f1: cm.f1(),
        macro_f1: cm.macro_f1(),
        auroc,
        tau,
        confusion: cm,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    /// O(n²) pairwise count; the reference the rank formula must match.
    pub(crate) fn auroc_pairs(probs: &[f64], labels: &[u8]) -> f64 {
        let mut credit = 0.0;
        let (mut np, mut nn) = (0u64, 0u64);
        for (i, &yi) in labels.iter().enumerate() {
            if yi == 1 {
                np += 1;
            } else {
                nn += 1;
            }
            if yi != 1 {
                continue;
            }
            for (j, &yj) in labels.iter().enumerate() {
                if yj == 0 {
                    if probs[i] > probs[j] {
                        credit += 1.0;
                    } else if probs[i] == probs[j] {
                        credit += 0.5;
                    }
                }
            }
        }
        credit / (np as f64 * nn as f64)
    }

    #[test]
    fn confusion_basics_and_boundary() {
        let cm = confusion(&[0.9, 0.1], &[1, 0], 0.5).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 1, fp: 0, tn: 1, fn_: 0 });
        let cm = confusion(&[0.5], &[0], 0.5).unwrap();
        assert_eq!(cm.fp, 1);
        assert_eq!(
            confusion(&[0.5], &[0, 1], 0.5),
            Err(EvalError::LengthMismatch { probs: 1, labels: 2 })
        );
        assert_eq!(confusion(&[], &[], 0.5), Err(EvalError::Empty));
    }

    #[test]
    fn symmetric_matrix_gives_one_half_everywhere() {
        let cm = ConfusionMatrix { tp: 1, fp: 1, tn: 1, fn_: 1 };
        for v in [cm.accuracy(), cm.precision(), cm.recall(), cm.f1()] {
            assert_eq!(v, 0.5);
        }
    }

    #[test]
    fn degenerate_denominators() {
        let cm = ConfusionMatrix { tp: 0, fp: 0, tn: 5, fn_: 3 };
        assert_eq!(cm.precision(), 0.0);
        assert_eq!(cm.f1(), 0.0);
        let cm = ConfusionMatrix { tp: 0, fp: 2, tn: 5, fn_: 0 };
        assert_eq!(cm.recall(), 0.0);
    }

    #[test]
    fn macro_f1_cases() {
        assert_eq!(macro_f1(&[0.9, 0.8, 0.1, 0.2], &[1, 1, 0, 0], 0.5).unwrap(), 1.0);
        // all predicted positive on balanced labels: class-1 F1 = 2/3, class-0 F1 = 0
        let m = macro_f1(&[0.9, 0.9, 0.9, 0.9], &[1, 1, 0, 0], 0.5).unwrap();
        assert!((m - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn auroc_cases() {
        assert_eq!(auroc(&[0.9, 0.8, 0.1], &[1, 1, 0]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.9, 0.4, 0.6, 0.1], &[1, 1, 0, 0]).unwrap(), 0.75);
        assert_eq!(auroc(&[0.3, 0.3], &[1, 0]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.3, 0.4], &[1, 1]), Err(EvalError::SingleClass));
    }

    fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (2usize..120).prop_flat_map(|n| {
            (
                proptest::collection::vec((0u8..20).prop_map(|k| k as f64 / 20.0), n),
                proptest::collection::vec(0u8..2, n),
            )
        })
    }

    proptest! {
        #[test]
        fn auroc_matches_pairwise_oracle((p, y) in scored()) {
            prop_assume!(y.contains(&0) && y.contains(&1));
            prop_assert_eq!(auroc(&p, &y).unwrap(), auroc_pairs(&p, &y));
        }

        #[test]
        fn auroc_monotone_invariance((p, y) in scored()) {
            prop_assume!(y.contains(&0) && y.contains(&1));
            let t: Vec<f64> = p.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
            prop_assert_eq!(auroc(&p, &y).unwrap(), auroc(&t, &y).unwrap());
        }

        #[test]
        fn accuracy_integer_identity((p, y) in scored(), tau in 0.0f64..1.0) {
            let cm = confusion(&p, &y, tau).unwrap();
            prop_assert_eq!(cm.total(), p.len() as u64);
            prop_assert_eq!((cm.accuracy() * cm.total() as f64).round() as u64, cm.tp + cm.tn);
        }

        #[test]
        fn macro_f1_relabel_invariance((p, y) in scored(), tau in 0.05f64..0.95) {
            let cm = confusion(&p, &y, tau).unwrap();
            prop_assert_eq!(cm.macro_f1(), cm.swapped().macro_f1());
        }
    }

    #[test]
    fn auroc_complement_without_ties() {
        let p = [0.91, 0.13, 0.57, 0.42, 0.77, 0.05];
        let y = [1, 0, 1, 0, 0, 1];
        let flipped: Vec<f64> = p.iter().map(|v| 1.0 - v).collect();
        let s = auroc(&p, &y).unwrap() + auroc(&flipped, &y).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
