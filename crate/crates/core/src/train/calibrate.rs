//! Decision-threshold selection on the development split.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{macro_f1, EvalError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCalibration {
    pub tau: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("development labels contain a single class")]
    SingleClass,
    #[error("empty threshold grid")]
    EmptyGrid,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// `{0.05, 0.10, …, 0.95}`.
pub fn default_grid() -> Vec<f64> {
    (1..20).map(|k| k as f64 / 20.0).collect()
}

/// Grid value maximizing macro-F1. Ties go to the value closest to 0.5,
/// then to the smaller value.
pub fn calibrate_threshold(probs: &[f64], labels: &[u8], grid: &[f64]) -> Result<ThresholdCalibration, CalibrationError> {
    if grid.is_empty() {
        return Err(CalibrationError::EmptyGrid);
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if !labels.is_empty() && (pos == 0 || pos == labels.len()) {
        return Err(CalibrationError::SingleClass);
    }
    let mut best: Option<ThresholdCalibration> = None;
    for &tau in grid {
        let f = macro_f1(probs, labels, tau)?;
        let better = match best {
            None => true,
            Some(b) => {
                f > b.macro_f1
                    || (f == b.macro_f1
                        && ((tau - 0.5).abs() < (b.tau - 0.5).abs()
                            || ((tau - 0.5).abs() == (b.tau - 0.5).abs() && tau < b.tau)))
            }
        };
        if better {
            best = Some(ThresholdCalibration { tau, macro_f1: f });
        }
    }
    Ok(best.expect("non-empty grid"))
}
