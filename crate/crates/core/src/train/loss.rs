//! Per-example classification losses and their gradients with respect to
//! the two logits.
//!
//! Both losses depend on the logits only through the true-class margin
//! `m = z_y − z_{1−y}`, with `p_t = σ(m)`, so each returns `dL/dm` and the
//! logit gradient is `(±dL/dm)`.

use serde::{Deserialize, Serialize};

use crate::encoder::{predict_proba, Logits};

/// Probabilities are clamped to `[ε, 1 − ε]` before any logarithm.
pub const PROB_EPS: f64 = 1e-7;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn p_true(p: f64, y: u8) -> f64 {
    clamp_prob(if y == 1 { p } else { 1.0 - p })
}

/// `−α (1 − p_t)^γ log p_t` where `p` is the class-1 probability.
pub fn focal_loss(p: f64, y: u8, alpha: f64, gamma: f64) -> f64 {
    let pt = p_true(p, y);
    -alpha * (1.0 - pt).powf(gamma) * pt.ln()
}

/// `dL/dm` for the focal loss.
pub fn focal_margin_grad(p: f64, y: u8, alpha: f64, gamma: f64) -> f64 {
    let pt = p_true(p, y);
    let q = 1.0 - pt;
    alpha * (gamma * pt * q.powf(gamma) * pt.ln() - q.powf(gamma + 1.0))
}

/// `−w_y [y log p + (1 − y) log(1 − p)]`.
pub fn weighted_bce(p: f64, y: u8, w0: f64, w1: f64) -> f64 {
    let w = if y == 1 { w1 } else { w0 };
    -w * p_true(p, y).ln()
}

pub fn weighted_bce_margin_grad(p: f64, y: u8, w0: f64, w1: f64) -> f64 {
    let w = if y == 1 { w1 } else { w0 };
    -w * (1.0 - p_true(p, y))
}

/// Weights inversely proportional to class frequency, scaled so the
/// example-weighted mean weight is 1: `w_c = n / (2 n_c)`.
pub fn balanced_class_weights(labels: &[u8]) -> [f64; 2] {
    let n = labels.len() as f64;
    let n1 = labels.iter().filter(|&&y| y == 1).count() as f64;
    let n0 = n - n1;
    if n0 == 0.0 || n1 == 0.0 {
        return [1.0, 1.0];
    }
    [n / (2.0 * n0), n / (2.0 * n1)]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    WeightedBce,
    Focal,
}

/// A fully parameterized loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    WeightedBce { w0: f64, w1: f64 },
    Focal { alpha: f64, gamma: f64 },
}

impl Loss {
    pub fn value(&self, p: f64, y: u8) -> f64 {
        match *self {
            Loss::WeightedBce { w0, w1 } => weighted_bce(p, y, w0, w1),
            Loss::Focal { alpha, gamma } => focal_loss(p, y, alpha, gamma),
        }
    }

    /// Loss value and d(loss)/d(logits) for one example.
    pub fn value_and_grad(&self, logits: Logits<f32>, y: u8) -> (f64, Logits<f32>) {
        let p = predict_proba([logits[0] as f64, logits[1] as f64]);
        let dm = match *self {
            Loss::WeightedBce { w0, w1 } => weighted_bce_margin_grad(p, y, w0, w1),
            Loss::Focal { alpha, gamma } => focal_margin_grad(p, y, alpha, gamma),
        } as f32;
        let grad = if y == 1 { [-dm, dm] } else { [dm, -dm] };
        (self.value(p, y), grad)
    }
}
