//! AdamW with decoupled weight decay and the warmup-then-constant learning
//! rate schedule.

use serde::{Deserialize, Serialize};

use crate::encoder::{ModelParams, TensorKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamWConfig {
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_weight_decay() -> f64 {
    0.01
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            weight_decay: default_weight_decay(),
        }
    }
}

/// First and second moments plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub t: u64,
    /// Steps skipped because of non-finite gradients.
    pub skipped: u64,
}

impl OptState {
    pub fn new(n: usize) -> OptState {
        OptState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            skipped: 0,
        }
    }
}

/// One AdamW update of a parameter slice at step `t` (1-based).
#[allow(clippy::too_many_arguments)]
pub fn adamw_update(
    param: &mut [f32],
    grad: &[f32],
    m: &mut [f32],
    v: &mut [f32],
    t: u64,
    lr: f64,
    cfg: &AdamWConfig,
    decay: bool,
) {
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    let wd = if decay { cfg.weight_decay } else { 0.0 };
    for i in 0..param.len() {
        let g = grad[i] as f64;
        let mi = cfg.beta1 * m[i] as f64 + (1.0 - cfg.beta1) * g;
        let vi = cfg.beta2 * v[i] as f64 + (1.0 - cfg.beta2) * g * g;
        m[i] = mi as f32;
        v[i] = vi as f32;
        let (mh, vh) = (mi / bc1, vi / bc2);
        let theta = param[i] as f64;
        param[i] = (theta - lr * (mh / (vh.sqrt() + cfg.eps) + wd * theta)) as f32;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// Gradients contained NaN or ±∞; parameters and moments untouched.
    SkippedNonFinite,
}

/// AdamW over a whole model. Frozen tensors get no update, no decay and no
/// moment change. Decay applies to weight matrices and embeddings only.
pub fn adamw_step(
    params: &mut ModelParams,
    grads: &[f32],
    state: &mut OptState,
    lr: f64,
    cfg: &AdamWConfig,
    frozen: &[bool],
) -> StepOutcome {
    if grads.iter().any(|g| !g.is_finite()) {
        state.skipped += 1;
        return StepOutcome::SkippedNonFinite;
    }
    state.t += 1;
    for (spec, &is_frozen) in params.layout.specs.iter().zip(frozen) {
        if is_frozen {
            continue;
        }
        let r = spec.range();
        let decay = matches!(spec.kind, TensorKind::Weight | TensorKind::Embedding);
        adamw_update(
            &mut params.data[r.clone()],
            &grads[r.clone()],
            &mut state.m[r.clone()],
            &mut state.v[r],
            state.t,
            lr,
            cfg,
            decay,
        );
    }
    StepOutcome::Applied
}

pub fn warmup_steps(total_steps: u64, warmup_frac: f64) -> u64 {
    (warmup_frac * total_steps as f64).ceil() as u64
}

/// Linear ramp from 0 to `base_lr` over the first `⌈warmup_frac · total⌉`
/// steps, constant afterwards.
pub fn lr_schedule(step: u64, total_steps: u64, base_lr: f64, warmup_frac: f64) -> f64 {
    let warm = warmup_steps(total_steps, warmup_frac);
    if warm == 0 || step >= warm {
        base_lr
    } else {
        base_lr * step as f64 / warm as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_on_scalar() {
        let mut theta = [1.0f32];
        let (mut m, mut v) = ([0.0f32], [0.0f32]);
        let cfg = AdamWConfig { weight_decay: 0.0, ..Default::default() };
        adamw_update(&mut theta, &[1.0], &mut m, &mut v, 1, 0.1, &cfg, true);
        assert!((theta[0] - 0.9).abs() < 1e-6, "{}", theta[0]);
    }

    #[test]
    fn decoupled_decay_without_gradient() {
        let mut theta = [2.0f32];
        let (mut m, mut v) = ([0.0f32], [0.0f32]);
        let cfg = AdamWConfig { weight_decay: 0.01, ..Default::default() };
        adamw_update(&mut theta, &[0.0], &mut m, &mut v, 1, 0.1, &cfg, true);
        assert!((theta[0] as f64 - (2.0 - 0.1 * 0.01 * 2.0)).abs() < 1e-6);
    }

    #[test]
    fn identical_steps_are_deterministic() {
        let run = || {
            let mut theta = vec![0.3f32, -1.2, 4.0];
            let (mut m, mut v) = (vec![0.0f32; 3], vec![0.0f32; 3]);
            for t in 1..=3 {
                adamw_update(&mut theta, &[0.5, -0.1, 2.0], &mut m, &mut v, t, 0.01, &AdamWConfig::default(), true);
            }
            theta
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradients_skip_the_step() {
        let mut p: ModelParams = ModelParams::init(crate::encoder::ModelConfig::tiny(), 1);
        let before = p.clone();
        let mut g = vec![0.1f32; p.data.len()];
        g[7] = f32::NAN;
        let mut st = OptState::new(g.len());
        let frozen = vec![false; p.layout.specs.len()];
        let out = adamw_step(&mut p, &g, &mut st, 0.01, &AdamWConfig::default(), &frozen);
        assert_eq!(out, StepOutcome::SkippedNonFinite);
        assert_eq!(p, before);
        assert_eq!((st.t, st.skipped), (0, 1));
    }

    #[test]
    fn schedule_shape() {
        let (total, base) = (1000, 2e-5);
        assert_eq!(lr_schedule(0, total, base, 0.06), 0.0);
        assert_eq!(warmup_steps(total, 0.06), 60);
        assert_eq!(lr_schedule(60, total, base, 0.06), base);
        assert_eq!(lr_schedule(total, total, base, 0.06), base);
        assert!((lr_schedule(30, total, base, 0.06) - base / 2.0).abs() < 1e-20);
        // continuity at the warmup boundary
        let gap = lr_schedule(60, total, base, 0.06) - lr_schedule(59, total, base, 0.06);
        assert!(gap <= base / 60.0 + 1e-20);
        // warmup count is rounded up
        assert_eq!(warmup_steps(10, 0.06), 1);
    }
}
