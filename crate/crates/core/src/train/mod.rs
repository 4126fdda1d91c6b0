//! Three-stage curriculum training.
//!
//! Stage 0 warms up on a class-balanced subsample with the lowest layers
//! frozen, stage 1 runs a single class-weighted epoch, stage 2 fine-tunes
//! everything with focal loss and FGM. Each stage gets a fresh optimizer,
//! evaluates Dev macro-F1 after every epoch, stops early after `patience`
//! epochs without improvement and reloads its best checkpoint.
//!
//! Dev macro-F1 is taken at the best threshold of the calibration grid, not
//! at 0.5: focal loss with α < 0.5 shifts probabilities, and a fixed cut
//! can score a well-ranked epoch as single-class.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Split;
use crate::corpus::CleanRecord;
use crate::encoder::{self, predict_proba, Dropout, EncoderError, ModelParams};
use crate::eval;
use crate::tokenizer::{encode, TokenSeq, Vocab};

pub mod calibrate;
pub mod fgm;
pub mod loss;
pub mod optim;

pub use calibrate::{calibrate_threshold, default_grid, CalibrationError, ThresholdCalibration};
pub use fgm::fgm_perturb;
pub use loss::{balanced_class_weights, focal_loss, weighted_bce, Loss, LossKind};
pub use optim::{adamw_step, lr_schedule, AdamWConfig, OptState, StepOutcome};

/// One tokenized, labeled training or evaluation example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub seq: TokenSeq,
    pub y: u8,
}

pub fn examples_from_records<'a>(
    records: impl IntoIterator<Item = &'a CleanRecord>,
    vocab: &Vocab,
    max_len: usize,
) -> Vec<Example> {
    records
        .into_iter()
        .map(|r| Example {
            seq: encode(vocab, &r.clean_text(), max_len),
            y: r.y,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub name: Split,
    pub epochs: usize,
    pub loss: LossKind,
    #[serde(default)]
    pub fgm: bool,
    #[serde(default)]
    pub freeze_lowest_layers: usize,
    /// `[w0, w1]` for weighted BCE; `None` derives them from the stage data.
    #[serde(default)]
    pub class_weights: Option<[f64; 2]>,
    /// Down-sample the majority class to a 50/50 mix before training.
    #[serde(default)]
    pub balance: bool,
}

/// Missing keys in a config file take their value from [`CurriculumPlan::desk`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumPlan {
    pub stages: Vec<StageSpec>,
    pub lr: f64,
    #[serde(default = "default_warmup")]
    pub warmup_frac: f64,
    #[serde(default)]
    pub adamw: AdamWConfig,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_accumulation")]
    pub accumulation: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_alpha")]
    pub focal_alpha: f64,
    #[serde(default = "default_gamma")]
    pub focal_gamma: f64,
    #[serde(default = "default_fgm_eps")]
    pub fgm_epsilon: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for CurriculumPlan {
    fn default() -> Self {
        CurriculumPlan::desk()
    }
}

fn default_warmup() -> f64 {
    0.06
}
fn default_batch() -> usize {
    32
}
fn default_accumulation() -> usize {
    2
}
fn default_patience() -> usize {
    2
}
fn default_alpha() -> f64 {
    0.25
}
fn default_gamma() -> f64 {
    2.0
}
fn default_fgm_eps() -> f64 {
    1.0
}
fn default_seed() -> u64 {
    42
}

impl CurriculumPlan {
    /// Full-scale schedule: constant 2e-5 after a 6 % warmup, batch 32 with
    /// two accumulation steps, patience 2. Epoch counts other than
    /// stage 1's single pass are configuration choices.
    pub fn full_scale(stage0_epochs: usize, stage2_epochs: usize) -> CurriculumPlan {
        CurriculumPlan {
            stages: vec![
                StageSpec {
                    name: Split::Stage0,
                    epochs: stage0_epochs,
                    loss: LossKind::WeightedBce,
                    fgm: false,
                    freeze_lowest_layers: 1,
                    class_weights: None,
                    balance: true,
                },
                StageSpec {
                    name: Split::Stage1,
                    epochs: 1,
                    loss: LossKind::WeightedBce,
                    fgm: false,
                    freeze_lowest_layers: 0,
                    class_weights: None,
                    balance: false,
                },
                StageSpec {
                    name: Split::Stage2,
                    epochs: stage2_epochs,
                    loss: LossKind::Focal,
                    fgm: true,
                    freeze_lowest_layers: 0,
                    class_weights: None,
                    balance: false,
                },
            ],
            lr: 2e-5,
            warmup_frac: default_warmup(),
            adamw: AdamWConfig::default(),
            batch_size: default_batch(),
            accumulation: default_accumulation(),
            patience: default_patience(),
            focal_alpha: default_alpha(),
            focal_gamma: default_gamma(),
            fgm_epsilon: default_fgm_eps(),
            seed: default_seed(),
        }
    }

    /// Desk-scale schedule (3 + 1 + 5 epochs). A model trained from random
    /// init needs a far larger step than fine-tuning a pretrained one.
    pub fn desk() -> CurriculumPlan {
        CurriculumPlan {
            lr: 1e-3,
            ..CurriculumPlan::full_scale(3, 5)
        }
    }

    pub fn validate(&self, n_layers: usize) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidPlan(m));
        let names: Vec<Split> = self.stages.iter().map(|s| s.name).collect();
        if names != [Split::Stage0, Split::Stage1, Split::Stage2] {
            return bad(format!("stages: expected Stage0, Stage1, Stage2 in order, got {names:?}"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr: must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.warmup_frac) {
            return bad("warmup_frac: must be in [0, 1]".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size: must be at least 1".into());
        }
        if self.accumulation == 0 {
            return bad("accumulation: must be at least 1".into());
        }
        for s in &self.stages {
            if s.epochs == 0 {
                return bad(format!("stages.{}.epochs: must be at least 1", s.name));
            }
            if s.freeze_lowest_layers > n_layers {
                return bad(format!(
                    "stages.{}.freeze_lowest_layers: {} exceeds {} layers",
                    s.name, s.freeze_lowest_layers, n_layers
                ));
            }
            if let Some(w) = s.class_weights {
                if w.iter().any(|v| v.is_nan() || *v <= 0.0) {
                    return bad(format!("stages.{}.class_weights: must be positive", s.name));
                }
            }
        }
        if self.stages[1].epochs != 1 {
            return bad("stages.Stage1.epochs: stage 1 is a single pass".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: Split,
    pub stage_epoch: usize,
    pub train_loss: f64,
    /// Dev macro-F1 at `dev_tau`.
    pub dev_macro_f1: f64,
    pub dev_accuracy: f64,
    /// Threshold with the best Dev macro-F1 on the default grid.
    pub dev_tau: f64,
    pub dev_auroc: Option<f64>,
    pub steps: u64,
    pub skipped_steps: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the returned checkpoint.
    pub best_epoch: Option<usize>,
    pub events: Vec<String>,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.best_epoch.map(|i| &self.epochs[i])
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid curriculum plan: {0}")]
    InvalidPlan(String),
    #[error("stage {0} has no training data")]
    EmptyStage(Split),
    #[error("development split is empty")]
    EmptyDev,
    #[error("training diverged in {stage}: non-finite loss for a full epoch")]
    Diverged { stage: Split, history: Box<TrainHistory> },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// Stage inputs for [`run_curriculum`].
#[derive(Debug, Clone, Default)]
pub struct CurriculumData {
    pub stage0: Vec<Example>,
    pub stage1: Vec<Example>,
    pub stage2: Vec<Example>,
    pub dev: Vec<Example>,
}

/// Eval-mode class-1 probabilities.
pub fn predict_probs(params: &ModelParams, seqs: &[TokenSeq]) -> Result<Vec<f64>, EncoderError> {
    seqs.iter()
        .map(|s| encoder::logits(params, s).map(|l| predict_proba([l[0] as f64, l[1] as f64])))
        .collect()
}

/// Loss and gradient summed (not averaged) over `batch`. With FGM the
/// adversarial pass's loss and gradients are added to the clean ones.
pub fn batch_gradients(
    params: &ModelParams,
    batch: &[Example],
    loss: &Loss,
    fgm_epsilon: Option<f64>,
    mut dropout: Option<&mut Dropout<'_>>,
    grads: &mut [f32],
) -> Result<f64, EncoderError> {
    let mut total = 0.0;
    for ex in batch {
        let (lg, cache) = encoder::forward_example(params, &ex.seq, dropout.as_deref_mut())?;
        let (l, dl) = loss.value_and_grad(lg, ex.y);
        total += l;
        let demb = encoder::backward_example(params, &cache, dl, grads);
        if let Some(eps) = fgm_epsilon {
            let adv = fgm_perturb(&cache.embeddings, &demb, eps);
            let (lg, adv_cache) = encoder::forward_embedded(params, &cache.ids, adv, dropout.as_deref_mut());
            let (l, dl) = loss.value_and_grad(lg, ex.y);
            total += l;
            encoder::backward_example(params, &adv_cache, dl, grads);
        }
    }
    Ok(total)
}

fn balance_classes(data: &[Example], rng: &mut ChaCha8Rng) -> Vec<Example> {
    let (mut pos, mut neg): (Vec<&Example>, Vec<&Example>) = data.iter().partition(|e| e.y == 1);
    let n = pos.len().min(neg.len());
    pos.shuffle(rng);
    neg.shuffle(rng);
    pos.truncate(n);
    neg.truncate(n);
    let mut out: Vec<Example> = pos.into_iter().chain(neg).cloned().collect();
    out.shuffle(rng);
    out
}

struct StageBest {
    f1: f64,
    params: ModelParams,
    epoch: usize,
}

/// Owns the model, RNG and history across stages.
pub struct Trainer {
    pub params: ModelParams,
    pub plan: CurriculumPlan,
    pub history: TrainHistory,
    rng: ChaCha8Rng,
    best: Option<StageBest>,
}

impl Trainer {
    pub fn new(params: ModelParams, plan: CurriculumPlan) -> Trainer {
        let rng = ChaCha8Rng::seed_from_u64(plan.seed);
        let history = TrainHistory {
            seed: plan.seed,
            ..Default::default()
        };
        Trainer {
            params,
            plan,
            history,
            rng,
            best: None,
        }
    }

    fn loss_for(&self, spec: &StageSpec, data: &[Example]) -> Loss {
        match spec.loss {
            LossKind::Focal => Loss::Focal {
                alpha: self.plan.focal_alpha,
                gamma: self.plan.focal_gamma,
            },
            LossKind::WeightedBce => {
                let [w0, w1] = spec.class_weights.unwrap_or_else(|| {
                    balanced_class_weights(&data.iter().map(|e| e.y).collect::<Vec<_>>())
                });
                Loss::WeightedBce { w0, w1 }
            }
        }
    }

    /// Trains one stage. With `early_stop` false every epoch runs and the
    /// final parameters are kept.
    pub fn run_stage(&mut self, spec: &StageSpec, train: &[Example], dev: &[Example], early_stop: bool) -> Result<(), TrainError> {
        let data = if spec.balance {
            balance_classes(train, &mut self.rng)
        } else {
            train.to_vec()
        };
        if data.is_empty() {
            return Err(TrainError::EmptyStage(spec.name));
        }
        if dev.is_empty() {
            return Err(TrainError::EmptyDev);
        }
        let loss = self.loss_for(spec, &data);
        let frozen = self.params.layout.frozen_mask(spec.freeze_lowest_layers);
        let mut state = OptState::new(self.params.data.len());
        let group = self.plan.batch_size * self.plan.accumulation;
        let steps_per_epoch = data.len().div_ceil(group) as u64;
        let total_steps = steps_per_epoch * spec.epochs as u64;
        let fgm_eps = spec.fgm.then_some(self.plan.fgm_epsilon);
        let dropout_rate = self.params.config.dropout_rate;
        let dev_seqs: Vec<TokenSeq> = dev.iter().map(|e| e.seq.clone()).collect();
        let dev_labels: Vec<u8> = dev.iter().map(|e| e.y).collect();
        let grid = default_grid();

        let mut stage_best: Option<(f64, ModelParams, usize)> = None;
        let mut since_best = 0;
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut grads = vec![0.0f32; self.params.data.len()];
        for stage_epoch in 0..spec.epochs {
            order.shuffle(&mut self.rng);
            let mut epoch_loss = 0.0;
            let mut finite_steps = 0u64;
            let skipped_before = state.skipped;
            for chunk in order.chunks(group) {
                grads.fill(0.0);
                let mut chunk_loss = 0.0;
                for micro in chunk.chunks(self.plan.batch_size) {
                    let batch: Vec<Example> = micro.iter().map(|&i| data[i].clone()).collect();
                    let mut dr = Dropout {
                        rate: dropout_rate,
                        rng: &mut self.rng,
                    };
                    chunk_loss += batch_gradients(&self.params, &batch, &loss, fgm_eps, Some(&mut dr), &mut grads)?;
                }
                let scale = 1.0 / chunk.len() as f32;
                for g in grads.iter_mut() {
                    *g *= scale;
                }
                for (spec, &f) in self.params.layout.specs.iter().zip(&frozen) {
                    if f {
                        grads[spec.range()].fill(0.0);
                    }
                }
                let lr = lr_schedule(state.t + 1, total_steps, self.plan.lr, self.plan.warmup_frac);
                let outcome = adamw_step(&mut self.params, &grads, &mut state, lr, &self.plan.adamw, &frozen);
                let mean_loss = chunk_loss / chunk.len() as f64;
                if outcome == StepOutcome::Applied && mean_loss.is_finite() {
                    epoch_loss += mean_loss * chunk.len() as f64;
                    finite_steps += 1;
                } else if outcome == StepOutcome::SkippedNonFinite {
                    self.history.events.push(format!(
                        "{} epoch {}: skipped step with non-finite gradients",
                        spec.name, stage_epoch
                    ));
                }
            }
            if finite_steps == 0 {
                return Err(TrainError::Diverged {
                    stage: spec.name,
                    history: Box::new(self.history.clone()),
                });
            }
            let probs = predict_probs(&self.params, &dev_seqs)?;
            let dev_tau = calibrate_threshold(&probs, &dev_labels, &grid).map_or(0.5, |c| c.tau);
            let cm = eval::confusion(&probs, &dev_labels, dev_tau).expect("dev non-empty");
            let record = EpochRecord {
                epoch: self.history.epochs.len(),
                stage: spec.name,
                stage_epoch,
                train_loss: epoch_loss / data.len() as f64,
                dev_macro_f1: cm.macro_f1(),
                dev_accuracy: cm.accuracy(),
                dev_tau,
                dev_auroc: eval::auroc(&probs, &dev_labels).ok(),
                steps: state.t,
                skipped_steps: state.skipped - skipped_before,
            };
            let f1 = record.dev_macro_f1;
            let epoch_idx = record.epoch;
            self.history.epochs.push(record);

            if self.best.as_ref().is_none_or(|b| f1 > b.f1) {
                self.best = Some(StageBest {
                    f1,
                    params: self.params.clone(),
                    epoch: epoch_idx,
                });
            }
            if !early_stop {
                continue;
            }
            if stage_best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
                stage_best = Some((f1, self.params.clone(), epoch_idx));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= self.plan.patience {
                    self.history.events.push(format!(
                        "{}: early stop after epoch {} (no improvement for {} epochs)",
                        spec.name, stage_epoch, since_best
                    ));
                    break;
                }
            }
        }
        if let Some((_, params, epoch)) = stage_best {
            if epoch + 1 != self.history.epochs.len() {
                self.history
                    .events
                    .push(format!("{}: reloaded checkpoint from epoch {}", spec.name, epoch));
            }
            self.params = params;
        }
        Ok(())
    }

    /// The best checkpoint seen across all stages and its history index.
    pub fn finish(self) -> (ModelParams, TrainHistory) {
        let mut history = self.history;
        match self.best {
            Some(b) => {
                history.best_epoch = Some(b.epoch);
                (b.params, history)
            }
            None => (self.params, history),
        }
    }
}

/// Runs all three stages and returns the checkpoint with the highest Dev
/// macro-F1 over every epoch, plus the per-epoch history.
pub fn run_curriculum(plan: &CurriculumPlan, data: &CurriculumData, model: ModelParams) -> Result<(ModelParams, TrainHistory), TrainError> {
    model.config.validate()?;
    plan.validate(model.config.n_layers)?;
    let mut trainer = Trainer::new(model, plan.clone());
    for spec in &plan.stages {
        let train = match spec.name {
            Split::Stage0 => &data.stage0,
            Split::Stage1 => &data.stage1,
            _ => &data.stage2,
        };
        trainer.run_stage(spec, train, &data.dev, true)?;
    }
    Ok(trainer.finish())
}
