//! End-to-end run: prepare → train → calibrate → quantize → evaluate.
//!
//! One [`RunConfig`] drives every step. The CLI maps each subcommand onto
//! one of these functions.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, build_splits, CleanRecord, CorpusReport, LabelError, RawPost, Split, SplitConfig, SplitError, SplitManifest};
use crate::deskdata::DeskCorpusSpec;
use crate::encoder::{EncoderError, ModelConfig, ModelParams};
use crate::eval::{self, EvalError, MetricsReport};
use crate::runtime::Engine;
use crate::textnorm::{GateConfig, Normalizer};
use crate::tokenizer::{build_vocab, Vocab, VocabError};
use crate::train::{self, calibrate_threshold, default_grid, CalibrationError, CurriculumData, CurriculumPlan, Example, ThresholdCalibration, TrainError, TrainHistory};

/// Every knob of a run. Unknown keys are rejected so typos surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Raw post files (JSON Lines). Empty means: generate the desk corpus.
    #[serde(default)]
    pub corpora: Vec<PathBuf>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub desk: DeskCorpusSpec,
    #[serde(default)]
    pub gates: GateConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default = "default_vocab_size")]
    pub vocab_size: usize,
    #[serde(default = "ModelConfig::desk")]
    pub model: ModelConfig,
    #[serde(default = "CurriculumPlan::desk")]
    pub plan: CurriculumPlan,
    #[serde(default = "yes")]
    pub quantize: bool,
    /// Fixed decision threshold; `None` calibrates on Dev.
    #[serde(default)]
    pub tau: Option<f64>,
}

fn default_seed() -> u64 {
    42
}
fn default_out() -> PathBuf {
    PathBuf::from("run")
}
fn default_vocab_size() -> usize {
    2000
}
fn yes() -> bool {
    true
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: default_seed(),
            corpora: Vec::new(),
            out_dir: default_out(),
            desk: DeskCorpusSpec::default(),
            gates: GateConfig::default(),
            split: SplitConfig::default(),
            vocab_size: default_vocab_size(),
            model: ModelConfig::desk(),
            plan: CurriculumPlan::desk(),
            quantize: true,
            tau: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Range checks; file existence is checked by the command that reads them.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field: &str, message: String| ConfigError::Invalid {
            field: field.into(),
            message,
        };
        self.model.validate().map_err(|e| {
            let msg = e.to_string();
            let inner = msg.trim_start_matches("invalid model config: ");
            let (f, m) = inner.split_once(": ").unwrap_or(("", inner));
            invalid(&format!("model.{f}"), m.into())
        })?;
        self.plan.validate(self.model.n_layers).map_err(|e| {
            let msg = e.to_string();
            let inner = msg.trim_start_matches("invalid curriculum plan: ");
            let (f, m) = inner.split_once(": ").unwrap_or(("", inner));
            invalid(&format!("plan.{f}"), m.into())
        })?;
        if self.corpora.is_empty() {
            self.desk.validate().map_err(|e| {
                let msg = e.to_string();
                let (f, m) = msg.split_once(": ").unwrap_or(("", &msg));
                invalid(&format!("desk.{f}"), m.into())
            })?;
        }
        if self.vocab_size < 33 {
            return Err(invalid("vocab_size", "must be at least 33".into()));
        }
        if let Some(t) = self.tau {
            if !(0.0..=1.0).contains(&t) {
                return Err(invalid("tau", format!("{t} is outside [0, 1]")));
            }
        }
        let mix = &self.split.stage2_mix;
        if mix.values().any(|w| !w.is_finite() || *w < 0.0) || !mix.values().any(|w| *w > 0.0) {
            return Err(invalid("split.stage2_mix", "weights must be finite, non-negative and not all zero".into()));
        }
        if self.split.stage2_target == Some(0) {
            return Err(invalid("split.stage2_target", "must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gates.min_ascii_ratio) {
            return Err(invalid("gates.min_ascii_ratio", "must be in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

/// Output of the prepare step.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub records: Vec<CleanRecord>,
    pub report: CorpusReport,
    pub manifest: SplitManifest,
    pub vocab: Vocab,
}

impl Prepared {
    pub fn examples(&self, split: Split, max_len: usize) -> Vec<Example> {
        train::examples_from_records(self.manifest.select(split, &self.records), &self.vocab, max_len)
    }

    pub fn curriculum_data(&self, max_len: usize) -> CurriculumData {
        CurriculumData {
            stage0: self.examples(Split::Stage0, max_len),
            stage1: self.examples(Split::Stage1, max_len),
            stage2: self.examples(Split::Stage2, max_len),
            dev: self.examples(Split::Dev, max_len),
        }
    }
}

/// Gates, dedups and splits `posts`, then builds the vocabulary from the
/// three training stages only.
pub fn prepare(posts: &[RawPost], gates: &GateConfig, split: &SplitConfig, vocab_size: usize) -> Result<Prepared, PipelineError> {
    let (records, report) = corpus::prepare_records(posts, Normalizer::bundled(), gates)?;
    let manifest = build_splits(&records, split)?;
    let train_texts: Vec<_> = [Split::Stage0, Split::Stage1, Split::Stage2]
        .into_iter()
        .flat_map(|s| manifest.select(s, &records))
        .map(|r| r.clean_text())
        .collect();
    let vocab = build_vocab(&train_texts, vocab_size)?;
    Ok(Prepared {
        records,
        report,
        manifest,
        vocab,
    })
}

/// Model config with the vocabulary size taken from the built vocabulary.
pub fn model_config_for(base: &ModelConfig, vocab: &Vocab) -> ModelConfig {
    ModelConfig {
        vocab_size: vocab.len(),
        ..base.clone()
    }
}

pub fn train_model(prepared: &Prepared, model: &ModelConfig, plan: &CurriculumPlan, seed: u64) -> Result<(ModelParams, TrainHistory), PipelineError> {
    let cfg = model_config_for(model, &prepared.vocab);
    let data = prepared.curriculum_data(cfg.max_len);
    let init = ModelParams::init(cfg, seed);
    Ok(train::run_curriculum(plan, &data, init)?)
}

fn split_parts(examples: &[Example]) -> (Vec<crate::tokenizer::TokenSeq>, Vec<u8>) {
    examples.iter().map(|e| (e.seq.clone(), e.y)).unzip()
}

/// Threshold with the best Dev macro-F1 over the default grid.
pub fn calibrate(engine: &Engine, dev: &[Example]) -> Result<ThresholdCalibration, PipelineError> {
    let (seqs, labels) = split_parts(dev);
    let probs = engine.predict_many(&seqs)?;
    Ok(calibrate_threshold(&probs, &labels, &default_grid())?)
}

/// Metrics plus the raw probabilities they were computed from.
pub fn evaluate_examples(engine: &Engine, examples: &[Example], tau: f64) -> Result<(MetricsReport, Vec<f64>), PipelineError> {
    let (seqs, labels) = split_parts(examples);
    let probs = engine.predict_many(&seqs)?;
    Ok((eval::evaluate(&probs, &labels, tau)?, probs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_and_names_bad_fields() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);

        let e = RunConfig::from_toml("sed = 1\n").unwrap_err().to_string();
        assert!(e.contains("sed"), "{e}");
        let e = RunConfig::from_toml("[model]\nn_layers = 2\nd_model = 30\nn_heads = 4\nd_ff = 8\nvocab_size = 50\nmax_len = 16\ndropout_rate = 0.1\n")
            .unwrap_err()
            .to_string();
        assert!(e.starts_with("model.d_model"), "{e}");
        let e = RunConfig::from_toml("tau = 1.5\n").unwrap_err().to_string();
        assert!(e.starts_with("tau"), "{e}");
        let e = RunConfig::from_toml("[desk]\nper_cell = 10\n").unwrap_err().to_string();
        assert!(e.starts_with("desk.per_cell"), "{e}");
        let cfg = RunConfig::from_toml("[gates]\nmin_tokens = 5\n").unwrap();
        assert_eq!(cfg.gates.min_tokens, 5);
        assert_eq!(cfg.gates.min_ascii_ratio, 0.9);
    }
}
