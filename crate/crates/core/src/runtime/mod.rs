//! Streaming post classifier: gates, session-level duplicate suppression,
//! thresholded verdicts and latency accounting.

use std::collections::HashSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{fingerprint, Fingerprint, Platform};
use crate::encoder::{self, predict_proba, EncoderError, ModelParams};
use crate::quant::{qlogits, QuantModel};
use crate::textnorm::{english_gate, length_gate, GateConfig, Normalizer};
use crate::tokenizer::{encode, TokenSeq, Vocab, DEFAULT_MAX_LEN};

mod bundle;

pub use bundle::{export_bundle, load_bundle, sha256_hex, BundleError, BundleManifest, BUNDLE_MANIFEST};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("latency sample is empty")]
    EmptySample,
    #[error("bench needs more than {warmup} posts, got {got}")]
    TooFewPosts { warmup: usize, got: usize },
    #[error("vocabulary has {vocab} entries but the model expects {model}")]
    VocabMismatch { vocab: usize, model: usize },
    #[error("threshold {0} is outside [0, 1]")]
    Threshold(f64),
}

/// Float or INT8 weights behind one prediction interface.
#[derive(Debug, Clone)]
pub enum Engine {
    Float(ModelParams),
    Quant(QuantModel),
}

impl Engine {
    pub fn config(&self) -> &encoder::ModelConfig {
        match self {
            Engine::Float(p) => &p.config,
            Engine::Quant(q) => &q.config,
        }
    }

    pub fn logits(&self, seq: &TokenSeq) -> Result<encoder::Logits, EncoderError> {
        match self {
            Engine::Float(p) => encoder::logits(p, seq),
            Engine::Quant(q) => qlogits(q, seq),
        }
    }

    pub fn predict(&self, seq: &TokenSeq) -> Result<f64, EncoderError> {
        let l = self.logits(seq)?;
        Ok(predict_proba([l[0] as f64, l[1] as f64]))
    }

    pub fn predict_many(&self, seqs: &[TokenSeq]) -> Result<Vec<f64>, EncoderError> {
        seqs.iter().map(|s| self.predict(s)).collect()
    }
}

/// Everything needed to turn raw text into a probability. Immutable and
/// shareable across sessions.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub engine: Engine,
    pub vocab: Vocab,
    pub gates: GateConfig,
    pub normalizer: &'static Normalizer,
}

impl Classifier {
    pub fn new(engine: Engine, vocab: Vocab, gates: GateConfig) -> Result<Classifier, RuntimeError> {
        let model = engine.config().vocab_size;
        if vocab.len() != model {
            return Err(RuntimeError::VocabMismatch { vocab: vocab.len(), model });
        }
        Ok(Classifier {
            engine,
            vocab,
            gates,
            normalizer: Normalizer::bundled(),
        })
    }

    /// Sequence length used at inference: the feed cap, bounded by the
    /// model's position table.
    pub fn max_len(&self) -> usize {
        DEFAULT_MAX_LEN.min(self.engine.config().max_len)
    }

    pub fn tokenize(&self, text: &str) -> TokenSeq {
        encode(&self.vocab, &self.normalizer.normalize(text), self.max_len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedPost {
    pub post_id: String,
    #[serde(default)]
    pub platform: Platform,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Flagged,
    Clean,
    SkippedLanguage,
    SkippedShort,
    SuppressedDuplicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub post_id: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p1: Option<f64>,
    pub latency_ms: f64,
}

/// Per-feed session: fingerprints of posts already scored, the decision
/// threshold and the latency log. In memory only.
#[derive(Debug, Clone)]
pub struct SessionState {
    seen: HashSet<Fingerprint>,
    tau: f64,
    latencies_ms: Vec<f64>,
}

impl SessionState {
    pub fn new(tau: f64) -> Result<SessionState, RuntimeError> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(RuntimeError::Threshold(tau));
        }
        Ok(SessionState {
            seen: HashSet::new(),
            tau,
            latencies_ms: Vec::new(),
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn seen_count(&self) -> usize {
        self.seen.len()
    }

    pub fn latencies_ms(&self) -> &[f64] {
        &self.latencies_ms
    }
}

/// Runs one post through normalize → length gate → language gate →
/// duplicate check → model. Only scored posts enter the seen set.
pub fn classify_post(state: &mut SessionState, model: &Classifier, post: &FeedPost) -> Result<Verdict, RuntimeError> {
    let start = Instant::now();
    let clean = model.normalizer.normalize(&post.text);
    let (status, p1) = if !length_gate(&clean, model.gates.min_tokens) {
        (Status::SkippedShort, None)
    } else if !english_gate(&clean, &model.gates) {
        (Status::SkippedLanguage, None)
    } else {
        let fp = fingerprint(&clean);
        if state.seen.contains(&fp) {
            (Status::SuppressedDuplicate, None)
        } else {
            let seq = encode(&model.vocab, &clean, model.max_len());
            let p = model.engine.predict(&seq)?;
            state.seen.insert(fp);
            let status = if p >= state.tau { Status::Flagged } else { Status::Clean };
            (status, Some(p))
        }
    };
    let latency_ms = start.elapsed().as_secs_f64() * 1e3;
    state.latencies_ms.push(latency_ms);
    Ok(Verdict {
        post_id: post.post_id.clone(),
        status,
        p1,
        latency_ms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub median: f64,
    pub p90: f64,
    pub p99: f64,
    pub mean: f64,
}

/// Nearest rank: the value at 1-based position ⌈pct·n/100⌉ of the sorted sample.
fn nearest_rank(sorted: &[f64], pct: usize) -> f64 {
    let rank = (pct * sorted.len()).div_ceil(100).max(1);
    sorted[rank - 1]
}

pub fn latency_stats(samples_ms: &[f64]) -> Result<LatencyStats, RuntimeError> {
    if samples_ms.is_empty() {
        return Err(RuntimeError::EmptySample);
    }
    let mut s = samples_ms.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(LatencyStats {
        count: s.len(),
        median: nearest_rank(&s, 50),
        p90: nearest_rank(&s, 90),
        p99: nearest_rank(&s, 99),
        mean: s.iter().sum::<f64>() / s.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub stats: LatencyStats,
    pub warmup: usize,
    /// Peak resident set size in KiB, where the platform exposes it.
    pub peak_rss_kib: Option<u64>,
    pub statuses: Vec<(Status, usize)>,
    #[serde(skip)]
    pub samples_ms: Vec<f64>,
}

/// Peak resident memory of this process (`VmHWM` on Linux).
pub fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

/// Classifies `posts` in a fresh session and reports latency over all but
/// the first `warmup` posts.
pub fn bench(model: &Classifier, posts: &[FeedPost], tau: f64, warmup: usize) -> Result<BenchReport, RuntimeError> {
    if posts.len() <= warmup {
        return Err(RuntimeError::TooFewPosts {
            warmup,
            got: posts.len(),
        });
    }
    let mut session = SessionState::new(tau)?;
    let mut counts: Vec<(Status, usize)> = Vec::new();
    for post in posts {
        let v = classify_post(&mut session, model, post)?;
        match counts.iter_mut().find(|(s, _)| *s == v.status) {
            Some((_, n)) => *n += 1,
            None => counts.push((v.status, 1)),
        }
    }
    let samples_ms = session.latencies_ms[warmup..].to_vec();
    Ok(BenchReport {
        stats: latency_stats(&samples_ms)?,
        warmup,
        peak_rss_kib: peak_rss_kib(),
        statuses: counts,
        samples_ms,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::encoder::ModelConfig;
    use crate::tokenizer::build_vocab;

    #[test]
    fn nearest_rank_hand_values() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        let st = latency_stats(&s).unwrap();
        assert_eq!((st.median, st.p90, st.p99), (50.0, 90.0, 99.0));
        assert_eq!(st.mean, 50.5);
        let one = latency_stats(&[7.5]).unwrap();
        assert_eq!((one.median, one.p90, one.p99), (7.5, 7.5, 7.5));
        assert!(matches!(latency_stats(&[]), Err(RuntimeError::EmptySample)));
        // n = 3: ranks ⌈1.5⌉ = 2, ⌈2.7⌉ = 3, ⌈2.97⌉ = 3
        let st = latency_stats(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!((st.median, st.p90, st.p99), (2.0, 3.0, 3.0));
    }

    proptest! {
        #[test]
        fn stats_ignore_order(mut v in prop::collection::vec(0.0f64..1e3, 1..300), seed: u64) {
            let a = latency_stats(&v).unwrap();
            v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let b = latency_stats(&v).unwrap();
            prop_assert_eq!(a.median, b.median);
            prop_assert_eq!(a.p90, b.p90);
            prop_assert_eq!(a.p99, b.p99);
            prop_assert!(a.median <= a.p90 && a.p90 <= a.p99);
        }
    }

    const ENGLISH: &str = "the mayor said on monday that the new bridge will open to traffic next spring";

    fn classifier() -> Classifier {
        let texts = [ENGLISH, "breaking shocking secret cure they do not want you to know about"];
        let cleaned: Vec<_> = texts.iter().map(|t| crate::textnorm::normalize(t)).collect();
        let vocab = build_vocab(&cleaned, 120).unwrap();
        let mut cfg = ModelConfig::tiny();
        cfg.vocab_size = vocab.len();
        Classifier::new(Engine::Float(ModelParams::init(cfg, 1)), vocab, GateConfig::default()).unwrap()
    }

    fn post(id: &str, text: &str) -> FeedPost {
        FeedPost {
            post_id: id.into(),
            platform: Platform::X,
            text: text.into(),
        }
    }

    #[test]
    fn gate_order_and_duplicate_suppression() {
        let m = classifier();
        let mut s = SessionState::new(0.5).unwrap();
        let v = classify_post(&mut s, &m, &post("a", "too short to score")).unwrap();
        assert_eq!((v.status, v.p1), (Status::SkippedShort, None));
        let v = classify_post(&mut s, &m, &post("b", "это полностью русский текст без латиницы и он очень длинный да")).unwrap();
        assert_eq!(v.status, Status::SkippedLanguage);
        assert_eq!(s.seen_count(), 0);

        let first = classify_post(&mut s, &m, &post("c", ENGLISH)).unwrap();
        let p = first.p1.unwrap();
        assert_eq!(first.status == Status::Flagged, p >= 0.5);
        // same normalized text under another id and casing
        let again = classify_post(&mut s, &m, &post("d", &ENGLISH.to_uppercase())).unwrap();
        assert_eq!((again.status, again.p1), (Status::SuppressedDuplicate, None));
        assert_eq!(s.seen_count(), 1);
        assert_eq!(s.latencies_ms().len(), 4);
    }

    #[test]
    fn threshold_boundary_flags() {
        let m = classifier();
        let p = m.engine.predict(&m.tokenize(ENGLISH)).unwrap();
        let mut s = SessionState::new(p).unwrap();
        assert_eq!(classify_post(&mut s, &m, &post("x", ENGLISH)).unwrap().status, Status::Flagged);
        let mut s = SessionState::new((p + 1e-9).min(1.0)).unwrap();
        assert_eq!(classify_post(&mut s, &m, &post("x", ENGLISH)).unwrap().status, Status::Clean);
        assert!(SessionState::new(1.5).is_err());
    }

    #[test]
    fn bench_drops_warmup() {
        let m = classifier();
        let posts: Vec<FeedPost> = (0..15).map(|i| post(&i.to_string(), &format!("{ENGLISH} {i}"))).collect();
        let r = bench(&m, &posts, 0.5, 10).unwrap();
        assert_eq!(r.stats.count, 5);
        assert_eq!(r.samples_ms.len(), 5);
        assert_eq!(latency_stats(&r.samples_ms).unwrap(), r.stats);
        assert!(matches!(bench(&m, &posts[..10], 0.5, 10), Err(RuntimeError::TooFewPosts { .. })));
    }

    #[test]
    fn vocab_size_must_match_model() {
        let m = classifier();
        let mut cfg = ModelConfig::tiny();
        cfg.vocab_size = m.vocab.len() + 1;
        let r = Classifier::new(Engine::Float(ModelParams::init(cfg, 1)), m.vocab.clone(), GateConfig::default());
        assert!(matches!(r, Err(RuntimeError::VocabMismatch { .. })));
    }
}
