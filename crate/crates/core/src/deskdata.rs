//! Seeded synthetic corpus with lexical class signals.
//!
//! Every post is a run of neutral news-style clauses with a few class
//! signal phrases mixed in. With probability `noise_rate` a signal phrase is
//! taken from the opposite class. Exact duplicates and non-English lines
//! are injected on top of the clean base set so gating and dedup have
//! known ground truth.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{fingerprint, Platform, RawPost, Source, MISINFO, RELIABLE};
use crate::textnorm::normalize;

const RELIABLE_PHRASES: &[&str] = &[
    "according to official records",
    "the agency confirmed in a statement",
    "data released by the ministry",
    "researchers published peer reviewed findings",
    "a spokesperson told reporters",
    "figures from the census bureau",
    "the court filing shows",
    "independent auditors verified",
    "the report cites public budget documents",
    "officials said at a press briefing",
    "the study was reviewed by experts",
    "records obtained through a public request",
];

const MISINFO_PHRASES: &[&str] = &[
    "shocking truth they hide",
    "share this before it gets deleted",
    "doctors hate this miracle cure",
    "the mainstream media will never tell you",
    "wake up people",
    "secret plan exposed by insiders",
    "you will not believe what happened",
    "banned video reveals everything",
    "the elites are lying to you",
    "this is what they do not want you to know",
    "100 percent proof of the cover up",
    "forward to everyone you know",
];

const CLAUSES: &[&str] = &[
    "the city council met on tuesday to discuss the new transit plan",
    "local schools will open later this year after repairs",
    "a storm moved across the region over the weekend",
    "the price of fuel rose again in several states",
    "voters in the district will head to the polls next month",
    "the hospital added more beds to its emergency ward",
    "farmers expect a smaller harvest because of the dry spring",
    "the bridge on the main road was closed for inspection",
    "a new vaccine program is planned for the autumn",
    "the team won its third game in a row",
    "workers at the plant asked for higher wages",
    "the senator spoke about the budget in a long speech",
    "residents were asked to save water during the heat wave",
    "the museum will host an exhibit about early aviation",
    "a large fire burned through the hills near the town",
    "the central bank kept interest rates unchanged",
    "the airport announced more flights for the holiday season",
    "police are looking for witnesses to the accident",
    "the new law takes effect at the start of the year",
    "a group of students built a robot for the contest",
    "the river rose after days of heavy rain",
    "the company said it would hire more staff",
    "the mayor visited the flooded neighborhood",
    "the election results will be certified next week",
];

const CONNECTIVES: &[&str] = &["and", "but", "while", "as", "so", "because", "after", "and then"];

const NON_ENGLISH_WORDS: &[&str] = &[
    "сегодня", "в", "городе", "прошла", "встреча", "жителей", "новый", "мост", "будет", "открыт",
    "весной", "погода", "снова", "изменилась", "власти", "заявили", "что", "школы", "работают", "обычно",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeskCorpusSpec {
    pub seed: u64,
    /// Clean English posts per (source, label) cell.
    pub per_cell: usize,
    pub sources: Vec<Source>,
    /// Chance that a signal phrase comes from the opposite class.
    pub noise_rate: f64,
    /// Extra exact copies of base posts, as a fraction of `per_cell`.
    pub duplicate_rate: f64,
    /// Extra non-English lines, as a fraction of `per_cell`.
    pub non_english_rate: f64,
    pub reliable_phrases: Vec<String>,
    pub misinfo_phrases: Vec<String>,
}

impl Default for DeskCorpusSpec {
    fn default() -> Self {
        DeskCorpusSpec {
            seed: 42,
            per_cell: 240,
            sources: Source::CORPORA.to_vec(),
            noise_rate: 0.05,
            duplicate_rate: 0.1,
            non_english_rate: 0.05,
            reliable_phrases: RELIABLE_PHRASES.iter().map(|s| s.to_string()).collect(),
            misinfo_phrases: MISINFO_PHRASES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DeskSpecError {
    #[error("sources: need at least 3 distinct corpora, got {0}")]
    TooFewSources(usize),
    #[error("per_cell: corpus would hold {0} clean posts, need at least 600")]
    TooSmall(usize),
    #[error("{0}: must be in [0, 1]")]
    Rate(&'static str),
    #[error("{0}: needs at least one phrase")]
    NoPhrases(&'static str),
    #[error("could not draw {0} distinct texts; add clauses or lower per_cell")]
    Exhausted(usize),
}

impl DeskCorpusSpec {
    pub fn validate(&self) -> Result<(), DeskSpecError> {
        let distinct: HashSet<Source> = self.sources.iter().copied().filter(|s| *s != Source::Live).collect();
        if distinct.len() < 3 || distinct.len() != self.sources.len() {
            return Err(DeskSpecError::TooFewSources(distinct.len()));
        }
        let total = self.per_cell * 2 * self.sources.len();
        if total < 600 {
            return Err(DeskSpecError::TooSmall(total));
        }
        for (name, v) in [
            ("noise_rate", self.noise_rate),
            ("duplicate_rate", self.duplicate_rate),
            ("non_english_rate", self.non_english_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(DeskSpecError::Rate(name));
            }
        }
        if self.reliable_phrases.is_empty() {
            return Err(DeskSpecError::NoPhrases("reliable_phrases"));
        }
        if self.misinfo_phrases.is_empty() {
            return Err(DeskSpecError::NoPhrases("misinfo_phrases"));
        }
        Ok(())
    }
}

/// Generated posts plus the ids of everything injected on purpose.
#[derive(Debug, Clone, PartialEq)]
pub struct DeskCorpus {
    pub posts: Vec<RawPost>,
    pub duplicate_ids: Vec<String>,
    pub non_english_ids: Vec<String>,
}

/// Corpus-native label string for a binary class.
fn raw_label(source: Source, y: u8, rng: &mut ChaCha8Rng) -> String {
    let mis = y == MISINFO;
    match source {
        Source::Isot => if mis { "fake" } else { "true" }.into(),
        Source::Fnn => if mis { "fake" } else { "real" }.into(),
        Source::Pheme => if mis { "false" } else { "true" }.into(),
        Source::Liar => {
            let pool: &[&str] = if mis {
                &["pants-on-fire", "false", "barely-true"]
            } else {
                &["half-true", "mostly-true", "true"]
            };
            pool.choose(rng).unwrap().to_string()
        }
        Source::TruthSeeker => {
            let score: f64 = if mis {
                rng.random_range(0.5..=1.0)
            } else {
                rng.random_range(0.0..0.49)
            };
            format!("{score:.2}")
        }
        Source::Live => String::new(),
    }
}

fn platform(source: Source) -> Platform {
    match source {
        Source::Pheme | Source::TruthSeeker => Platform::X,
        _ => Platform::News,
    }
}

fn post_text(spec: &DeskCorpusSpec, y: u8, rng: &mut ChaCha8Rng) -> String {
    loop {
        let text = draft_text(spec, y, rng);
        if (10..=60).contains(&text.split_whitespace().count()) {
            return text;
        }
    }
}

fn draft_text(spec: &DeskCorpusSpec, y: u8, rng: &mut ChaCha8Rng) -> String {
    let target = rng.random_range(12..=48usize);
    let n_signals = rng.random_range(2..=3usize);
    let mut parts: Vec<String> = Vec::new();
    for _ in 0..n_signals {
        let flip = rng.random_bool(spec.noise_rate);
        let own_mis = (y == MISINFO) != flip;
        let pool = if own_mis { &spec.misinfo_phrases } else { &spec.reliable_phrases };
        parts.push(pool.choose(rng).unwrap().clone());
    }
    let mut words = parts.iter().map(|p| p.split_whitespace().count()).sum::<usize>();
    while words < target {
        let c = *CLAUSES.choose(rng).unwrap();
        words += c.split_whitespace().count();
        parts.push(c.to_string());
    }
    parts.shuffle(rng);
    let mut text = String::new();
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            if rng.random_bool(0.5) {
                text.push_str(". ");
            } else {
                text.push(' ');
                text.push_str(CONNECTIVES.choose(rng).unwrap());
                text.push(' ');
            }
        }
        text.push_str(p);
    }
    text.push('.');
    // sentence case on the first letter, as feeds mostly show
    let mut chars = text.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => text,
    }
}

fn non_english_text(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(10..=20usize);
    (0..n).map(|_| *NON_ENGLISH_WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

pub fn generate(spec: &DeskCorpusSpec) -> Result<DeskCorpus, DeskSpecError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut seen = HashSet::new();
    let mut posts = Vec::new();
    let mut duplicate_ids = Vec::new();
    let mut non_english_ids = Vec::new();
    let n_dup = (spec.duplicate_rate * spec.per_cell as f64).round() as usize;
    let n_foreign = (spec.non_english_rate * spec.per_cell as f64).round() as usize;

    for &source in &spec.sources {
        for y in [RELIABLE, MISINFO] {
            let tag = format!("{}-{}", source.name().to_lowercase(), if y == MISINFO { "mis" } else { "rel" });
            let mut cell = Vec::with_capacity(spec.per_cell);
            let mut attempts = 0;
            while cell.len() < spec.per_cell {
                attempts += 1;
                if attempts > spec.per_cell * 50 {
                    return Err(DeskSpecError::Exhausted(spec.per_cell));
                }
                let text = post_text(spec, y, &mut rng);
                if !seen.insert(fingerprint(&normalize(&text))) {
                    continue;
                }
                cell.push(RawPost {
                    id: format!("{tag}-{:04}", cell.len()),
                    source,
                    platform: platform(source),
                    raw_label: Some(raw_label(source, y, &mut rng)),
                    text,
                });
            }
            for i in 0..n_dup {
                let orig = cell.choose(&mut rng).unwrap();
                let id = format!("{tag}-dup-{i:03}");
                duplicate_ids.push(id.clone());
                posts.push(RawPost { id, ..orig.clone() });
            }
            for i in 0..n_foreign {
                let id = format!("{tag}-xx-{i:03}");
                non_english_ids.push(id.clone());
                posts.push(RawPost {
                    id,
                    source,
                    platform: platform(source),
                    raw_label: Some(raw_label(source, y, &mut rng)),
                    text: non_english_text(&mut rng),
                });
            }
            posts.extend(cell);
        }
    }
    // originals must precede their copies so first-occurrence dedup keeps them
    let (mut base, mut dups): (Vec<RawPost>, Vec<RawPost>) = posts.into_iter().partition(|p| !p.id.contains("-dup-"));
    base.shuffle(&mut rng);
    dups.shuffle(&mut rng);
    base.extend(dups);
    Ok(DeskCorpus {
        posts: base,
        duplicate_ids,
        non_english_ids,
    })
}

/// Net signal of a text: misinformation phrases minus reliable phrases.
pub fn keyword_score(spec: &DeskCorpusSpec, text: &str) -> i64 {
    let t = normalize(text).text;
    let count = |pool: &[String]| pool.iter().map(|p| t.matches(normalize(p).text.as_str()).count() as i64).sum::<i64>();
    count(&spec.misinfo_phrases) - count(&spec.reliable_phrases)
}
