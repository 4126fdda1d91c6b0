//! Corpus ingestion: gating, label harmonization, fingerprint dedup and
//! curriculum splits.

mod io;
mod split;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use blake2::digest::consts::U8;
use blake2::{Blake2b, Digest};
use serde::{Deserialize, Serialize};

use crate::textnorm::{self, CleanText, GateConfig, Normalizer};

pub use io::{read_clean_records, read_raw_posts, write_clean_records, write_raw_posts, RecordIoError};
pub use split::{build_splits, Split, SplitConfig, SplitError, SplitManifest, SplitStats};

pub const RELIABLE: u8 = 0;
pub const MISINFO: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "ISOT")]
    Isot,
    #[serde(rename = "LIAR")]
    Liar,
    #[serde(rename = "PHEME")]
    Pheme,
    #[serde(rename = "FNN")]
    Fnn,
    TruthSeeker,
    #[serde(rename = "live")]
    Live,
}

impl Source {
    pub const CORPORA: [Source; 5] = [
        Source::Isot,
        Source::Liar,
        Source::Pheme,
        Source::Fnn,
        Source::TruthSeeker,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Source::Isot => "ISOT",
            Source::Liar => "LIAR",
            Source::Pheme => "PHEME",
            Source::Fnn => "FNN",
            Source::TruthSeeker => "TruthSeeker",
            Source::Live => "live",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Source::Isot, Source::Liar, Source::Pheme, Source::Fnn, Source::TruthSeeker, Source::Live]
            .into_iter()
            .find(|src| src.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown source {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Facebook,
    X,
    News,
    #[default]
    Other,
}

/// A post as it arrives from a corpus file or the live feed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPost {
    pub id: String,
    pub source: Source,
    #[serde(default)]
    pub platform: Platform,
    #[serde(default, rename = "label")]
    pub raw_label: Option<String>,
    pub text: String,
}

/// 8-byte BLAKE2b digest of normalized text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint(pub [u8; 8]);

impl Fingerprint {
    pub fn to_hex(self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Fingerprint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Fingerprint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; 8];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(Fingerprint(out))
    }
}

pub fn fingerprint(text: &CleanText) -> Fingerprint {
    let digest = Blake2b::<U8>::digest(text.text.as_bytes());
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest);
    Fingerprint(out)
}

/// A gated, labeled, fingerprinted example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanRecord {
    pub id: String,
    pub source: Source,
    pub y: u8,
    pub fingerprint: Fingerprint,
    pub text: String,
}

impl CleanRecord {
    pub fn clean_text(&self) -> CleanText {
        CleanText::from_normalized(self.text.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LabelError {
    #[error("source {corpus} has no label mapping for {label:?}")]
    Unknown { corpus: Source, label: String },
    #[error("record {id} from {corpus} carries no label")]
    Missing { id: String, corpus: Source },
}

/// Maps a corpus-native label to the binary scheme. `Ok(None)` means the
/// record is dropped (unverified PHEME threads).
///
/// TruthSeeker labels are crowd scores in `[0, 1]` estimating how likely the
/// item is false; scores at or above 0.5 become misinformation.
pub fn harmonize_label(source: Source, raw_label: &str) -> Result<Option<u8>, LabelError> {
    let label = raw_label.trim().to_ascii_lowercase();
    let unknown = || LabelError::Unknown {
        corpus: source,
        label: raw_label.to_string(),
    };
    let y = match (source, label.as_str()) {
        (Source::Isot, "fake") => Some(MISINFO),
        (Source::Isot, "true") => Some(RELIABLE),
        (Source::Pheme, "false") => Some(MISINFO),
        (Source::Pheme, "true") => Some(RELIABLE),
        (Source::Pheme, "unverified") => None,
        (Source::Liar, "pants-on-fire" | "false" | "barely-true") => Some(MISINFO),
        (Source::Liar, "half-true" | "mostly-true" | "true") => Some(RELIABLE),
        (Source::Fnn, "fake") => Some(MISINFO),
        (Source::Fnn, "real") => Some(RELIABLE),
        (Source::TruthSeeker, score) => {
            let v: f64 = score.parse().map_err(|_| unknown())?;
            if !(0.0..=1.0).contains(&v) {
                return Err(unknown());
            }
            Some(if v >= 0.5 { MISINFO } else { RELIABLE })
        }
        _ => return Err(unknown()),
    };
    Ok(y)
}

/// Why a raw post did not become a [`CleanRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    UnverifiedLabel,
    TooShort,
    NotEnglish,
    Duplicate,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SourceCounts {
    pub input: usize,
    pub retained: usize,
    pub dropped: BTreeMap<DropReason, usize>,
}

/// Per-source accounting across ingestion and dedup.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusReport {
    pub sources: BTreeMap<Source, SourceCounts>,
}

impl CorpusReport {
    fn entry(&mut self, source: Source) -> &mut SourceCounts {
        self.sources.entry(source).or_default()
    }

    fn drop(&mut self, source: Source, reason: DropReason) {
        *self.entry(source).dropped.entry(reason).or_default() += 1;
    }

    pub fn total_retained(&self) -> usize {
        self.sources.values().map(|c| c.retained).sum()
    }
}

/// Normalizes, gates and labels raw posts. Unknown labels are an error; the
/// other rejections are counted in the report.
pub fn ingest(
    posts: &[RawPost],
    normalizer: &Normalizer,
    gates: &GateConfig,
) -> Result<(Vec<CleanRecord>, CorpusReport), LabelError> {
    let mut report = CorpusReport::default();
    let mut out = Vec::with_capacity(posts.len());
    for post in posts {
        report.entry(post.source).input += 1;
        let raw = post.raw_label.as_deref().ok_or_else(|| LabelError::Missing {
            id: post.id.clone(),
            corpus: post.source,
        })?;
        let Some(y) = harmonize_label(post.source, raw)? else {
            report.drop(post.source, DropReason::UnverifiedLabel);
            continue;
        };
        let clean = normalizer.normalize(&post.text);
        if !textnorm::length_gate(&clean, gates.min_tokens) {
            report.drop(post.source, DropReason::TooShort);
            continue;
        }
        if !textnorm::english_gate(&clean, gates) {
            report.drop(post.source, DropReason::NotEnglish);
            continue;
        }
        out.push(CleanRecord {
            id: post.id.clone(),
            source: post.source,
            y,
            fingerprint: fingerprint(&clean),
            text: clean.text,
        });
    }
    for rec in &out {
        report.entry(rec.source).retained += 1;
    }
    Ok((out, report))
}

/// Keeps the first record for each fingerprint, preserving order.
pub fn dedup(records: Vec<CleanRecord>) -> (Vec<CleanRecord>, CorpusReport) {
    let mut seen = HashSet::with_capacity(records.len());
    let mut report = CorpusReport::default();
    let mut kept = Vec::with_capacity(records.len());
    for rec in records {
        report.entry(rec.source).input += 1;
        if seen.insert(rec.fingerprint) {
            report.entry(rec.source).retained += 1;
            kept.push(rec);
        } else {
            report.drop(rec.source, DropReason::Duplicate);
        }
    }
    (kept, report)
}

/// Full corpus pipeline: ingest followed by dedup, with a merged report.
pub fn prepare_records(
    posts: &[RawPost],
    normalizer: &Normalizer,
    gates: &GateConfig,
) -> Result<(Vec<CleanRecord>, CorpusReport), LabelError> {
    let (records, mut report) = ingest(posts, normalizer, gates)?;
    let (kept, dedup_report) = dedup(records);
    for (src, counts) in dedup_report.sources {
        let entry = report.entry(src);
        entry.retained = counts.retained;
        for (reason, n) in counts.dropped {
            *entry.dropped.entry(reason).or_default() += n;
        }
    }
    Ok((kept, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textnorm::normalize;
    use proptest::prelude::*;

    fn rec(id: &str, source: Source, y: u8, text: &str) -> CleanRecord {
        let clean = normalize(text);
        CleanRecord {
            id: id.into(),
            source,
            y,
            fingerprint: fingerprint(&clean),
            text: clean.text,
        }
    }

    #[test]
    fn fingerprint_matches_reference_vectors() {
        // reference digests from Python's hashlib.blake2b(digest_size=8)
        let cases = [
            ("abc", "d8bb14d833d59559"),
            ("", "e4a6a0577479b2b4"),
            ("tom & jerry", "611a55559c9360b1"),
            ("the cat sat on the mat", "c0097c5c1359a318"),
        ];
        for (text, want) in cases {
            assert_eq!(fingerprint(&CleanText::from_normalized(text)).to_hex(), want);
        }
    }

    #[test]
    fn fingerprint_is_sensitive() {
        let a = fingerprint(&CleanText::from_normalized("the cat sat"));
        let b = fingerprint(&CleanText::from_normalized("the cat sad"));
        assert_ne!(a, b);
        assert_eq!(a, fingerprint(&CleanText::from_normalized("the cat sat")));
    }

    #[test]
    fn label_mappings() {
        assert_eq!(harmonize_label(Source::Pheme, "unverified"), Ok(None));
        assert_eq!(harmonize_label(Source::Isot, "fake"), Ok(Some(1)));
        assert_eq!(harmonize_label(Source::Isot, "true"), Ok(Some(0)));
        assert_eq!(harmonize_label(Source::Liar, "half-true"), Ok(Some(0)));
        assert_eq!(harmonize_label(Source::Liar, "pants-on-fire"), Ok(Some(1)));
        assert_eq!(harmonize_label(Source::Liar, "barely-true"), Ok(Some(1)));
        assert_eq!(harmonize_label(Source::Fnn, "real"), Ok(Some(0)));
        assert_eq!(harmonize_label(Source::TruthSeeker, "0.5"), Ok(Some(1)));
        assert_eq!(harmonize_label(Source::TruthSeeker, "0.49"), Ok(Some(0)));
        let err = harmonize_label(Source::Fnn, "satire").unwrap_err();
        assert_eq!(err.to_string(), "source FNN has no label mapping for \"satire\"");
        assert!(harmonize_label(Source::TruthSeeker, "1.5").is_err());
        assert!(harmonize_label(Source::Live, "fake").is_err());
    }

    #[test]
    fn dedup_keeps_first() {
        let a = rec("a", Source::Fnn, 1, "Same text here");
        let a2 = rec("a2", Source::Pheme, 1, "same   TEXT here");
        let b = rec("b", Source::Fnn, 0, "other text");
        let (kept, report) = dedup(vec![a.clone(), a2, b.clone()]);
        assert_eq!(kept, vec![a, b]);
        assert_eq!(report.sources[&Source::Pheme].dropped[&DropReason::Duplicate], 1);
        assert_eq!(report.total_retained(), 2);
    }

    #[test]
    fn ingest_gates_and_drops() {
        let post = |id: &str, source, label: &str, text: &str| RawPost {
            id: id.into(),
            source,
            platform: Platform::News,
            raw_label: Some(label.into()),
            text: text.into(),
        };
        let posts = vec![
            post("1", Source::Pheme, "unverified", "the storm is over and they are all safe now at home"),
            post("2", Source::Pheme, "false", "too short to keep"),
            post("3", Source::Pheme, "true", "это полностью русский текст без латиницы и он длинный очень очень"),
            post("4", Source::Pheme, "true", "the storm is over and they are all safe now at home"),
        ];
        let (recs, report) = ingest(&posts, Normalizer::bundled(), &GateConfig::default()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].id, "4");
        let c = &report.sources[&Source::Pheme];
        assert_eq!(c.input, 4);
        assert_eq!(c.retained, 1);
        assert_eq!(c.dropped.len(), 3);

        let bad = vec![post("5", Source::Liar, "sorta-true", "x")];
        assert!(matches!(
            ingest(&bad, Normalizer::bundled(), &GateConfig::default()),
            Err(LabelError::Unknown { corpus: Source::Liar, .. })
        ));
    }

    proptest! {
        #[test]
        fn dedup_matches_first_occurrence_oracle(picks in proptest::collection::vec(0usize..12, 0..80)) {
            let pool: Vec<String> = (0..12).map(|i| format!("text number {}", i % 9)).collect();
            let records: Vec<CleanRecord> = picks
                .iter()
                .enumerate()
                .map(|(i, &p)| rec(&i.to_string(), Source::Fnn, (p % 2) as u8, &pool[p]))
                .collect();

            let mut oracle = Vec::new();
            for (i, r) in records.iter().enumerate() {
                if !records[..i].iter().any(|q| q.text == r.text) {
                    oracle.push(r.clone());
                }
            }
            let (kept, _) = dedup(records);
            prop_assert_eq!(&kept, &oracle);
            let (again, _) = dedup(kept.clone());
            prop_assert_eq!(again, kept);
        }
    }
}
