//! Text normalization and gating.
//!
//! The same [`Normalizer`] runs when building training splits and when
//! classifying live posts, so both paths see identical text. The steps run in
//! a fixed order:
//!
//! 1. HTML entity unescape (repeated until the text stops changing)
//! 2. Unicode NFKC
//! 3. contraction expansion from the bundled table
//! 4. lower-casing (placeholder tokens are left alone)
//! 5. URLs, `@mentions` and `#hashtags` become `[URL]`, `[USER]`, `[HASHTAG]`
//! 6. emoji become `:alias:` (unknown emoji become `:emoji:`)
//! 7. whitespace runs collapse to one space, ends trimmed

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

pub const URL_TOKEN: &str = "[URL]";
pub const USER_TOKEN: &str = "[USER]";
pub const HASHTAG_TOKEN: &str = "[HASHTAG]";
pub const PLACEHOLDERS: [&str; 3] = [URL_TOKEN, USER_TOKEN, HASHTAG_TOKEN];

const UNKNOWN_EMOJI: &str = ":emoji:";

const CONTRACTIONS_TSV: &str = include_str!("../resources/contractions.tsv");
const EMOJI_TSV: &str = include_str!("../resources/emoji_aliases.tsv");
const STOPWORDS_TXT: &str = include_str!("../resources/stopwords.txt");

// Entities nested deeper than this are left partially escaped.
const MAX_UNESCAPE_ROUNDS: usize = 8;

/// Normalized text plus its whitespace token count.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CleanText {
    pub text: String,
    pub ws_token_count: usize,
}

impl CleanText {
    /// Wraps text that is already normalized (e.g. read back from a split file).
    pub fn from_normalized(text: impl Into<String>) -> Self {
        let text = text.into();
        let ws_token_count = text.split_whitespace().count();
        CleanText { text, ws_token_count }
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("line {line}: expected `term<TAB>replacement`, got {content:?}")]
    Malformed { line: usize, content: String },
    #[error("emoji table line {line}: key {key:?} is not a single codepoint")]
    NotACodepoint { line: usize, key: String },
}

/// Parses a `term<TAB>replacement` table. Blank lines and `#` comments are skipped.
pub fn parse_tab_table(src: &str) -> Result<Vec<(String, String)>, TableError> {
    let mut out = Vec::new();
    for (i, line) in src.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split_once('\t') {
            Some((k, v)) if !k.is_empty() && !v.is_empty() => {
                out.push((k.to_string(), v.to_string()))
            }
            _ => {
                return Err(TableError::Malformed {
                    line: i + 1,
                    content: line.to_string(),
                })
            }
        }
    }
    Ok(out)
}

#[derive(Debug)]
pub struct Normalizer {
    contractions: HashMap<String, String>,
    emoji: HashMap<char, String>,
    word_re: Regex,
    placeholder_re: Regex,
    url_re: Regex,
    mention_re: Regex,
    hashtag_re: Regex,
}

impl Normalizer {
    pub fn from_tables(contractions_tsv: &str, emoji_tsv: &str) -> Result<Self, TableError> {
        let contractions = parse_tab_table(contractions_tsv)?
            .into_iter()
            .map(|(k, v)| (k.to_lowercase(), v))
            .collect();
        let mut emoji = HashMap::new();
        for (i, (k, v)) in parse_tab_table(emoji_tsv)?.into_iter().enumerate() {
            let mut chars = k.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => {
                    emoji.insert(c, v);
                }
                _ => return Err(TableError::NotACodepoint { line: i + 1, key: k }),
            }
        }
        Ok(Normalizer {
            contractions,
            emoji,
            word_re: Regex::new(r"[\p{L}'’]+").unwrap(),
            placeholder_re: Regex::new(r"\[(?:URL|USER|HASHTAG)\]").unwrap(),
            url_re: Regex::new(r"(?i)(?:https?://|www\.)\S+").unwrap(),
            mention_re: Regex::new(r"\B@\w+").unwrap(),
            hashtag_re: Regex::new(r"\B#\w+").unwrap(),
        })
    }

    /// The normalizer built from the tables compiled into the crate.
    pub fn bundled() -> &'static Normalizer {
        static INSTANCE: OnceLock<Normalizer> = OnceLock::new();
        INSTANCE.get_or_init(|| {
            Normalizer::from_tables(CONTRACTIONS_TSV, EMOJI_TSV)
                .expect("bundled normalization tables are well-formed")
        })
    }

    pub fn contraction_count(&self) -> usize {
        self.contractions.len()
    }

    pub fn normalize(&self, input: &str) -> CleanText {
        let unescaped = unescape_fully(input);
        let nfkc: String = unescaped.nfkc().collect();
        let expanded = self.expand_contractions(&nfkc);
        let lowered = self.lowercase_outside_placeholders(&expanded);
        let masked = self.mask_entities(&lowered);
        let aliased = self.alias_emoji(&masked);
        CleanText::from_normalized(aliased.split_whitespace().collect::<Vec<_>>().join(" "))
    }

    fn expand_contractions(&self, text: &str) -> String {
        self.word_re
            .replace_all(text, |caps: &regex::Captures<'_>| {
                let word = &caps[0];
                let key = word.replace('’', "'").to_lowercase();
                match self.contractions.get(&key) {
                    Some(rep) => rep.clone(),
                    None => word.to_string(),
                }
            })
            .into_owned()
    }

    fn lowercase_outside_placeholders(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        let mut last = 0;
        for m in self.placeholder_re.find_iter(text) {
            out.push_str(&text[last..m.start()].to_lowercase());
            out.push_str(m.as_str());
            last = m.end();
        }
        out.push_str(&text[last..].to_lowercase());
        out
    }

    fn mask_entities(&self, text: &str) -> String {
        let spaced = |tok: &'static str| format!(" {tok} ");
        let t = self.url_re.replace_all(text, spaced(URL_TOKEN).as_str());
        let t = self.mention_re.replace_all(&t, spaced(USER_TOKEN).as_str());
        let t = self.hashtag_re.replace_all(&t, spaced(HASHTAG_TOKEN).as_str());
        t.into_owned()
    }

    fn alias_emoji(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        for c in text.chars() {
            if let Some(alias) = self.emoji.get(&c) {
                out.push(' ');
                out.push_str(alias);
                out.push(' ');
            } else if is_emoji_joiner(c) {
                // variation selectors, ZWJ and skin tones carry no alias of their own
            } else if is_emoji(c) {
                out.push(' ');
                out.push_str(UNKNOWN_EMOJI);
                out.push(' ');
            } else {
                out.push(c);
            }
        }
        out
    }
}

fn unescape_fully(input: &str) -> String {
    let mut cur = input.to_string();
    for _ in 0..MAX_UNESCAPE_ROUNDS {
        let next = html_escape::decode_html_entities(&cur);
        if next == cur {
            break;
        }
        cur = next.into_owned();
    }
    cur
}

fn is_emoji_joiner(c: char) -> bool {
    matches!(c as u32, 0xFE0E | 0xFE0F | 0x200D | 0x20E3 | 0x1F3FB..=0x1F3FF)
}

fn is_emoji(c: char) -> bool {
    matches!(
        c as u32,
        0x1F000..=0x1FAFF | 0x2600..=0x27BF | 0x2B00..=0x2BFF | 0x2300..=0x23FF | 0x203C | 0x2049
    )
}

/// Normalizes with the bundled tables.
pub fn normalize(text: &str) -> CleanText {
    Normalizer::bundled().normalize(text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    /// Minimum share of alphabetic characters that must be ASCII letters.
    pub min_ascii_ratio: f64,
    /// Minimum number of tokens found in the stopword list.
    pub min_stopword_hits: usize,
    pub min_tokens: usize,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            min_ascii_ratio: 0.9,
            min_stopword_hits: 1,
            min_tokens: 10,
        }
    }
}

pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_TXT
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect()
    })
}

/// Cheap English check: mostly-ASCII letters plus at least one stopword.
pub fn english_gate(text: &CleanText, cfg: &GateConfig) -> bool {
    let (mut alpha, mut ascii) = (0usize, 0usize);
    for c in text.text.chars().filter(|c| c.is_alphabetic()) {
        alpha += 1;
        if c.is_ascii_alphabetic() {
            ascii += 1;
        }
    }
    if alpha == 0 || (ascii as f64) < cfg.min_ascii_ratio * alpha as f64 {
        return false;
    }
    let stop = stopwords();
    let hits = text
        .text
        .split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| stop.contains(t))
        .count();
    hits >= cfg.min_stopword_hits
}

pub fn length_gate(text: &CleanText, min_tokens: usize) -> bool {
    text.ws_token_count >= min_tokens
}
