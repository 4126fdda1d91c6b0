//! WordPiece vocabulary building and greedy longest-match encoding.

use std::collections::HashMap;
use std::path::Path;

use crate::textnorm::{CleanText, HASHTAG_TOKEN, PLACEHOLDERS, URL_TOKEN, USER_TOKEN};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

/// Special tokens in id order for vocabularies built here.
pub const SPECIALS: [&str; 7] = [PAD, UNK, CLS, SEP, URL_TOKEN, USER_TOKEN, HASHTAG_TOKEN];

pub const DEFAULT_MAX_LEN: usize = 280;
const CONTINUATION: &str = "##";
const MAX_WORD_CHARS: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum VocabError {
    #[error("vocabulary size {size} is below the minimum {min}")]
    TooSmall { size: usize, min: usize },
    #[error("vocabulary is missing required token {0}")]
    MissingSpecial(&'static str),
    #[error("[PAD] must have id 0, found at {0}")]
    PadNotZero(u32),
    #[error("token {token:?} appears twice (lines {first} and {second})")]
    Duplicate {
        token: String,
        first: usize,
        second: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    unk: u32,
    cls: u32,
    sep: u32,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocab, VocabError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if let Some(prev) = index.insert(t.clone(), i as u32) {
                return Err(VocabError::Duplicate {
                    token: t.clone(),
                    first: prev as usize + 1,
                    second: i + 1,
                });
            }
        }
        let get = |name: &'static str| index.get(name).copied().ok_or(VocabError::MissingSpecial(name));
        let pad = get(PAD)?;
        if pad != 0 {
            return Err(VocabError::PadNotZero(pad));
        }
        let (unk, cls, sep) = (get(UNK)?, get(CLS)?, get(SEP)?);
        Ok(Vocab {
            tokens,
            index,
            unk,
            cls,
            sep,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn pad_id(&self) -> u32 {
        0
    }

    pub fn unk_id(&self) -> u32 {
        self.unk
    }

    pub fn cls_id(&self) -> u32 {
        self.cls
    }

    pub fn sep_id(&self) -> u32 {
        self.sep
    }

    /// One token per line; the line number is the id.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Vocab, VocabError> {
        Vocab::from_tokens(text.lines().map(str::to_string).collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), VocabError> {
        std::fs::write(path, self.to_text()).map_err(|source| VocabError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Reads a BERT-style `vocab.txt`.
    pub fn load(path: &Path) -> Result<Vocab, VocabError> {
        let text = std::fs::read_to_string(path).map_err(|source| VocabError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Vocab::parse(&text)
    }

    /// Greedy longest-match segmentation of one word. `None` when some
    /// residue cannot be matched.
    pub fn wordpiece(&self, word: &str) -> Option<Vec<u32>> {
        let chars: Vec<(usize, char)> = word.char_indices().collect();
        if chars.is_empty() || chars.len() > MAX_WORD_CHARS {
            return None;
        }
        let byte_at = |ci: usize| chars.get(ci).map_or(word.len(), |&(b, _)| b);
        let mut pieces = Vec::new();
        let mut start = 0;
        let mut buf = String::new();
        while start < chars.len() {
            let mut found = None;
            for end in (start + 1..=chars.len()).rev() {
                buf.clear();
                if start > 0 {
                    buf.push_str(CONTINUATION);
                }
                buf.push_str(&word[byte_at(start)..byte_at(end)]);
                if let Some(id) = self.id(&buf) {
                    found = Some((id, end));
                    break;
                }
            }
            let (id, end) = found?;
            pieces.push(id);
            start = end;
        }
        Some(pieces)
    }

    /// Word pieces for a whole text, before adding specials or truncating.
    pub fn pieces(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            if PLACEHOLDERS.contains(&word) {
                out.push(self.id(word).unwrap_or(self.unk));
                continue;
            }
            match self.wordpiece(word) {
                Some(p) => out.extend(p),
                None => out.push(self.unk),
            }
        }
        out
    }
}

/// Fixed-length id sequence with its attention mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
}

impl TokenSeq {
    /// Number of non-pad positions (always a prefix).
    pub fn active_len(&self) -> usize {
        self.attention_mask.iter().take_while(|&&m| m == 1).count()
    }
}

/// `[CLS] pieces… [SEP]` padded to `max_len`; pieces are truncated so that
/// `[SEP]` always fits.
pub fn encode(vocab: &Vocab, text: &CleanText, max_len: usize) -> TokenSeq {
    assert!(max_len >= 2, "max_len must leave room for [CLS] and [SEP]");
    let mut pieces = vocab.pieces(&text.text);
    pieces.truncate(max_len - 2);
    let mut ids = Vec::with_capacity(max_len);
    ids.push(vocab.cls_id());
    ids.extend(pieces);
    ids.push(vocab.sep_id());
    let active = ids.len();
    ids.resize(max_len, vocab.pad_id());
    let mut attention_mask = vec![1u8; active];
    attention_mask.resize(max_len, 0);
    TokenSeq { ids, attention_mask }
}

fn ranked<K: Ord + Clone>(counts: HashMap<K, usize>) -> Vec<K> {
    let mut v: Vec<(K, usize)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().map(|(k, _)| k).collect()
}

/// Frequency-ranked vocabulary: specials, then observed characters (plain
/// and `##` forms), then whole words, then `##` suffixes of 2–6 characters,
/// until `size` entries. Ties break lexicographically.
pub fn build_vocab<'a, I>(corpus: I, size: usize) -> Result<Vocab, VocabError>
where
    I: IntoIterator<Item = &'a CleanText>,
{
    let min = SPECIALS.len() + 26;
    if size < min {
        return Err(VocabError::TooSmall { size, min });
    }
    let mut words: HashMap<&str, usize> = HashMap::new();
    for text in corpus {
        for w in text.text.split_whitespace() {
            if !PLACEHOLDERS.contains(&w) {
                *words.entry(w).or_default() += 1;
            }
        }
    }
    let mut chars: HashMap<char, usize> = HashMap::new();
    let mut suffixes: HashMap<String, usize> = HashMap::new();
    for (w, &n) in &words {
        let idx: Vec<usize> = w.char_indices().map(|(b, _)| b).collect();
        for c in w.chars() {
            *chars.entry(c).or_default() += n;
        }
        for (ci, &b) in idx.iter().enumerate().skip(1) {
            let len = idx.len() - ci;
            if (2..=6).contains(&len) {
                *suffixes.entry(format!("{CONTINUATION}{}", &w[b..])).or_default() += n;
            }
        }
    }
    let ranked_chars = ranked(chars);
    let candidates = SPECIALS
        .iter()
        .map(|s| s.to_string())
        .chain(ranked_chars.iter().map(|c| c.to_string()))
        .chain(ranked_chars.iter().map(|c| format!("{CONTINUATION}{c}")))
        .chain(ranked(words).into_iter().map(str::to_string))
        .chain(ranked(suffixes));

    let mut tokens = Vec::with_capacity(size);
    let mut present = std::collections::HashSet::new();
    for t in candidates {
        if tokens.len() == size {
            break;
        }
        if present.insert(t.clone()) {
            tokens.push(t);
        }
    }
    Vocab::from_tokens(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textnorm::normalize;
    use proptest::prelude::*;

    fn toy() -> Vocab {
        let mut t: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        t.extend(["un", "##able", "able", "##a"].map(String::from));
        Vocab::from_tokens(t).unwrap()
    }

    fn clean(s: &str) -> CleanText {
        CleanText::from_normalized(s)
    }

    #[test]
    fn greedy_longest_match() {
        let v = toy();
        let id = |t| v.id(t).unwrap();
        assert_eq!(v.wordpiece("unable"), Some(vec![id("un"), id("##able")]));
        assert_eq!(v.wordpiece("able"), Some(vec![id("able")]));
        assert_eq!(v.wordpiece("unx"), None);
        assert_eq!(v.pieces("unx able"), vec![v.unk_id(), id("able")]);
    }

    #[test]
    fn empty_text_is_cls_sep_then_padding() {
        let v = toy();
        let seq = encode(&v, &clean(""), 6);
        assert_eq!(seq.ids, vec![v.cls_id(), v.sep_id(), 0, 0, 0, 0]);
        assert_eq!(seq.attention_mask, vec![1, 1, 0, 0, 0, 0]);
        assert_eq!(seq.active_len(), 2);
    }

    #[test]
    fn truncation_keeps_sep_last() {
        let v = toy();
        let text = vec!["able"; 500].join(" ");
        let seq = encode(&v, &clean(&text), 280);
        assert_eq!(seq.ids.len(), 280);
        assert_eq!(seq.ids[279], v.sep_id());
        assert!(seq.attention_mask.iter().all(|&m| m == 1));
    }

    #[test]
    fn placeholders_are_atomic() {
        let v = toy();
        assert_eq!(v.pieces("[URL] [USER] [HASHTAG]"), vec![4, 5, 6]);
        let bert = Vocab::parse("[PAD]\n[UNK]\n[CLS]\n[SEP]\nhello\n").unwrap();
        assert_eq!(bert.pieces("[URL] hello"), vec![bert.unk_id(), 4]);
    }

    #[test]
    fn builder_examples() {
        // size 10 is below the specials + 26 floor; the smallest legal size
        // still admits the most frequent word
        assert!(build_vocab([&clean("aa aa")], 10).is_err());
        let v = build_vocab([&clean("aa aa")], 33).unwrap();
        assert_eq!(v.len(), 10);
        assert_eq!(v.token(9), Some("aa"));

        let corpus = [clean("cat bat"), clean("eat")];
        let v = build_vocab(corpus.iter(), 33 + 30).unwrap();
        let bat = v.id("bat").unwrap();
        assert!(bat < v.id("cat").unwrap());
        assert!(v.id("##at").is_some());

        assert!(matches!(build_vocab([&clean("x")], 32), Err(VocabError::TooSmall { min: 33, .. })));
    }

    #[test]
    fn builder_stops_at_size() {
        let text = normalize("the quick brown fox jumps over the lazy dog and the cat");
        let v = build_vocab([&text], 40).unwrap();
        assert_eq!(v.len(), 40);
        assert_eq!(&v.tokens()[..7], &SPECIALS.map(String::from));
    }

    #[test]
    fn load_rejects_bad_files() {
        assert!(matches!(Vocab::parse("[UNK]\n[PAD]\n[CLS]\n[SEP]\n"), Err(VocabError::PadNotZero(1))));
        assert!(matches!(Vocab::parse("[PAD]\n[UNK]\n[CLS]\n"), Err(VocabError::MissingSpecial("[SEP]"))));
        assert!(matches!(
            Vocab::parse("[PAD]\n[UNK]\n[CLS]\n[SEP]\nx\nx\n"),
            Err(VocabError::Duplicate { second: 6, .. })
        ));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = toy();
        v.save(&path).unwrap();
        assert_eq!(Vocab::load(&path).unwrap(), v);
    }

    fn desk_like_vocab() -> Vocab {
        let texts: Vec<CleanText> = [
            "the unbelievable report was unverified by officials",
            "officials reported that the reporting was reliable",
            "shocking secret cure doctors hate revealed today",
        ]
        .iter()
        .map(|s| normalize(s))
        .collect();
        build_vocab(texts.iter(), 90).unwrap()
    }

    proptest! {
        #[test]
        fn mask_counts_pieces(words in proptest::collection::vec("[a-z]{1,9}", 0..30)) {
            let v = desk_like_vocab();
            let text = clean(&words.join(" "));
            let n = v.pieces(&text.text).len();
            let seq = encode(&v, &text, 64);
            let active = seq.attention_mask.iter().filter(|&&m| m == 1).count();
            if n + 2 <= 64 {
                prop_assert_eq!(active, n + 2);
            } else {
                prop_assert_eq!(active, 64);
            }
            prop_assert_eq!(seq.ids[0], v.cls_id());
            prop_assert_eq!(seq.ids[active - 1], v.sep_id());
            prop_assert!(seq.ids[active..].iter().all(|&i| i == 0));
        }

        #[test]
        fn no_longer_piece_matches(word in "[a-z]{1,12}") {
            let v = desk_like_vocab();
            if let Some(pieces) = v.wordpiece(&word) {
                let chars: Vec<char> = word.chars().collect();
                let mut pos = 0;
                for id in pieces {
                    let tok = v.token(id).unwrap();
                    let body = tok.strip_prefix("##").unwrap_or(tok);
                    let len = body.chars().count();
                    // brute force: no vocab entry covers more characters at this position
                    for longer in len + 1..=chars.len() - pos {
                        let s: String = chars[pos..pos + longer].iter().collect();
                        let cand = if pos > 0 { format!("##{s}") } else { s };
                        prop_assert!(v.id(&cand).is_none(), "{} beats {}", cand, tok);
                    }
                    pos += len;
                }
                prop_assert_eq!(pos, chars.len());
            }
        }
    }
}
