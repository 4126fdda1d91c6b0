use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CleanRecord, Source, MISINFO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Stage0,
    Stage1,
    Stage2,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 5] = [Split::Stage0, Split::Stage1, Split::Stage2, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Stage0 => "Stage0",
            Split::Stage1 => "Stage1",
            Split::Stage2 => "Stage2",
            Split::Dev => "Dev",
            Split::Test => "Test",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.name() == s)
            .ok_or_else(|| format!("unknown split {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub seed: u64,
    /// Sampling weights for the Stage-2 mix.
    pub stage2_mix: BTreeMap<Source, f64>,
    /// Stage-2 row target; `None` takes the largest size the scarcest
    /// source allows at the requested proportions.
    pub stage2_target: Option<usize>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            seed: 42,
            stage2_mix: BTreeMap::from([
                (Source::Fnn, 0.5),
                (Source::TruthSeeker, 0.3),
                (Source::Pheme, 0.2),
            ]),
            stage2_target: Some(600),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SplitError {
    #[error("stage-2 mix requests {0} but no records from that source are available")]
    EmptyPool(Source),
    #[error("stage-2 mix weights must be finite, non-negative and not all zero")]
    InvalidMix,
    #[error("record id {0:?} appears more than once")]
    DuplicateId(String),
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub count: usize,
    pub misinfo: usize,
}

impl SplitStats {
    pub fn prevalence(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.misinfo as f64 / self.count as f64
        }
    }
}

/// Assignment of every record id to exactly one split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitManifest {
    pub seed: u64,
    ids: [Vec<String>; 5],
    stats: [SplitStats; 5],
}

impl SplitManifest {
    pub fn ids(&self, split: Split) -> &[String] {
        &self.ids[split.index()]
    }

    pub fn stats(&self, split: Split) -> SplitStats {
        self.stats[split.index()]
    }

    pub fn assignments(&self) -> HashMap<&str, Split> {
        Split::ALL
            .iter()
            .flat_map(|&sp| self.ids(sp).iter().map(move |id| (id.as_str(), sp)))
            .collect()
    }

    /// Picks the records belonging to `split`, in manifest order.
    pub fn select<'a>(&self, split: Split, records: &'a [CleanRecord]) -> Vec<&'a CleanRecord> {
        let by_id: HashMap<&str, &CleanRecord> =
            records.iter().map(|r| (r.id.as_str(), r)).collect();
        self.ids(split)
            .iter()
            .filter_map(|id| by_id.get(id.as_str()).copied())
            .collect()
    }

    /// Human-readable form: a seed line, then per split a header line
    /// followed by one id per line.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# misdetect split manifest\n");
        writeln!(out, "seed {}", self.seed).unwrap();
        for sp in Split::ALL {
            let st = self.stats(sp);
            writeln!(
                out,
                "split {} count {} misinfo {} prevalence {:.6}",
                sp,
                st.count,
                st.misinfo,
                st.prevalence()
            )
            .unwrap();
            for id in self.ids(sp) {
                writeln!(out, "  {id}").unwrap();
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<SplitManifest, SplitError> {
        let err = |line: usize, message: String| SplitError::Parse { line, message };
        let mut seed = None;
        let mut ids: [Vec<String>; 5] = Default::default();
        let mut stats = [SplitStats { count: 0, misinfo: 0 }; 5];
        let mut current: Option<Split> = None;
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if let Some(id) = line.strip_prefix("  ") {
                let sp = current.ok_or_else(|| err(n, "id before any split header".into()))?;
                ids[sp.index()].push(id.to_string());
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["seed", v] => seed = Some(v.parse().map_err(|_| err(n, format!("bad seed {v:?}")))?),
                ["split", name, "count", c, "misinfo", m, "prevalence", _] => {
                    let sp: Split = name.parse().map_err(|e| err(n, e))?;
                    let count = c.parse().map_err(|_| err(n, format!("bad count {c:?}")))?;
                    let misinfo = m.parse().map_err(|_| err(n, format!("bad misinfo {m:?}")))?;
                    stats[sp.index()] = SplitStats { count, misinfo };
                    current = Some(sp);
                }
                _ => return Err(err(n, format!("unrecognized line {line:?}"))),
            }
        }
        let seed = seed.ok_or_else(|| err(0, "missing seed line".into()))?;
        for sp in Split::ALL {
            if ids[sp.index()].len() != stats[sp.index()].count {
                return Err(err(0, format!("{sp} header count disagrees with its id list")));
            }
        }
        Ok(SplitManifest { seed, ids, stats })
    }
}

/// Builds the curriculum splits.
///
/// ISOT goes to Stage 0 and LIAR to Stage 1. Stage 2 samples the mix
/// sources without replacement in proportion to their weights, capped at
/// what each source has. Everything else is halved into Dev and Test within
/// each (source, label) cell; odd leftovers alternate between the two sides,
/// ordered by label, so the class counts differ by at most one.
pub fn build_splits(records: &[CleanRecord], cfg: &SplitConfig) -> Result<SplitManifest, SplitError> {
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if !seen.insert(r.id.as_str()) {
            return Err(SplitError::DuplicateId(r.id.clone()));
        }
    }
    let total_w: f64 = cfg.stage2_mix.values().sum();
    if cfg.stage2_mix.values().any(|w| !w.is_finite() || *w < 0.0) || total_w <= 0.0 {
        return Err(SplitError::InvalidMix);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut assigned: Vec<Option<Split>> = vec![None; records.len()];
    let pool_of = |src: Source| -> Vec<usize> {
        records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.source == src)
            .map(|(i, _)| i)
            .collect()
    };

    for (i, r) in records.iter().enumerate() {
        match r.source {
            Source::Isot => assigned[i] = Some(Split::Stage0),
            Source::Liar => assigned[i] = Some(Split::Stage1),
            _ => {}
        }
    }

    let mix: Vec<(Source, f64, Vec<usize>)> = cfg
        .stage2_mix
        .iter()
        .filter(|(_, w)| **w > 0.0)
        .map(|(&src, &w)| (src, w / total_w, pool_of(src)))
        .collect();
    if let Some((src, _, _)) = mix.iter().find(|(_, _, pool)| pool.is_empty()) {
        return Err(SplitError::EmptyPool(*src));
    }
    let target = cfg.stage2_target.unwrap_or_else(|| {
        mix.iter()
            .map(|(_, w, pool)| (pool.len() as f64 / w).floor() as usize)
            .min()
            .unwrap_or(0)
    });
    for (_, w, pool) in &mix {
        let quota = ((w * target as f64).round() as usize).min(pool.len());
        let mut shuffled = pool.clone();
        shuffled.shuffle(&mut rng);
        for &i in &shuffled[..quota] {
            assigned[i] = Some(Split::Stage2);
        }
    }

    // remainder cells, in a fixed order: label 1 before 0, then source
    let mut cells: BTreeMap<(std::cmp::Reverse<u8>, Source), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if assigned[i].is_none() {
            cells.entry((std::cmp::Reverse(r.y), r.source)).or_default().push(i);
        }
    }
    let mut leftovers = Vec::new();
    for members in cells.values_mut() {
        members.shuffle(&mut rng);
        let half = members.len() / 2;
        for &i in &members[..half] {
            assigned[i] = Some(Split::Dev);
        }
        for &i in &members[half..2 * half] {
            assigned[i] = Some(Split::Test);
        }
        if members.len() % 2 == 1 {
            leftovers.push(members[members.len() - 1]);
        }
    }
    for (k, &i) in leftovers.iter().enumerate() {
        assigned[i] = Some(if k % 2 == 0 { Split::Dev } else { Split::Test });
    }

    let mut ids: [Vec<String>; 5] = Default::default();
    let mut stats = [SplitStats { count: 0, misinfo: 0 }; 5];
    for (r, sp) in records.iter().zip(&assigned) {
        let sp = sp.expect("every record is assigned");
        ids[sp.index()].push(r.id.clone());
        stats[sp.index()].count += 1;
        if r.y == MISINFO {
            stats[sp.index()].misinfo += 1;
        }
    }
    Ok(SplitManifest { seed: cfg.seed, ids, stats })
}
