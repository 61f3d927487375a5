//! Narrative stimuli, lure pools, scrambling and recognition probe sampling.
//!
//! A [`Narrative`] stores its clauses in presentation order. Every clause keeps
//! its 1-based index in the original (intact) story, so a scrambled narrative
//! carries the same clause set as its source and `permutation[k]` is the
//! original index of the clause shown at presentation position `k + 1`.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::math;
use crate::text;

/// Marquee rate used to turn character counts into presentation time.
pub const CHARS_PER_SECOND: f64 = 12.0;

/// Number of recognition probes per session.
pub const PROBES_PER_SESSION: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("narrative has no clauses")]
    Empty,
    #[error("clause {index} has empty text")]
    EmptyClause { index: u32 },
    #[error("clause indices must be a bijection on 1..={len}")]
    BadIndices { len: usize },
    #[error("intact narrative must list clauses in original order without a permutation")]
    IntactOrder,
    #[error("scrambled narrative needs a permutation that matches its clause indices")]
    PermutationMismatch,
    #[error("narrative {0} is already scrambled")]
    AlreadyScrambled(String),
    #[error("probe pool has {size} items, need at least {PROBES_PER_SESSION}")]
    PoolTooSmall { size: usize },
    #[error("lure pool has {found} lures, narrative has {expected} clauses")]
    LureCount { expected: usize, found: usize },
    #[error("lure {0} repeats a narrative clause")]
    LureRepeatsClause(LureLabel),
    #[error("lure pool belongs to {found}, not {expected}")]
    LureNarrative { expected: String, found: String },
    #[error("invalid lure label {0:?}")]
    LureLabel(String),
    #[error("no clause with original index {0}")]
    NoSuchClause(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clause {
    /// 1-based position in the original story.
    pub index: u32,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NarrativeKind {
    Intact,
    Scrambled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Narrative {
    pub id: String,
    pub title: String,
    pub kind: NarrativeKind,
    pub clauses: Vec<Clause>,
    pub permutation: Option<Vec<u32>>,
    #[serde(default)]
    pub source: String,
}

impl Narrative {
    /// Builds an intact narrative from clause texts in story order.
    pub fn intact<S: Into<String>>(
        id: &str,
        title: &str,
        texts: impl IntoIterator<Item = S>,
    ) -> Result<Self, CorpusError> {
        let clauses = texts
            .into_iter()
            .zip(1u32..)
            .map(|(t, index)| Clause {
                index,
                text: t.into(),
            })
            .collect();
        let n = Narrative {
            id: id.to_owned(),
            title: title.to_owned(),
            kind: NarrativeKind::Intact,
            clauses,
            permutation: None,
            source: String::new(),
        };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let len = self.clauses.len();
        if len == 0 {
            return Err(CorpusError::Empty);
        }
        let mut seen = alloc::vec![false; len];
        for c in &self.clauses {
            if c.text.trim().is_empty() {
                return Err(CorpusError::EmptyClause { index: c.index });
            }
            let i = c.index as usize;
            if i == 0 || i > len || seen[i - 1] {
                return Err(CorpusError::BadIndices { len });
            }
            seen[i - 1] = true;
        }
        match self.kind {
            NarrativeKind::Intact => {
                let ordered = self.clauses.iter().zip(1u32..).all(|(c, k)| c.index == k);
                if !ordered || self.permutation.is_some() {
                    return Err(CorpusError::IntactOrder);
                }
            }
            NarrativeKind::Scrambled => {
                let perm = self
                    .permutation
                    .as_ref()
                    .ok_or(CorpusError::PermutationMismatch)?;
                if perm.len() != len || perm.iter().zip(&self.clauses).any(|(p, c)| *p != c.index) {
                    return Err(CorpusError::PermutationMismatch);
                }
            }
        }
        Ok(())
    }

    /// Story length in clauses.
    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn is_scrambled(&self) -> bool {
        self.kind == NarrativeKind::Scrambled
    }

    /// Original clause index shown at 1-based presentation `position`.
    pub fn original_index_at(&self, position: u32) -> Option<u32> {
        let p = position as usize;
        (p >= 1 && p <= self.len()).then(|| self.clauses[p - 1].index)
    }

    /// 1-based presentation position of the clause with original index `index`.
    pub fn position_of(&self, index: u32) -> Option<u32> {
        self.clauses
            .iter()
            .position(|c| c.index == index)
            .map(|p| p as u32 + 1)
    }

    /// Clause by original index.
    pub fn clause(&self, index: u32) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.index == index)
    }

    /// Presentation-position → original-index map (identity when intact).
    pub fn presentation_map(&self) -> Vec<u32> {
        self.clauses.iter().map(|c| c.index).collect()
    }

    /// Numbered clause list in presentation order, one `n. text` per line.
    pub fn numbered_segmentation(&self) -> String {
        let mut out = String::new();
        for (k, c) in self.clauses.iter().enumerate() {
            if k > 0 {
                out.push('\n');
            }
            out.push_str(&format!("{}. {}", k + 1, c.text));
        }
        out
    }

    /// Clauses restored to original order.
    pub fn descramble(&self) -> Narrative {
        let mut clauses = self.clauses.clone();
        clauses.sort_by_key(|c| c.index);
        Narrative {
            id: self.id.clone(),
            title: self.title.clone(),
            kind: NarrativeKind::Intact,
            clauses,
            permutation: None,
            source: self.source.clone(),
        }
    }
}

/// Clause texts joined in presentation order with single spaces.
pub fn assemble_prose(narrative: &Narrative) -> String {
    let mut out = String::new();
    for (k, c) in narrative.clauses.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        out.push_str(&c.text);
    }
    out
}

/// Randomly permutes the clauses of an intact narrative. Identity fields are
/// kept; callers that store both versions rename the result.
pub fn scramble(narrative: &Narrative, seed: u64) -> Result<Narrative, CorpusError> {
    if narrative.is_scrambled() {
        return Err(CorpusError::AlreadyScrambled(narrative.id.clone()));
    }
    narrative.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clauses = narrative.clauses.clone();
    clauses.shuffle(&mut rng);
    let permutation = clauses.iter().map(|c| c.index).collect();
    Ok(Narrative {
        id: narrative.id.clone(),
        title: narrative.title.clone(),
        kind: NarrativeKind::Scrambled,
        clauses,
        permutation: Some(permutation),
        source: narrative.source.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusStats {
    #[serde(rename = "L")]
    pub clauses: usize,
    pub word_count: usize,
    pub char_count: usize,
    pub duration_s: f64,
}

impl StimulusStats {
    /// Presentation time rounded to the nearest second.
    pub fn duration_rounded(&self) -> u64 {
        math::round(self.duration_s) as u64
    }
}

pub fn stimulus_stats(narrative: &Narrative) -> StimulusStats {
    let prose = assemble_prose(narrative);
    let char_count = prose.chars().count();
    StimulusStats {
        clauses: narrative.len(),
        word_count: text::word_count(&prose),
        char_count,
        duration_s: char_count as f64 / CHARS_PER_SECOND,
    }
}

/// Lure slot label `k.5`: the lure sits between clauses `k` and `k + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LureLabel(pub u32);

impl fmt::Display for LureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.5", self.0)
    }
}

impl FromStr for LureLabel {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim()
            .strip_suffix(".5")
            .and_then(|k| k.parse::<u32>().ok())
            .map(LureLabel)
            .ok_or_else(|| CorpusError::LureLabel(s.to_string()))
    }
}

impl Serialize for LureLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LureLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lure {
    pub label: LureLabel,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LurePool {
    pub narrative_id: String,
    pub lures: Vec<Lure>,
}

impl LurePool {
    /// Checks the pool against the narrative it was generated for.
    pub fn validate_for(&self, narrative: &Narrative) -> Result<(), CorpusError> {
        if self.narrative_id != narrative.id {
            return Err(CorpusError::LureNarrative {
                expected: narrative.id.clone(),
                found: self.narrative_id.clone(),
            });
        }
        if self.lures.len() != narrative.len() {
            return Err(CorpusError::LureCount {
                expected: narrative.len(),
                found: self.lures.len(),
            });
        }
        for lure in &self.lures {
            let t = lure.text.trim();
            if narrative.clauses.iter().any(|c| c.text.trim() == t) {
                return Err(CorpusError::LureRepeatsClause(lure.label));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProbeItem {
    Old { clause_index: u32 },
    New { label: LureLabel },
}

impl ProbeItem {
    pub fn is_old(&self) -> bool {
        matches!(self, ProbeItem::Old { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    /// 1-based query position within the session.
    pub position: u8,
    pub item: ProbeItem,
    pub text: String,
}

impl Probe {
    pub fn is_old(&self) -> bool {
        self.item.is_old()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeSet {
    pub probes: Vec<Probe>,
}

/// Draws [`PROBES_PER_SESSION`] distinct items uniformly from the union of the
/// narrative's clauses and its lures, in random order.
pub fn sample_probes(
    narrative: &Narrative,
    lures: &LurePool,
    rng_seed: u64,
) -> Result<ProbeSet, CorpusError> {
    if lures.narrative_id != narrative.id {
        return Err(CorpusError::LureNarrative {
            expected: narrative.id.clone(),
            found: lures.narrative_id.clone(),
        });
    }
    let mut pool: Vec<(ProbeItem, &str)> = narrative
        .clauses
        .iter()
        .map(|c| {
            (
                ProbeItem::Old {
                    clause_index: c.index,
                },
                c.text.as_str(),
            )
        })
        .collect();
    pool.sort_by_key(|(item, _)| item.clone());
    pool.extend(
        lures
            .lures
            .iter()
            .map(|l| (ProbeItem::New { label: l.label }, l.text.as_str())),
    );
    if pool.len() < PROBES_PER_SESSION {
        return Err(CorpusError::PoolTooSmall { size: pool.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let picks = rand::seq::index::sample(&mut rng, pool.len(), PROBES_PER_SESSION);
    let probes = picks
        .iter()
        .zip(1u8..)
        .map(|(i, position)| Probe {
            position,
            item: pool[i].0.clone(),
            text: pool[i].1.to_owned(),
        })
        .collect();
    Ok(ProbeSet { probes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toy(n: usize) -> Narrative {
        Narrative::intact("toy", "toy", (1..=n).map(|k| format!("Clause number {k}."))).unwrap()
    }

    fn toy_lures(n: &Narrative) -> LurePool {
        LurePool {
            narrative_id: n.id.clone(),
            lures: (1..=n.len() as u32)
                .map(|k| Lure {
                    label: LureLabel(k),
                    text: format!("Lure number {k}."),
                })
                .collect(),
        }
    }

    #[test]
    fn prose_joins_with_single_spaces() {
        let n = Narrative::intact("x", "x", ["A.", "B."]).unwrap();
        assert_eq!(assemble_prose(&n), "A. B.");
        let one = Narrative::intact("x", "x", ["Only one clause,  kept."]).unwrap();
        assert_eq!(assemble_prose(&one), "Only one clause,  kept.");
    }

    #[test]
    fn validation_rejects_bad_narratives() {
        assert_eq!(
            Narrative::intact("x", "x", Vec::<String>::new()).unwrap_err(),
            CorpusError::Empty
        );
        assert_eq!(
            Narrative::intact("x", "x", ["a", "  "]).unwrap_err(),
            CorpusError::EmptyClause { index: 2 }
        );
        let mut s = scramble(&toy(4), 1).unwrap();
        s.permutation = Some(vec![1, 1, 2, 3]);
        assert_eq!(s.validate().unwrap_err(), CorpusError::PermutationMismatch);
        let mut s = scramble(&toy(4), 1).unwrap();
        s.permutation = None;
        assert!(s.validate().is_err());
    }

    #[test]
    fn scramble_is_a_seeded_permutation() {
        let n = toy(19);
        let a = scramble(&n, 7).unwrap();
        let b = scramble(&n, 7).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert_eq!(a.kind, NarrativeKind::Scrambled);
        let mut texts: Vec<_> = a.clauses.iter().map(|c| c.text.clone()).collect();
        texts.sort();
        let mut orig: Vec<_> = n.clauses.iter().map(|c| c.text.clone()).collect();
        orig.sort();
        assert_eq!(texts, orig);
        assert_eq!(a.descramble(), n);
        assert_ne!(scramble(&n, 8).unwrap().permutation, a.permutation);
    }

    #[test]
    fn scramble_single_clause_changes_only_kind() {
        let n = toy(1);
        let s = scramble(&n, 3).unwrap();
        assert_eq!(s.clauses, n.clauses);
        assert_eq!(s.permutation, Some(vec![1]));
        assert_eq!(s.id, n.id);
    }

    #[test]
    fn scramble_rejects_scrambled_input() {
        let s = scramble(&toy(3), 1).unwrap();
        assert!(matches!(
            scramble(&s, 2),
            Err(CorpusError::AlreadyScrambled(_))
        ));
    }

    #[test]
    fn stats_of_degenerate_narrative() {
        let n = Narrative::intact("hi", "hi", ["Hi."]).unwrap();
        let st = stimulus_stats(&n);
        assert_eq!((st.clauses, st.word_count, st.char_count), (1, 1, 3));
        assert_eq!(st.duration_s, 0.25);
    }

    #[test]
    fn lure_labels_round_trip_text() {
        let l: LureLabel = "12.5".parse().unwrap();
        assert_eq!(l, LureLabel(12));
        assert_eq!(l.to_string(), "12.5");
        assert!("12".parse::<LureLabel>().is_err());
        assert!("x.5".parse::<LureLabel>().is_err());
    }

    #[test]
    fn lure_pool_validation() {
        let n = toy(3);
        let mut pool = toy_lures(&n);
        pool.validate_for(&n).unwrap();
        pool.lures[1].text = "Clause number 2.".into();
        assert_eq!(
            pool.validate_for(&n).unwrap_err(),
            CorpusError::LureRepeatsClause(LureLabel(2))
        );
        pool.lures.pop();
        assert!(matches!(
            pool.validate_for(&n),
            Err(CorpusError::LureCount { .. })
        ));
    }

    #[test]
    fn probes_are_distinct_and_flagged_correctly() {
        let n = toy(19);
        let pool = toy_lures(&n);
        let set = sample_probes(&n, &pool, 11).unwrap();
        assert_eq!(set.probes.len(), 10);
        let mut items: Vec<_> = set.probes.iter().map(|p| p.item.clone()).collect();
        items.sort();
        items.dedup();
        assert_eq!(items.len(), 10);
        for (k, p) in set.probes.iter().enumerate() {
            assert_eq!(p.position as usize, k + 1);
            match &p.item {
                ProbeItem::Old { clause_index } => {
                    assert_eq!(n.clause(*clause_index).unwrap().text, p.text)
                }
                ProbeItem::New { label } => {
                    assert_eq!(format!("Lure number {}.", label.0), p.text)
                }
            }
        }
        assert_eq!(set, sample_probes(&n, &pool, 11).unwrap());
    }

    #[test]
    fn exhaustive_pool_returns_every_item() {
        let n = toy(5);
        let pool = toy_lures(&n);
        let set = sample_probes(&n, &pool, 2).unwrap();
        assert_eq!(set.probes.iter().filter(|p| p.is_old()).count(), 5);
        let small = toy(4);
        assert_eq!(
            sample_probes(&small, &toy_lures(&small), 2).unwrap_err(),
            CorpusError::PoolTooSmall { size: 8 }
        );
    }

    #[test]
    fn probe_inclusion_is_uniform() {
        // 200,000 seeded draws from a 38-item pool. Inclusion indicators under
        // sampling without replacement have covariance q(1-q) N/(N-1) (I - J/N),
        // so the scaled sum of squared deviations is chi-square with N-1 dof.
        let n = toy(19);
        let pool = toy_lures(&n);
        let mut counts = std::collections::BTreeMap::new();
        let draws = 200_000u64;
        for seed in 0..draws {
            for p in sample_probes(&n, &pool, seed).unwrap().probes {
                *counts.entry(p.item).or_insert(0u64) += 1;
            }
        }
        assert_eq!(counts.len(), 38);
        let big_n = 38.0;
        let q = 10.0 / big_n;
        let expected = q * draws as f64;
        let var = draws as f64 * q * (1.0 - q) * big_n / (big_n - 1.0);
        let stat: f64 = counts
            .values()
            .map(|&c| (c as f64 - expected).powi(2) / var)
            .sum();
        let p = crate::stats::chi_square_sf(stat, big_n - 1.0);
        assert!(p > 0.01, "chi2={stat} p={p}");
    }
}
