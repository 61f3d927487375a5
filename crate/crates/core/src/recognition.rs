//! Recognition statistics: hit and false-alarm rates, the retained-memory
//! estimate `M`, per-position d′ and the clause-level hit-rate join with
//! `P_rec`.
//!
//! With `M` of `L` clauses retained and unretained items endorsed at guess
//! rate `g`, a studied probe is endorsed with probability
//! `P_h = M/L + (1 - M/L) g` and a lure with `P_f = g`, which inverts to
//! `M = L (P_h - P_f) / (1 - P_f)`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::ProbeItem;
use crate::stats::{self, BinSpec, Binned, CorrelationResult, LinearFit, StatsError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecognitionTrial {
    pub participant_id: String,
    pub narrative_id: String,
    pub probe_position: u8,
    pub item: ProbeItem,
    pub is_old: bool,
    pub response_yes: bool,
    #[serde(default)]
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecognitionError {
    #[error("no trials with old (studied) probes")]
    NoOldTrials,
    #[error("no trials with new (lure) probes")]
    NoNewTrials,
    #[error("false-alarm rate is 1; the retained estimate is undefined")]
    Singular,
    #[error("need at least {need} participants, got {got}")]
    TooFewParticipants { need: usize, got: usize },
    #[error("no probe position has both old and new trials")]
    NoPositions,
    #[error("hit rates without matching recall probability: {0:?}")]
    JoinMismatch(Vec<ClauseKey>),
    #[error("trial of {participant} at position {position}: item kind disagrees with is_old")]
    Inconsistent { participant: String, position: u8 },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub hits: u64,
    pub misses: u64,
    pub false_alarms: u64,
    pub correct_rejections: u64,
}

impl Counts {
    pub fn add(&mut self, t: &RecognitionTrial) {
        match (t.is_old, t.response_yes) {
            (true, true) => self.hits += 1,
            (true, false) => self.misses += 1,
            (false, true) => self.false_alarms += 1,
            (false, false) => self.correct_rejections += 1,
        }
    }

    pub fn from_trials<'a>(trials: impl IntoIterator<Item = &'a RecognitionTrial>) -> Self {
        let mut c = Counts::default();
        for t in trials {
            c.add(t);
        }
        c
    }

    pub fn n_old(&self) -> u64 {
        self.hits + self.misses
    }

    pub fn n_new(&self) -> u64 {
        self.false_alarms + self.correct_rejections
    }

    pub fn hit_rate(&self) -> f64 {
        self.hits as f64 / self.n_old() as f64
    }

    pub fn false_alarm_rate(&self) -> f64 {
        self.false_alarms as f64 / self.n_new() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub p_h: f64,
    pub p_f: f64,
    pub counts: Counts,
}

/// Checks that every trial's item kind agrees with its `is_old` flag.
pub fn check_trials(trials: &[RecognitionTrial]) -> Result<(), RecognitionError> {
    for t in trials {
        if t.item.is_old() != t.is_old {
            return Err(RecognitionError::Inconsistent {
                participant: t.participant_id.clone(),
                position: t.probe_position,
            });
        }
    }
    Ok(())
}

/// Hit and false-alarm rates pooled over participants and positions.
pub fn rates(trials: &[RecognitionTrial]) -> Result<Rates, RecognitionError> {
    let counts = Counts::from_trials(trials);
    if counts.n_old() == 0 {
        return Err(RecognitionError::NoOldTrials);
    }
    if counts.n_new() == 0 {
        return Err(RecognitionError::NoNewTrials);
    }
    Ok(Rates {
        p_h: counts.hit_rate(),
        p_f: counts.false_alarm_rate(),
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Retained {
    pub m: f64,
    /// `P_h < P_f`; the estimate is reported unclipped.
    pub negative: bool,
}

/// `M = L (P_h - P_f) / (1 - P_f)`.
pub fn retained_estimate(p_h: f64, p_f: f64, l: usize) -> Result<Retained, RecognitionError> {
    if p_f >= 1.0 {
        return Err(RecognitionError::Singular);
    }
    let m = l as f64 * (p_h - p_f) / (1.0 - p_f);
    Ok(Retained {
        m,
        negative: m < 0.0,
    })
}

/// Forward model: rates implied by `m` retained of `l` at guess rate `g`.
pub fn forward_rates(m: f64, l: usize, g: f64) -> (f64, f64) {
    let frac = m / l as f64;
    (frac + (1.0 - frac) * g, g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionSummary {
    pub p_h: f64,
    pub p_f: f64,
    /// Guess rate, estimated by the false-alarm rate.
    pub p_g: f64,
    pub m: f64,
    pub m_negative: bool,
    pub m_stderr: f64,
    pub counts: Counts,
    pub n_participants: usize,
    pub n_resamples: usize,
    pub skipped_resamples: usize,
    /// More than 1% of resamples were singular or lacked old/new trials.
    pub skipped_flag: bool,
}

fn group_by_participant(trials: &[RecognitionTrial]) -> Vec<Counts> {
    let mut by: BTreeMap<&str, Counts> = BTreeMap::new();
    for t in trials {
        by.entry(t.participant_id.as_str()).or_default().add(t);
    }
    by.into_values().collect()
}

/// Pooled estimate of `M` with a participant-level bootstrap standard error.
pub fn retained_with_bootstrap(
    trials: &[RecognitionTrial],
    l: usize,
    n_resamples: usize,
    seed: u64,
) -> Result<RecognitionSummary, RecognitionError> {
    let r = rates(trials)?;
    let est = retained_estimate(r.p_h, r.p_f, l)?;
    let groups = group_by_participant(trials);
    if groups.len() < 2 {
        return Err(RecognitionError::TooFewParticipants {
            need: 2,
            got: groups.len(),
        });
    }
    let reps = stats::bootstrap_replicates(
        &groups,
        |sample| {
            let mut c = Counts::default();
            for g in sample {
                c.hits += g.hits;
                c.misses += g.misses;
                c.false_alarms += g.false_alarms;
                c.correct_rejections += g.correct_rejections;
            }
            if c.n_old() == 0 || c.n_new() == 0 {
                return f64::NAN;
            }
            retained_estimate(c.hit_rate(), c.false_alarm_rate(), l).map_or(f64::NAN, |x| x.m)
        },
        n_resamples,
        seed,
    )?;
    let ci = stats::summarize_replicates(&reps, 0.05)?;
    Ok(RecognitionSummary {
        p_h: r.p_h,
        p_f: r.p_f,
        p_g: r.p_f,
        m: est.m,
        m_negative: est.negative,
        m_stderr: ci.std_error,
        counts: r.counts,
        n_participants: groups.len(),
        n_resamples,
        skipped_resamples: ci.n_dropped,
        skipped_flag: ci.dropped_fraction() > 0.01,
    })
}

/// `z(P_h) - z(P_f)` with each rate clamped by its own trial count.
pub fn dprime(counts: &Counts) -> Result<f64, RecognitionError> {
    if counts.n_old() == 0 {
        return Err(RecognitionError::NoOldTrials);
    }
    if counts.n_new() == 0 {
        return Err(RecognitionError::NoNewTrials);
    }
    let zh = stats::probit_clamped(counts.hit_rate(), counts.n_old() as usize)?;
    let zf = stats::probit_clamped(counts.false_alarm_rate(), counts.n_new() as usize)?;
    Ok(zh - zf)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DPrimePoint {
    pub position: u8,
    pub p_h: f64,
    pub p_f: f64,
    pub n_old: u64,
    pub n_new: u64,
    pub dprime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DPrimeCurve {
    pub points: Vec<DPrimePoint>,
    /// Positions lacking old or new trials.
    pub omitted: Vec<u8>,
    /// Linear fit of d′ on position; absent with fewer than three points.
    pub fit: Option<LinearFit>,
}

/// d′ at each probe position, plus its linear trend over positions.
pub fn dprime_by_position(trials: &[RecognitionTrial]) -> Result<DPrimeCurve, RecognitionError> {
    let mut by: BTreeMap<u8, Counts> = BTreeMap::new();
    for t in trials {
        by.entry(t.probe_position).or_default().add(t);
    }
    let mut points = Vec::new();
    let mut omitted = Vec::new();
    for (&position, c) in &by {
        if c.n_old() == 0 || c.n_new() == 0 {
            omitted.push(position);
            continue;
        }
        points.push(DPrimePoint {
            position,
            p_h: c.hit_rate(),
            p_f: c.false_alarm_rate(),
            n_old: c.n_old(),
            n_new: c.n_new(),
            dprime: dprime(c)?,
        });
    }
    if points.is_empty() {
        return Err(RecognitionError::NoPositions);
    }
    let fit = if points.len() >= 3 {
        let x: Vec<f64> = points.iter().map(|p| f64::from(p.position)).collect();
        let y: Vec<f64> = points.iter().map(|p| p.dprime).collect();
        Some(stats::linear_fit(&x, &y)?)
    } else {
        None
    };
    Ok(DPrimeCurve {
        points,
        omitted,
        fit,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClauseKey {
    pub narrative_id: String,
    pub clause_index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseHitRate {
    pub key: ClauseKey,
    pub hits: u64,
    pub n: u64,
}

impl ClauseHitRate {
    pub fn p_h(&self) -> f64 {
        self.hits as f64 / self.n as f64
    }
}

/// Per-clause hit rate from old-probe trials only; lures never contribute.
pub fn clause_hit_rates(trials: &[RecognitionTrial]) -> Vec<ClauseHitRate> {
    let mut by: BTreeMap<ClauseKey, (u64, u64)> = BTreeMap::new();
    for t in trials {
        if let ProbeItem::Old { clause_index } = t.item {
            let e = by
                .entry(ClauseKey {
                    narrative_id: t.narrative_id.clone(),
                    clause_index,
                })
                .or_default();
            e.1 += 1;
            if t.response_yes {
                e.0 += 1;
            }
        }
    }
    by.into_iter()
        .map(|(key, (hits, n))| ClauseHitRate { key, hits, n })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitRateByRecall {
    pub bins: Binned,
    /// Correlation on the unbinned clause cloud.
    pub result: CorrelationResult,
    pub n_clauses: usize,
    /// Clauses with a recall probability that were never probed.
    pub unprobed: usize,
}

/// Joins clause hit rates with `P_rec` by (narrative, clause), bins `P_h` over
/// `P_rec` and correlates the unbinned points.
pub fn hit_rate_by_recall_bin(
    hit_rates: &[ClauseHitRate],
    p_rec: &BTreeMap<ClauseKey, f64>,
    spec: BinSpec,
    n_resamples: usize,
    seed: u64,
) -> Result<HitRateByRecall, RecognitionError> {
    let missing: Vec<ClauseKey> = hit_rates
        .iter()
        .filter(|h| !p_rec.contains_key(&h.key))
        .map(|h| h.key.clone())
        .collect();
    if !missing.is_empty() {
        return Err(RecognitionError::JoinMismatch(missing));
    }
    let mut x = Vec::with_capacity(hit_rates.len());
    let mut y = Vec::with_capacity(hit_rates.len());
    for h in hit_rates.iter().filter(|h| h.n > 0) {
        x.push(p_rec[&h.key]);
        y.push(h.p_h());
    }
    let unprobed = p_rec.len() - x.len();
    let result = stats::correlate(&x, &y, n_resamples, 0.05, seed)?;
    let bins = stats::bin_means(
        &x,
        &y,
        BinSpec {
            n_bins: spec.n_bins.min(x.len()),
            ..spec
        },
    )?;
    Ok(HitRateByRecall {
        bins,
        result,
        n_clauses: x.len(),
        unprobed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LureLabel;
    use alloc::string::ToString;
    use alloc::vec;

    fn trial(p: &str, pos: u8, old: bool, yes: bool) -> RecognitionTrial {
        RecognitionTrial {
            participant_id: p.to_string(),
            narrative_id: "n".into(),
            probe_position: pos,
            item: if old {
                ProbeItem::Old {
                    clause_index: u32::from(pos),
                }
            } else {
                ProbeItem::New {
                    label: LureLabel(u32::from(pos)),
                }
            },
            is_old: old,
            response_yes: yes,
            timestamp: String::new(),
        }
    }

    #[test]
    fn rate_examples() {
        let mut t = Vec::new();
        for i in 0..10 {
            t.push(trial("a", i, true, i < 8));
            t.push(trial("a", i, false, i < 2));
        }
        let r = rates(&t).unwrap();
        assert_eq!((r.p_h, r.p_f), (0.8, 0.2));
        assert_eq!(r.counts.misses, 2);
        assert_eq!(rates(&t[..1]), Err(RecognitionError::NoNewTrials));
        assert_eq!(rates(&[]), Err(RecognitionError::NoOldTrials));
    }

    #[test]
    fn retained_examples() {
        assert_eq!(retained_estimate(1.0, 0.0, 19).unwrap().m, 19.0);
        assert_eq!(retained_estimate(0.3, 0.3, 19).unwrap().m, 0.0);
        assert!((retained_estimate(0.8, 0.2, 54).unwrap().m - 40.5).abs() < 1e-12);
        let neg = retained_estimate(0.1, 0.3, 10).unwrap();
        assert!(neg.negative && neg.m < 0.0);
        assert_eq!(
            retained_estimate(0.5, 1.0, 10),
            Err(RecognitionError::Singular)
        );
    }

    #[test]
    fn identical_participants_have_zero_stderr() {
        let mut t = Vec::new();
        for p in ["a", "b", "c"] {
            t.push(trial(p, 1, true, true));
            t.push(trial(p, 2, false, false));
            t.push(trial(p, 3, true, false));
        }
        let s = retained_with_bootstrap(&t, 19, 200, 5).unwrap();
        assert_eq!(s.m_stderr, 0.0);
        assert_eq!(s.m, 9.5);
        assert_eq!(s, retained_with_bootstrap(&t, 19, 200, 5).unwrap());
    }

    #[test]
    fn dprime_values() {
        let even = Counts {
            hits: 5,
            misses: 5,
            false_alarms: 5,
            correct_rejections: 5,
        };
        assert_eq!(dprime(&even).unwrap(), 0.0);
        let c = Counts {
            hits: 9772,
            misses: 228,
            false_alarms: 5000,
            correct_rejections: 5000,
        };
        assert!((dprime(&c).unwrap() - 1.999_077_214_971_769_3).abs() < 1e-9);
        let scaled = Counts {
            hits: 2 * 9772,
            misses: 2 * 228,
            false_alarms: 2 * 5000,
            correct_rejections: 2 * 5000,
        };
        assert!((dprime(&scaled).unwrap() - dprime(&c).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn positions_without_both_kinds_are_omitted() {
        let t = vec![
            trial("a", 1, true, true),
            trial("a", 1, false, false),
            trial("a", 2, true, true),
        ];
        let c = dprime_by_position(&t).unwrap();
        assert_eq!(c.points.len(), 1);
        assert_eq!(c.omitted, vec![2]);
        assert!(c.fit.is_none());
        assert_eq!(
            dprime_by_position(&t[2..]),
            Err(RecognitionError::NoPositions)
        );
    }

    #[test]
    fn hit_rate_join() {
        let mut t = Vec::new();
        for (i, p) in ["a", "b", "c", "d"].iter().enumerate() {
            for pos in 1..=4u8 {
                t.push(trial(p, pos, true, usize::from(pos) > i));
            }
            t.push(trial(p, 9, false, true));
        }
        let hr = clause_hit_rates(&t);
        assert_eq!(hr.len(), 4);
        let mut p_rec = BTreeMap::new();
        for h in &hr {
            p_rec.insert(h.key.clone(), h.p_h());
        }
        p_rec.insert(
            ClauseKey {
                narrative_id: "n".into(),
                clause_index: 7,
            },
            0.3,
        );
        let out = hit_rate_by_recall_bin(&hr, &p_rec, BinSpec::equal_count(2), 100, 1).unwrap();
        assert!((out.result.r - 1.0).abs() < 1e-12);
        assert_eq!(out.unprobed, 1);
        for b in &out.bins.bins {
            assert!((b.y_mean - b.x_center).abs() < 0.2);
        }
        p_rec.remove(&hr[0].key);
        assert!(matches!(
            hit_rate_by_recall_bin(&hr, &p_rec, BinSpec::equal_count(2), 100, 1),
            Err(RecognitionError::JoinMismatch(_))
        ));
    }

    #[test]
    fn inconsistent_trials_rejected() {
        let mut t = trial("a", 1, true, true);
        t.is_old = false;
        assert!(check_trials(&[t]).is_err());
    }
}
