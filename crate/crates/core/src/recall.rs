//! Recall statistics from scored recalls: `P_rec`, `R`, `C`, recall order,
//! serial-position curves, CDFs and descrambling correlations.
//!
//! `scored_set` always uses original clause numbering. `ordered_sequence` keeps
//! the numbering the scorer saw, which for a scrambled narrative is the
//! presentation position; [`order_columns`] maps it back.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::Narrative;
use crate::math::sqrt;
use crate::stats::{self, CorrelationResult, StatsError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecallRecord {
    pub participant_id: String,
    pub narrative_id: String,
    pub recall_text: String,
    pub scored_set: BTreeSet<u32>,
    #[serde(default)]
    pub ordered_sequence: Vec<u32>,
    /// Number of clauses in the recall's own segmentation (`C_i`).
    #[serde(default)]
    pub recall_clause_count: Option<u32>,
    pub scorer_id: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecallError {
    #[error("no recall records")]
    Empty,
    #[error("need at least {need} participants, got {got}")]
    TooFewParticipants { need: usize, got: usize },
    #[error("record for {participant} belongs to `{found}`, expected `{expected}`")]
    WrongNarrative {
        participant: String,
        expected: String,
        found: String,
    },
    #[error("participant {0} appears twice")]
    DuplicateParticipant(String),
    #[error("participant {participant}: clause index {index} outside 1..={l}")]
    IndexOutOfRange {
        participant: String,
        index: u32,
        l: usize,
    },
    #[error("recall clause count missing for: {0:?}")]
    MissingCounts(Vec<String>),
    #[error("{0} and {1} values do not align")]
    Length(usize, usize),
    #[error("no ordered sequence with at least two clauses")]
    InsufficientOrderData,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Participants by clauses, `true` where the clause was recalled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecallMatrix {
    pub narrative_id: String,
    pub participants: Vec<String>,
    pub cells: Vec<Vec<bool>>,
}

impl RecallMatrix {
    /// One row per record, in record order. Every record must belong to
    /// `narrative` and use indices in `1..=L`.
    pub fn from_records(
        records: &[RecallRecord],
        narrative: &Narrative,
    ) -> Result<Self, RecallError> {
        let l = narrative.len();
        let mut seen = BTreeSet::new();
        let mut participants = Vec::with_capacity(records.len());
        let mut cells = Vec::with_capacity(records.len());
        for r in records {
            if r.narrative_id != narrative.id {
                return Err(RecallError::WrongNarrative {
                    participant: r.participant_id.clone(),
                    expected: narrative.id.clone(),
                    found: r.narrative_id.clone(),
                });
            }
            if !seen.insert(r.participant_id.as_str()) {
                return Err(RecallError::DuplicateParticipant(r.participant_id.clone()));
            }
            let mut row = alloc::vec![false; l];
            for &k in &r.scored_set {
                if k == 0 || k as usize > l {
                    return Err(RecallError::IndexOutOfRange {
                        participant: r.participant_id.clone(),
                        index: k,
                        l,
                    });
                }
                row[k as usize - 1] = true;
            }
            participants.push(r.participant_id.clone());
            cells.push(row);
        }
        Ok(Self {
            narrative_id: narrative.id.clone(),
            participants,
            cells,
        })
    }

    pub fn n_clauses(&self) -> usize {
        self.cells.first().map_or(0, Vec::len)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.cells
            .iter()
            .map(|row| row.iter().filter(|&&c| c).count() as f64)
            .collect()
    }
}

/// Fraction of participants recalling each clause (column means).
pub fn p_rec(matrix: &RecallMatrix) -> Result<Vec<f64>, RecallError> {
    let n = matrix.cells.len();
    if n == 0 {
        return Err(RecallError::TooFewParticipants { need: 1, got: 0 });
    }
    let l = matrix.n_clauses();
    Ok((0..l)
        .map(|c| matrix.cells.iter().filter(|row| row[c]).count() as f64 / n as f64)
        .collect())
}

/// Mean and standard error of a per-participant quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

fn mean_se(values: &[f64]) -> MeanSe {
    MeanSe {
        mean: stats::mean(values),
        stderr: stats::sample_sd(values) / sqrt(values.len() as f64),
        n: values.len(),
    }
}

/// Mean number of recalled clauses per participant (`R`) and its standard error.
pub fn mean_recall(matrix: &RecallMatrix) -> Result<MeanSe, RecallError> {
    let n = matrix.cells.len();
    if n < 2 {
        return Err(RecallError::TooFewParticipants { need: 2, got: n });
    }
    Ok(mean_se(&matrix.row_sums()))
}

/// Mean number of clauses in the recalls themselves (`C`) and its standard
/// error.
pub fn mean_recall_clause_count(records: &[RecallRecord]) -> Result<MeanSe, RecallError> {
    if records.is_empty() {
        return Err(RecallError::Empty);
    }
    let missing: Vec<String> = records
        .iter()
        .filter(|r| r.recall_clause_count.is_none())
        .map(|r| r.participant_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(RecallError::MissingCounts(missing));
    }
    let counts: Vec<f64> = records
        .iter()
        .filter_map(|r| r.recall_clause_count)
        .map(f64::from)
        .collect();
    let mut m = mean_se(&counts);
    if counts.len() == 1 {
        m.stderr = f64::NAN;
    }
    Ok(m)
}

/// Recall order of one trial in original clause numbering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderColumn {
    pub participant_id: String,
    pub original_indices: Vec<u32>,
}

/// Recall orders mapped to original clause numbering, sorted by participant id.
pub fn order_columns(
    records: &[RecallRecord],
    narrative: &Narrative,
) -> Result<Vec<OrderColumn>, RecallError> {
    let mut cols = Vec::with_capacity(records.len());
    for r in records {
        let mut mapped = Vec::with_capacity(r.ordered_sequence.len());
        for &k in &r.ordered_sequence {
            let orig =
                narrative
                    .original_index_at(k)
                    .ok_or_else(|| RecallError::IndexOutOfRange {
                        participant: r.participant_id.clone(),
                        index: k,
                        l: narrative.len(),
                    })?;
            mapped.push(orig);
        }
        cols.push(OrderColumn {
            participant_id: r.participant_id.clone(),
            original_indices: mapped,
        });
    }
    cols.sort_by(|a, b| a.participant_id.cmp(&b.participant_id));
    Ok(cols)
}

/// `P_rec` indexed by presentation position (identical to `p_rec` for intact
/// narratives). `p_rec` is in original clause order.
pub fn serial_position_curve(
    p_rec: &[f64],
    narrative: &Narrative,
) -> Result<Vec<f64>, RecallError> {
    if p_rec.len() != narrative.len() {
        return Err(RecallError::Length(p_rec.len(), narrative.len()));
    }
    Ok(narrative
        .presentation_map()
        .iter()
        .map(|&orig| p_rec[orig as usize - 1])
        .collect())
}

/// `F(p)`, the fraction of clauses with `P_rec > p`, on the grid
/// `p = 0, 0.01, ..., 1`.
pub fn recall_cdf(p_rec: &[f64]) -> Vec<(f64, f64)> {
    let n = p_rec.len() as f64;
    (0..=100)
        .map(|i| {
            let p = i as f64 / 100.0;
            let above = p_rec.iter().filter(|&&v| v > p).count() as f64;
            (p, if n > 0.0 { above / n } else { 0.0 })
        })
        .collect()
}

/// Aligns scrambled-condition `P_rec` (by presentation position) to original
/// clause identity.
pub fn align_scrambled(
    p_rec_by_position: &[f64],
    narrative: &Narrative,
) -> Result<Vec<f64>, RecallError> {
    if p_rec_by_position.len() != narrative.len() {
        return Err(RecallError::Length(
            p_rec_by_position.len(),
            narrative.len(),
        ));
    }
    let mut aligned = alloc::vec![0.0; narrative.len()];
    for (pos, &orig) in narrative.presentation_map().iter().enumerate() {
        aligned[orig as usize - 1] = p_rec_by_position[pos];
    }
    Ok(aligned)
}

/// Correlation of `P_rec` for the same clause in the intact and scrambled
/// conditions, with a clause-pair bootstrap CI.
pub fn descrambling_correlation(
    p_rec_intact: &[f64],
    p_rec_scrambled_by_position: &[f64],
    scrambled: &Narrative,
    n_resamples: usize,
    seed: u64,
) -> Result<CorrelationResult, RecallError> {
    let aligned = align_scrambled(p_rec_scrambled_by_position, scrambled)?;
    if aligned.len() != p_rec_intact.len() {
        return Err(RecallError::Length(p_rec_intact.len(), aligned.len()));
    }
    Ok(stats::correlate(
        p_rec_intact,
        &aligned,
        n_resamples,
        0.05,
        seed,
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescrambleTendency {
    /// Mean Kendall tau of recall order against original clause order.
    pub tau_original: f64,
    /// Mean Kendall tau of recall order against presentation order.
    pub tau_presented: f64,
    pub n_used: usize,
}

/// How strongly recalls of a scrambled narrative follow the original versus
/// the presented clause order. Sequences shorter than two are skipped.
pub fn descramble_tendency(
    records: &[RecallRecord],
    narrative: &Narrative,
) -> Result<DescrambleTendency, RecallError> {
    let (mut sum_o, mut sum_p, mut n) = (0.0, 0.0, 0usize);
    for col in records {
        if col.ordered_sequence.len() < 2 {
            continue;
        }
        let rank: Vec<f64> = (0..col.ordered_sequence.len()).map(|i| i as f64).collect();
        let presented: Vec<f64> = col.ordered_sequence.iter().map(|&k| f64::from(k)).collect();
        let mut original = Vec::with_capacity(presented.len());
        for &k in &col.ordered_sequence {
            let o = narrative
                .original_index_at(k)
                .ok_or_else(|| RecallError::IndexOutOfRange {
                    participant: col.participant_id.clone(),
                    index: k,
                    l: narrative.len(),
                })?;
            original.push(f64::from(o));
        }
        sum_o += stats::kendall_tau_b(&rank, &original)?;
        sum_p += stats::kendall_tau_b(&rank, &presented)?;
        n += 1;
    }
    if n == 0 {
        return Err(RecallError::InsufficientOrderData);
    }
    Ok(DescrambleTendency {
        tau_original: sum_o / n as f64,
        tau_presented: sum_p / n as f64,
        n_used: n,
    })
}

/// Per-narrative `R` and `C` summary used for the compression plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Compression {
    pub r: MeanSe,
    pub c: MeanSe,
}

/// Groups records by narrative id, preserving first-seen order of ids.
pub fn group_by_narrative(records: &[RecallRecord]) -> BTreeMap<String, Vec<RecallRecord>> {
    let mut out: BTreeMap<String, Vec<RecallRecord>> = BTreeMap::new();
    for r in records {
        out.entry(r.narrative_id.clone())
            .or_default()
            .push(r.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn toy(l: usize) -> Narrative {
        Narrative::intact(
            "toy",
            "Toy",
            (1..=l)
                .map(|i| alloc::format!("clause {i}."))
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    fn rec(p: &str, set: &[u32]) -> RecallRecord {
        RecallRecord {
            participant_id: p.to_string(),
            narrative_id: "toy".into(),
            recall_text: String::new(),
            scored_set: set.iter().copied().collect(),
            ordered_sequence: set.to_vec(),
            recall_clause_count: Some(set.len() as u32),
            scorer_id: "mock".into(),
        }
    }

    #[test]
    fn p_rec_and_r() {
        let n = toy(3);
        let m = RecallMatrix::from_records(&[rec("a", &[1]), rec("b", &[2]), rec("c", &[3])], &n)
            .unwrap();
        let r = mean_recall(&m).unwrap();
        assert_eq!((r.mean, r.stderr), (1.0, 0.0));
        assert_eq!(p_rec(&m).unwrap(), vec![1.0 / 3.0; 3]);
        let m = RecallMatrix::from_records(&[rec("a", &[1]), rec("b", &[])], &n).unwrap();
        assert_eq!(p_rec(&m).unwrap(), vec![0.5, 0.0, 0.0]);
        let empty = RecallMatrix::from_records(&[rec("a", &[]), rec("b", &[])], &n).unwrap();
        assert_eq!(mean_recall(&empty).unwrap().mean, 0.0);
    }

    #[test]
    fn matrix_validation() {
        let n = toy(3);
        assert!(matches!(
            RecallMatrix::from_records(&[rec("a", &[4])], &n),
            Err(RecallError::IndexOutOfRange { index: 4, .. })
        ));
        assert!(matches!(
            RecallMatrix::from_records(&[rec("a", &[1]), rec("a", &[2])], &n),
            Err(RecallError::DuplicateParticipant(_))
        ));
    }

    #[test]
    fn clause_count_errors() {
        assert_eq!(mean_recall_clause_count(&[]), Err(RecallError::Empty));
        let mut r = rec("x", &[1]);
        r.recall_clause_count = None;
        assert_eq!(
            mean_recall_clause_count(&[rec("a", &[1]), r]),
            Err(RecallError::MissingCounts(vec!["x".to_string()]))
        );
        let mut a = rec("a", &[]);
        a.recall_clause_count = Some(10);
        let c = mean_recall_clause_count(&[a.clone(), a.clone(), a]).unwrap();
        assert_eq!((c.mean, c.stderr), (10.0, 0.0));
    }

    #[test]
    fn cdf_examples() {
        let f = recall_cdf(&[0.5; 4]);
        assert_eq!(f[49].1, 1.0);
        assert_eq!(f[50].1, 0.0);
        let vals: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        assert_eq!(recall_cdf(&vals)[55].1, 0.5);
        assert_eq!(recall_cdf(&vals)[100].1, 0.0);
        assert_eq!(recall_cdf(&[0.0, 0.0, 0.3, 1.0])[0].1, 0.5);
    }

    #[test]
    fn scrambled_alignment() {
        let intact = toy(5);
        let mut s = intact.clone();
        s.clauses = vec![
            intact.clauses[2].clone(),
            intact.clauses[0].clone(),
            intact.clauses[4].clone(),
            intact.clauses[1].clone(),
            intact.clauses[3].clone(),
        ];
        s.kind = crate::NarrativeKind::Scrambled;
        s.permutation = Some(vec![3, 1, 5, 2, 4]);
        s.validate().unwrap();
        let p = vec![0.1, 0.5, 0.2, 0.9, 0.4];
        let by_pos = serial_position_curve(&p, &s).unwrap();
        assert_eq!(by_pos, vec![0.2, 0.1, 0.4, 0.5, 0.9]);
        assert_eq!(align_scrambled(&by_pos, &s).unwrap(), p);
        let c = descrambling_correlation(&p, &by_pos, &s, 50, 0).unwrap();
        assert!((c.r - 1.0).abs() < 1e-12);
        // skipping the alignment breaks the correlation
        assert!(stats::pearson_r(&p, &by_pos).unwrap() < 0.99);
    }

    #[test]
    fn tendency_extremes() {
        let intact = toy(4);
        let mut s = intact.clone();
        s.clauses = vec![
            intact.clauses[3].clone(),
            intact.clauses[1].clone(),
            intact.clauses[0].clone(),
            intact.clauses[2].clone(),
        ];
        s.kind = crate::NarrativeKind::Scrambled;
        s.permutation = Some(vec![4, 2, 1, 3]);
        // original order 1,2,3,4 is presentation positions 3,2,4,1
        let mut r = rec("a", &[]);
        r.ordered_sequence = vec![3, 2, 4, 1];
        let t = descramble_tendency(&[r.clone()], &s).unwrap();
        assert!((t.tau_original - 1.0).abs() < 1e-12);
        r.ordered_sequence = vec![1, 2, 3, 4];
        let t = descramble_tendency(&[r.clone()], &s).unwrap();
        assert!((t.tau_presented - 1.0).abs() < 1e-12);
        r.ordered_sequence = vec![1, 4, 2, 3];
        let t = descramble_tendency(&[r.clone()], &s).unwrap();
        assert!((t.tau_original + 1.0).abs() < 1e-12);
        r.ordered_sequence = vec![1];
        assert_eq!(
            descramble_tendency(&[r], &s),
            Err(RecallError::InsufficientOrderData)
        );
    }

    #[test]
    fn order_columns_intact_verbatim() {
        let n = toy(20);
        let mut r = rec("b", &[]);
        r.ordered_sequence = vec![14, 7, 8, 9, 15, 16, 17, 19];
        let cols = order_columns(&[r.clone(), rec("a", &[2])], &n).unwrap();
        assert_eq!(cols[0].participant_id, "a");
        assert_eq!(cols[1].original_indices, r.ordered_sequence);
        r.ordered_sequence = vec![21];
        assert!(order_columns(&[r], &n).is_err());
    }
}
