//! Agreement between scorers (models and humans) on a shared set of recalls.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::stats;

pub const MEAN_HUMAN: &str = "mean human";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReliabilityError {
    #[error("scorer {scorer}: matrix is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    Shape {
        scorer: String,
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("need at least {need} {what}, got {got}")]
    TooFew {
        need: usize,
        got: usize,
        what: &'static str,
    },
    #[error("duplicate scorer id {0}")]
    Duplicate(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scorer {
    pub id: String,
    pub human: bool,
    /// Recalls by clauses.
    pub cells: Vec<Vec<bool>>,
}

impl Scorer {
    pub fn p_rec(&self) -> Vec<f64> {
        let n = self.cells.len() as f64;
        let l = self.cells.first().map_or(0, Vec::len);
        (0..l)
            .map(|c| self.cells.iter().filter(|row| row[c]).count() as f64 / n)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerMatrixSet {
    pub recall_ids: Vec<String>,
    pub n_clauses: usize,
    pub scorers: Vec<Scorer>,
}

impl ScorerMatrixSet {
    pub fn new(
        recall_ids: Vec<String>,
        n_clauses: usize,
        scorers: Vec<Scorer>,
    ) -> Result<Self, ReliabilityError> {
        for (i, s) in scorers.iter().enumerate() {
            if scorers[..i].iter().any(|o| o.id == s.id) {
                return Err(ReliabilityError::Duplicate(s.id.clone()));
            }
            let bad_cols = s.cells.iter().any(|r| r.len() != n_clauses);
            if s.cells.len() != recall_ids.len() || bad_cols {
                return Err(ReliabilityError::Shape {
                    scorer: s.id.clone(),
                    rows: s.cells.len(),
                    cols: s
                        .cells
                        .iter()
                        .map(Vec::len)
                        .find(|&c| c != n_clauses)
                        .unwrap_or(n_clauses),
                    expected_rows: recall_ids.len(),
                    expected_cols: n_clauses,
                });
            }
        }
        Ok(Self {
            recall_ids,
            n_clauses,
            scorers,
        })
    }

    pub fn humans(&self) -> impl Iterator<Item = &Scorer> {
        self.scorers.iter().filter(|s| s.human)
    }

    /// Mean of the human scorers' `P_rec` vectors, if any humans are present.
    pub fn mean_human_p_rec(&self) -> Option<Vec<f64>> {
        let humans: Vec<Vec<f64>> = self.humans().map(Scorer::p_rec).collect();
        if humans.is_empty() {
            return None;
        }
        let k = humans.len() as f64;
        Some(
            (0..self.n_clauses)
                .map(|c| humans.iter().map(|h| h[c]).sum::<f64>() / k)
                .collect(),
        )
    }
}

/// Symmetric table of pairwise `P_rec` correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub labels: Vec<String>,
    /// `r[i][j]`; NaN where either column has zero variance.
    pub r: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
}

impl CorrelationTable {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        Some(self.r[i][j])
    }
}

/// Pairwise correlations of per-clause `P_rec` between scorers, with a
/// "mean human" column appended when at least one human scorer is present.
pub fn scorer_correlations(set: &ScorerMatrixSet) -> Result<CorrelationTable, ReliabilityError> {
    if set.scorers.len() < 2 {
        return Err(ReliabilityError::TooFew {
            need: 2,
            got: set.scorers.len(),
            what: "scorers",
        });
    }
    let mut labels: Vec<String> = set.scorers.iter().map(|s| s.id.clone()).collect();
    let mut columns: Vec<Vec<f64>> = set.scorers.iter().map(Scorer::p_rec).collect();
    if let Some(mh) = set.mean_human_p_rec() {
        labels.push(MEAN_HUMAN.into());
        columns.push(mh);
    }
    let k = columns.len();
    let mut r = alloc::vec![alloc::vec![f64::NAN; k]; k];
    let mut p = alloc::vec![alloc::vec![f64::NAN; k]; k];
    for i in 0..k {
        r[i][i] = 1.0;
        p[i][i] = 0.0;
        for j in i + 1..k {
            if let Ok(v) = stats::pearson_r(&columns[i], &columns[j]) {
                r[i][j] = v;
                r[j][i] = v;
                let pv = stats::wald_p(v, columns[i].len()).unwrap_or(f64::NAN);
                p[i][j] = pv;
                p[j][i] = pv;
            }
        }
    }
    Ok(CorrelationTable { labels, r, p })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeBand {
    pub rows: Vec<BandRow>,
    /// Only one human scorer, so min = mean = max.
    pub degenerate: bool,
}

/// Per-clause envelope of human `P_rec`.
pub fn range_band(set: &ScorerMatrixSet) -> Result<RangeBand, ReliabilityError> {
    let humans: Vec<Vec<f64>> = set.humans().map(Scorer::p_rec).collect();
    if humans.is_empty() {
        return Err(ReliabilityError::TooFew {
            need: 1,
            got: 0,
            what: "human scorers",
        });
    }
    let rows = (0..set.n_clauses)
        .map(|c| {
            let vals: Vec<f64> = humans.iter().map(|h| h[c]).collect();
            BandRow {
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                mean: stats::mean(&vals),
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    Ok(RangeBand {
        rows,
        degenerate: humans.len() == 1,
    })
}
