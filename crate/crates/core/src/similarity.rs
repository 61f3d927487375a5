//! Clause-to-narrative cosine similarity and its relation to recall.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{assemble_prose, Narrative};
use crate::math::sqrt;
use crate::stats::{self, BinSpec, Binned, CorrelationResult, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub model_id: String,
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyInput,
    #[error("text of {chars} chars exceeds the {limit}-char limit")]
    TooLong { chars: usize, limit: usize },
    #[error("embedding provider failed: {0}")]
    Provider(String),
}

/// Text embedding model.
pub trait Embedder {
    fn model_id(&self) -> &str;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        (**self).embed(text)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimilarityError {
    #[error("embedding clause {clause}: {source}")]
    EmbedClause { clause: u32, source: EmbedError },
    #[error("embedding narrative: {0}")]
    EmbedNarrative(EmbedError),
    #[error("similarity scores are defined on intact narratives; got scrambled `{0}`")]
    Scrambled(String),
    #[error("zero-norm embedding for clause {0}")]
    ZeroNorm(u32),
    #[error("model {model}: dimension {found} differs from {expected}")]
    DimMismatch {
        model: String,
        expected: usize,
        found: usize,
    },
    #[error("{0} scores but {1} recall probabilities")]
    Length(usize, usize),
    #[error("need at least {need} {what}")]
    TooFew { need: usize, what: &'static str },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`. `None` when
/// either has zero norm or the lengths differ.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = sqrt(a.iter().map(|x| x * x).sum());
    let nb = sqrt(b.iter().map(|x| x * x).sum());
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityProfile {
    pub narrative_id: String,
    pub model_id: String,
    /// `S_i` for clause `i`, in original clause order.
    pub scores: Vec<f64>,
    pub narrative_embedding_dim: usize,
}

/// Cosine similarity of each clause's embedding with the embedding of the
/// whole prose (which contains the clause). The prose is embedded once.
pub fn similarity_scores<E: Embedder + ?Sized>(
    narrative: &Narrative,
    embedder: &E,
) -> Result<SimilarityProfile, SimilarityError> {
    if narrative.is_scrambled() {
        return Err(SimilarityError::Scrambled(narrative.id.clone()));
    }
    let whole = embedder
        .embed(&assemble_prose(narrative))
        .map_err(SimilarityError::EmbedNarrative)?;
    let dim = whole.dim();
    let mut scores = Vec::with_capacity(narrative.len());
    for clause in &narrative.clauses {
        let e = embedder
            .embed(&clause.text)
            .map_err(|source| SimilarityError::EmbedClause {
                clause: clause.index,
                source,
            })?;
        if e.dim() != dim {
            return Err(SimilarityError::DimMismatch {
                model: embedder.model_id().to_string(),
                expected: dim,
                found: e.dim(),
            });
        }
        let s = cosine(&e.values, &whole.values).ok_or(SimilarityError::ZeroNorm(clause.index))?;
        scores.push(s);
    }
    Ok(SimilarityProfile {
        narrative_id: narrative.id.clone(),
        model_id: embedder.model_id().to_string(),
        scores,
        narrative_embedding_dim: dim,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityCorrelation {
    pub result: CorrelationResult,
    pub bins: Binned,
}

/// Correlation of `S` with `P_rec` across clauses, with a pair bootstrap CI
/// and equal-width bin means of `P_rec` over `S`.
pub fn recall_similarity_correlation(
    scores: &[f64],
    p_rec: &[f64],
    n_bins: usize,
    n_resamples: usize,
    seed: u64,
) -> Result<SimilarityCorrelation, SimilarityError> {
    if scores.len() != p_rec.len() {
        return Err(SimilarityError::Length(scores.len(), p_rec.len()));
    }
    let result = stats::correlate(scores, p_rec, n_resamples, 0.05, seed)?;
    let bins = stats::bin_means(
        scores,
        p_rec,
        BinSpec::equal_width(n_bins.min(scores.len())),
    )?;
    Ok(SimilarityCorrelation { result, bins })
}

/// Significance marker with strict thresholds 0.001, 0.01 and 0.05.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Significance {
    #[serde(rename = "***")]
    P001,
    #[serde(rename = "**")]
    P01,
    #[serde(rename = "*")]
    P05,
    #[serde(rename = "ns")]
    NotSignificant,
}

impl Significance {
    pub fn from_p(p: f64) -> Self {
        if p < 0.001 {
            Significance::P001
        } else if p < 0.01 {
            Significance::P01
        } else if p < 0.05 {
            Significance::P05
        } else {
            Significance::NotSignificant
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Significance::P001 => "***",
            Significance::P01 => "**",
            Significance::P05 => "*",
            Significance::NotSignificant => "ns",
        }
    }
}

impl fmt::Display for Significance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub narrative_id: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub r: f64,
    pub p_value: f64,
    pub significance: Significance,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// One row per narrative, sorted by length then id.
pub fn r_vs_length_summary(results: &[(String, usize, CorrelationResult)]) -> Vec<LengthRow> {
    let mut rows: Vec<LengthRow> = results
        .iter()
        .map(|(id, l, c)| LengthRow {
            narrative_id: id.clone(),
            l: *l,
            r: c.r,
            p_value: c.p_value,
            significance: Significance::from_p(c.p_value),
            ci_low: c.ci_low,
            ci_high: c.ci_high,
        })
        .collect();
    rows.sort_by(|a, b| {
        a.l.cmp(&b.l)
            .then_with(|| a.narrative_id.cmp(&b.narrative_id))
    });
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledZ {
    pub result: CorrelationResult,
    pub n_narratives: usize,
    /// Only one narrative was supplied, so the pooled value is that
    /// narrative's own correlation.
    pub degenerate: bool,
}

/// Z-scores `S` and `P_rec` within each narrative, concatenates them and
/// correlates the pooled cloud.
pub fn pooled_z_analysis(
    groups: &[(&[f64], &[f64])],
    n_resamples: usize,
    seed: u64,
) -> Result<PooledZ, SimilarityError> {
    if groups.is_empty() {
        return Err(SimilarityError::TooFew {
            need: 1,
            what: "narrative",
        });
    }
    let mut zs = Vec::new();
    let mut zp = Vec::new();
    for (s, p) in groups {
        if s.len() != p.len() {
            return Err(SimilarityError::Length(s.len(), p.len()));
        }
        zs.extend(stats::zscores(s)?);
        zp.extend(stats::zscores(p)?);
    }
    let result = stats::correlate(&zs, &zp, n_resamples, 0.05, seed)?;
    Ok(PooledZ {
        result,
        n_narratives: groups.len(),
        degenerate: groups.len() == 1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossModel {
    pub model_a: String,
    pub model_b: String,
    /// Correlation of raw `S` values over all clauses of all narratives.
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderComparison {
    pub models: Vec<String>,
    /// `tables[m]` is the r-vs-length table for `models[m]`.
    pub tables: Vec<Vec<LengthRow>>,
    pub profiles: Vec<Vec<SimilarityProfile>>,
    pub cross: Vec<CrossModel>,
}

/// Runs the similarity analysis for every embedder on every narrative and the
/// pairwise raw-score correlation between models.
pub fn compare_embedders(
    narratives: &[(&Narrative, &[f64])],
    embedders: &[&dyn Embedder],
    n_resamples: usize,
    seed: u64,
) -> Result<EmbedderComparison, SimilarityError> {
    if narratives.is_empty() {
        return Err(SimilarityError::TooFew {
            need: 1,
            what: "narrative",
        });
    }
    if embedders.len() < 2 {
        return Err(SimilarityError::TooFew {
            need: 2,
            what: "embedders",
        });
    }
    let mut models = Vec::new();
    let mut tables = Vec::new();
    let mut profiles = Vec::new();
    for emb in embedders {
        let mut rows = Vec::new();
        let mut model_profiles = Vec::new();
        let mut dim = None;
        for (n, p_rec) in narratives {
            let prof = similarity_scores(n, *emb)?;
            match dim {
                None => dim = Some(prof.narrative_embedding_dim),
                Some(d) if d != prof.narrative_embedding_dim => {
                    return Err(SimilarityError::DimMismatch {
                        model: emb.model_id().to_string(),
                        expected: d,
                        found: prof.narrative_embedding_dim,
                    })
                }
                _ => {}
            }
            let c = recall_similarity_correlation(&prof.scores, p_rec, 4, n_resamples, seed)?;
            rows.push((n.id.clone(), n.len(), c.result));
            model_profiles.push(prof);
        }
        models.push(emb.model_id().to_string());
        tables.push(r_vs_length_summary(&rows));
        profiles.push(model_profiles);
    }
    let mut cross = Vec::new();
    for a in 0..models.len() {
        for b in a + 1..models.len() {
            let xa: Vec<f64> = profiles[a]
                .iter()
                .flat_map(|p| p.scores.iter().copied())
                .collect();
            let xb: Vec<f64> = profiles[b]
                .iter()
                .flat_map(|p| p.scores.iter().copied())
                .collect();
            cross.push(CrossModel {
                model_a: models[a].clone(),
                model_b: models[b].clone(),
                r: stats::pearson_r(&xa, &xb)?,
            });
        }
    }
    Ok(EmbedderComparison {
        models,
        tables,
        profiles,
        cross,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine(&[1.0, 0.0], &[2.0, 0.0]), Some(1.0));
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 3.0]), Some(0.0));
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), None);
        assert_eq!(cosine(&[1.0], &[1.0, 0.0]), None);
    }

    #[test]
    fn significance_boundaries() {
        assert_eq!(Significance::from_p(0.0005), Significance::P001);
        assert_eq!(Significance::from_p(0.001), Significance::P01);
        assert_eq!(Significance::from_p(0.01), Significance::P05);
        assert_eq!(Significance::from_p(0.05), Significance::NotSignificant);
        assert_eq!(Significance::from_p(0.2).as_str(), "ns");
    }

    #[test]
    fn summary_sorted_by_length() {
        let c = CorrelationResult {
            r: 0.5,
            p_value: 0.02,
            ci_low: 0.1,
            ci_high: 0.8,
            n: 19,
        };
        let rows = r_vs_length_summary(&[("b".into(), 54, c), ("a".into(), 19, c)]);
        assert_eq!(rows[0].narrative_id, "a");
        assert_eq!(rows[1].significance, Significance::P05);
    }

    #[test]
    fn pooled_z_removes_offsets() {
        let s1 = [0.1, 0.4, 0.2, 0.9, 0.5];
        let p1 = [0.2, 0.5, 0.1, 0.8, 0.7];
        let s2 = [0.3, 0.1, 0.6, 0.2];
        let p2 = [0.4, 0.3, 0.9, 0.1];
        let a = pooled_z_analysis(&[(&s1, &p1), (&s2, &p2)], 100, 1).unwrap();
        let shifted: Vec<f64> = s2.iter().map(|v| 3.0 * v + 7.0).collect();
        let b = pooled_z_analysis(&[(&s1, &p1), (&shifted, &p2)], 100, 1).unwrap();
        assert!((a.result.r - b.result.r).abs() < 1e-12);
        assert!(!a.degenerate);
        let one = pooled_z_analysis(&[(&s1, &p1)], 100, 1).unwrap();
        assert!(one.degenerate);
        assert!((one.result.r - stats::pearson_r(&s1, &p1).unwrap()).abs() < 1e-12);
    }
}
