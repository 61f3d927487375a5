//! Clause-to-narrative embedding similarity against recall probability, per
//! embedding model.

use std::collections::BTreeMap;
use std::path::PathBuf;

use narrecall_core::similarity::{
    compare_embedders, pooled_z_analysis, r_vs_length_summary, recall_similarity_correlation,
    similarity_scores, CrossModel, Embedder, LengthRow, PooledZ,
};
use narrecall_core::stats::{bin_means, zscores, BinSpec, Binned};
use narrecall_core::Narrative;
use serde::{Deserialize, Serialize};

use super::analyze::{p_rec_by_narrative, Dataset};
use super::{CmdError, Context, Status};
use crate::config::AnalysisConfig;
use crate::io::{self, num, Table};

#[derive(Debug, Clone, Default)]
pub struct SimilarityArgs {
    /// Defaults to the data directory.
    pub dataset: Option<PathBuf>,
    /// Defaults to `<dataset>/similarity`.
    pub out: Option<PathBuf>,
    /// Embedding models; the provider default when empty.
    pub models: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub per_narrative: Vec<LengthRow>,
    pub pooled: Option<PooledZ>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySummary {
    pub models: Vec<ModelSummary>,
    pub cross_model: Vec<CrossModel>,
}

fn push_bins(t: &mut Table, model: &str, scope: &str, b: &Binned) {
    for bin in &b.bins {
        t.push(vec![
            model.into(),
            scope.into(),
            num(bin.x_center),
            num(bin.y_mean),
            num(bin.y_stderr),
            bin.count.to_string(),
        ]);
    }
}

const BIN_HEADER: &[&str] = &[
    "model",
    "narrative",
    "x_center",
    "y_mean",
    "y_stderr",
    "count",
];

/// Similarity tables for intact narratives paired with their `P_rec`.
pub fn similarity_tables(
    narratives: &[(&Narrative, &[f64])],
    embedders: &[&dyn Embedder],
    cfg: &AnalysisConfig,
    seed: u64,
) -> Result<(BTreeMap<String, Table>, SimilaritySummary), CmdError> {
    let mut scores = Table::new(&["model", "narrative", "clause_index", "S", "p_rec"]);
    let mut fig5a = Table::new(BIN_HEADER);
    let mut b6 = Table::new(BIN_HEADER);
    let mut zpoints = Table::new(&["model", "narrative", "clause_index", "z_S", "z_p_rec"]);
    let mut zbins = Table::new(BIN_HEADER);
    let mut lengths = Table::new(&[
        "model",
        "narrative",
        "L",
        "r",
        "p_value",
        "significance",
        "ci_low",
        "ci_high",
    ]);
    let mut summary = SimilaritySummary::default();

    for emb in embedders {
        let model = emb.model_id().to_string();
        let mut rows = Vec::new();
        let mut profiles: Vec<(Vec<f64>, &[f64])> = Vec::new();
        for (n, p) in narratives {
            let prof = similarity_scores(n, *emb)
                .map_err(|e| CmdError::Failed(format!("{}: {e}", n.id)))?;
            for (i, (s, pr)) in prof.scores.iter().zip(p.iter()).enumerate() {
                scores.push(vec![
                    model.clone(),
                    n.id.clone(),
                    (i + 1).to_string(),
                    num(*s),
                    num(*pr),
                ]);
            }
            match recall_similarity_correlation(
                &prof.scores,
                p,
                cfg.similarity_bins,
                cfg.similarity_resamples,
                seed,
            ) {
                Ok(c) => {
                    push_bins(&mut fig5a, &model, &n.id, &c.bins);
                    rows.push((n.id.clone(), n.len(), c.result));
                }
                Err(e) => log::warn!("{model}/{}: no similarity correlation: {e}", n.id),
            }
            match bin_means(
                &prof.scores,
                p,
                BinSpec::equal_width(cfg.similarity_panel_bins.min(p.len())),
            ) {
                Ok(b) => push_bins(&mut b6, &model, &n.id, &b),
                Err(e) => log::warn!("{model}/{}: no panel bins: {e}", n.id),
            }
            profiles.push((prof.scores, p));
        }

        let usable: Vec<(&[f64], &[f64])> = profiles
            .iter()
            .filter(|(s, p)| zscores(s).is_ok() && zscores(p).is_ok())
            .map(|(s, p)| (s.as_slice(), *p))
            .collect();
        let pooled = match pooled_z_analysis(&usable, cfg.similarity_resamples, seed) {
            Ok(z) => {
                let (mut xs, mut ys) = (Vec::new(), Vec::new());
                for ((n, _), (s, p)) in narratives.iter().zip(&profiles) {
                    let (Ok(zs), Ok(zp)) = (zscores(s), zscores(p)) else {
                        continue;
                    };
                    for (i, (a, b)) in zs.iter().zip(&zp).enumerate() {
                        zpoints.push(vec![
                            model.clone(),
                            n.id.clone(),
                            (i + 1).to_string(),
                            num(*a),
                            num(*b),
                        ]);
                    }
                    xs.extend(zs);
                    ys.extend(zp);
                }
                if let Ok(b) = bin_means(
                    &xs,
                    &ys,
                    BinSpec::equal_width(cfg.similarity_bins.min(xs.len())),
                ) {
                    push_bins(&mut zbins, &model, "pooled", &b);
                }
                Some(z)
            }
            Err(e) => {
                log::warn!("{model}: no pooled z analysis: {e}");
                None
            }
        };

        let table = r_vs_length_summary(&rows);
        for r in &table {
            lengths.push(vec![
                model.clone(),
                r.narrative_id.clone(),
                r.l.to_string(),
                num(r.r),
                num(r.p_value),
                r.significance.to_string(),
                num(r.ci_low),
                num(r.ci_high),
            ]);
        }
        summary.models.push(ModelSummary {
            model,
            per_narrative: table,
            pooled,
        });
    }

    let mut tables = BTreeMap::new();
    tables.insert("similarity_scores.csv".to_string(), scores);
    tables.insert("fig5a_similarity_bins.csv".to_string(), fig5a);
    tables.insert("figB6_similarity_panels.csv".to_string(), b6);
    tables.insert("fig5c_r_vs_length.csv".to_string(), lengths);
    if !zpoints.rows.is_empty() {
        tables.insert("fig5b_pooled_points.csv".to_string(), zpoints);
        tables.insert("fig5b_pooled_bins.csv".to_string(), zbins);
    }
    if embedders.len() >= 2 {
        let cmp = compare_embedders(narratives, embedders, cfg.similarity_resamples, seed)
            .map_err(|e| CmdError::Failed(e.to_string()))?;
        let mut t = Table::new(&["model_a", "model_b", "r"]);
        for c in &cmp.cross {
            t.push(vec![c.model_a.clone(), c.model_b.clone(), num(c.r)]);
        }
        tables.insert("figB7_cross_model.csv".to_string(), t);
        summary.cross_model = cmp.cross;
    }
    Ok((tables, summary))
}

pub fn run(ctx: &Context, args: &SimilarityArgs) -> Result<Status, CmdError> {
    let dataset = args.dataset.clone().unwrap_or_else(|| ctx.data_dir.clone());
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| dataset.join("similarity"));
    let ds = Dataset::load(&dataset, &[&ctx.config.service.corpus_dir])?;
    let p_recs = p_rec_by_narrative(&ds);
    let intact: Vec<(&Narrative, &[f64])> = p_recs
        .iter()
        .filter(|(id, _)| !ds.narratives[*id].is_scrambled())
        .map(|(id, p)| (&ds.narratives[id], p.as_slice()))
        .collect();
    if intact.is_empty() {
        log::warn!(
            "no intact narrative with recall data under {}; nothing to do",
            dataset.display()
        );
        return Ok(Status::Ok);
    }
    let boxed = if args.models.is_empty() {
        vec![ctx.embedder(None)?]
    } else {
        args.models
            .iter()
            .map(|m| ctx.embedder(Some(m)))
            .collect::<Result<Vec<_>, _>>()?
    };
    let embedders: Vec<&dyn Embedder> = boxed.iter().map(|b| b.as_ref() as &dyn Embedder).collect();
    let mut man = ctx.manifest("similarity");
    for e in &embedders {
        man.model(e.model_id());
    }
    for f in &ds.files {
        man.input(f);
    }
    let (tables, summary) = similarity_tables(&intact, &embedders, &ctx.config.analysis, ctx.seed)?;
    for (name, t) in &tables {
        let p = out.join(name);
        t.write(&p)?;
        man.output(&p);
    }
    let sp = out.join("similarity_summary.json");
    io::write_json(&sp, &summary)?;
    man.output(&sp);
    man.finish("similarity", Status::Ok)?;
    Ok(Status::Ok)
}
