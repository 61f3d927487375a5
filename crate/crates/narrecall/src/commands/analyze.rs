//! Figure tables and a summary document from a dataset directory:
//!
//! ```text
//! <dataset>/recalls/*.jsonl        scored recall records
//! <dataset>/recognition/*.jsonl    recognition trials
//! <dataset>/narratives/*.json      narratives (plus the configured corpus)
//! <dataset>/reliability/*.json     optional scorer matrices
//! ```
//!
//! Figures whose inputs are missing are skipped with a warning.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use narrecall_core::recall::{
    descramble_tendency, descrambling_correlation, mean_recall, mean_recall_clause_count,
    order_columns, p_rec, recall_cdf, serial_position_curve, DescrambleTendency, MeanSe,
    RecallMatrix, RecallRecord,
};
use narrecall_core::recognition::{
    clause_hit_rates, dprime_by_position, hit_rate_by_recall_bin, retained_with_bootstrap,
    ClauseKey, RecognitionSummary, RecognitionTrial,
};
use narrecall_core::stats::{sqrt_law, BinSpec, LinearFit};
use narrecall_core::{CorrelationResult, Narrative, NarrativeKind};
use serde::{Deserialize, Serialize};

use super::{reliability, similarity, CmdError, Context, Status};
use crate::io::{self, num, Corpus, Table};

#[derive(Debug, Clone)]
pub struct AnalyzeArgs {
    /// Defaults to the data directory.
    pub dataset: Option<PathBuf>,
    /// Defaults to `<dataset>/analysis`.
    pub out: Option<PathBuf>,
    /// Skip the embedding-based similarity figures.
    pub no_similarity: bool,
}

/// Loaded inputs, grouped by narrative id.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub narratives: BTreeMap<String, Narrative>,
    pub recalls: BTreeMap<String, Vec<RecallRecord>>,
    pub trials: BTreeMap<String, Vec<RecognitionTrial>>,
    pub files: Vec<PathBuf>,
}

impl Dataset {
    pub fn load(dir: &Path, corpus_dirs: &[&Path]) -> Result<Self, CmdError> {
        let mut dirs: Vec<&Path> = corpus_dirs.to_vec();
        dirs.push(dir);
        let corpus = Corpus::load(&dirs)?;
        let mut ds = Dataset {
            narratives: corpus.narratives,
            ..Default::default()
        };
        for f in io::list_files(&dir.join("recalls"), "jsonl")? {
            for r in io::read_jsonl::<RecallRecord>(&f)? {
                ds.recalls
                    .entry(r.narrative_id.clone())
                    .or_default()
                    .push(r);
            }
            ds.files.push(f);
        }
        for f in io::list_files(&dir.join("recognition"), "jsonl")? {
            for t in io::read_jsonl::<RecognitionTrial>(&f)? {
                ds.trials.entry(t.narrative_id.clone()).or_default().push(t);
            }
            ds.files.push(f);
        }
        for id in ds.recalls.keys().chain(ds.trials.keys()) {
            if !ds.narratives.contains_key(id) {
                log::warn!("data for unknown narrative `{id}` is ignored");
            }
        }
        let known = ds.narratives.clone();
        ds.recalls.retain(|id, _| known.contains_key(id));
        ds.trials.retain(|id, _| known.contains_key(id));
        Ok(ds)
    }

    pub fn is_empty(&self) -> bool {
        self.recalls.is_empty() && self.trials.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallStats {
    pub n_participants: usize,
    /// Mean recalled clauses per participant.
    pub r: Option<MeanSe>,
    /// Mean clauses per recall in the recall's own segmentation.
    pub c: Option<MeanSe>,
    pub descramble_tendency: Option<DescrambleTendency>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrativeSummary {
    pub narrative_id: String,
    pub kind: NarrativeKind,
    #[serde(rename = "L")]
    pub l: usize,
    pub recall: Option<RecallStats>,
    pub recognition: Option<RecognitionSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitRateSeries {
    pub series: String,
    pub correlation: CorrelationResult,
    pub n_clauses: usize,
    pub unprobed: usize,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DPrimeSummary {
    pub scope: String,
    pub fit: Option<LinearFit>,
    pub omitted_positions: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescramblingSummary {
    pub intact: String,
    pub scrambled: String,
    pub correlation: CorrelationResult,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub n_resamples: usize,
    pub narratives: Vec<NarrativeSummary>,
    pub hit_rate_vs_recall: Vec<HitRateSeries>,
    pub dprime: Vec<DPrimeSummary>,
    pub descrambling: Vec<DescramblingSummary>,
    pub similarity: Option<similarity::SimilaritySummary>,
    pub reliability: Option<reliability::ReliabilitySummary>,
    /// Figures not produced, with the reason.
    pub skipped: Vec<String>,
}

/// Tables keyed by file name plus the summary.
#[derive(Debug, Clone, Default)]
pub struct Analysis {
    pub tables: BTreeMap<String, Table>,
    pub summary: Summary,
}

impl Analysis {
    fn skip(&mut self, what: &str, why: impl std::fmt::Display) {
        log::warn!("skipping {what}: {why}");
        self.summary.skipped.push(format!("{what}: {why}"));
    }
}

fn ms(m: &Option<MeanSe>) -> (String, String) {
    m.map_or((String::new(), String::new()), |m| {
        (num(m.mean), num(m.stderr))
    })
}

/// Per-narrative `P_rec`, by original clause index.
pub fn p_rec_by_narrative(ds: &Dataset) -> BTreeMap<String, Vec<f64>> {
    let mut out = BTreeMap::new();
    for (id, recs) in &ds.recalls {
        let n = &ds.narratives[id];
        match RecallMatrix::from_records(recs, n)
            .map_err(|e| e.to_string())
            .and_then(|m| p_rec(&m).map_err(|e| e.to_string()))
        {
            Ok(p) => {
                out.insert(id.clone(), p);
            }
            Err(e) => log::warn!("{id}: no recall probabilities: {e}"),
        }
    }
    out
}

/// Everything except the similarity and reliability figures.
pub fn analyze_dataset(ds: &Dataset, seed: u64, cfg: &crate::config::AnalysisConfig) -> Analysis {
    let mut a = Analysis::default();
    a.summary.seed = seed;
    a.summary.n_resamples = cfg.n_resamples;
    let p_recs = p_rec_by_narrative(ds);

    let mut t_prec = Table::new(&["narrative", "clause_index", "position", "p_rec"]);
    let mut t_serial = Table::new(&["narrative", "position", "original_index", "p_rec"]);
    let mut t_cdf = Table::new(&["narrative", "p", "F"]);
    let mut t_order = Table::new(&["narrative", "participant_id", "rank", "original_index"]);
    let mut t_m = Table::new(&[
        "narrative",
        "kind",
        "L",
        "M",
        "M_stderr",
        "p_h",
        "p_f",
        "n_participants",
    ]);
    let mut t_r = Table::new(&["narrative", "kind", "L", "R", "R_stderr", "n_participants"]);
    let mut t_rm = Table::new(&["narrative", "kind", "L", "M", "M_stderr", "R", "R_stderr"]);
    let mut t_comp = Table::new(&[
        "narrative",
        "kind",
        "L",
        "R",
        "R_stderr",
        "C",
        "C_stderr",
        "n_participants",
    ]);

    for (id, n) in &ds.narratives {
        let recs = ds.recalls.get(id);
        let trials = ds.trials.get(id);
        if recs.is_none() && trials.is_none() {
            continue;
        }
        let kind = if n.is_scrambled() {
            "scrambled"
        } else {
            "intact"
        };
        let l = n.len();
        let mut ns = NarrativeSummary {
            narrative_id: id.clone(),
            kind: n.kind,
            l,
            recall: None,
            recognition: None,
        };

        if let Some(recs) = recs {
            let r = RecallMatrix::from_records(recs, n)
                .map_err(|e| e.to_string())
                .and_then(|m| mean_recall(&m).map_err(|e| e.to_string()));
            let r = match r {
                Ok(r) => Some(r),
                Err(e) => {
                    a.skip(&format!("R for {id}"), e);
                    None
                }
            };
            let c = match mean_recall_clause_count(recs) {
                Ok(c) => Some(c),
                Err(e) => {
                    a.skip(&format!("C for {id}"), e);
                    None
                }
            };
            let tendency = if n.is_scrambled() {
                descramble_tendency(recs, n).ok()
            } else {
                None
            };
            if let Some(p) = p_recs.get(id) {
                for (i, v) in p.iter().enumerate() {
                    let k = i as u32 + 1;
                    let pos = n.position_of(k).unwrap_or(0);
                    t_prec.push(vec![id.clone(), k.to_string(), pos.to_string(), num(*v)]);
                }
                if let Ok(curve) = serial_position_curve(p, n) {
                    for (i, v) in curve.iter().enumerate() {
                        let pos = i as u32 + 1;
                        let orig = n.original_index_at(pos).unwrap_or(0);
                        t_serial.push(vec![id.clone(), pos.to_string(), orig.to_string(), num(*v)]);
                    }
                }
                for (p, f) in recall_cdf(p) {
                    t_cdf.push(vec![id.clone(), num(p), num(f)]);
                }
            }
            match order_columns(recs, n) {
                Ok(cols) => {
                    for col in cols {
                        for (rank, k) in col.original_indices.iter().enumerate() {
                            t_order.push(vec![
                                id.clone(),
                                col.participant_id.clone(),
                                (rank + 1).to_string(),
                                k.to_string(),
                            ]);
                        }
                    }
                }
                Err(e) => a.skip(&format!("recall order for {id}"), e),
            }
            let (rm, rs) = ms(&r);
            if r.is_some() {
                t_r.push(vec![
                    id.clone(),
                    kind.into(),
                    l.to_string(),
                    rm.clone(),
                    rs.clone(),
                    recs.len().to_string(),
                ]);
            }
            if r.is_some() && c.is_some() {
                let (cm, cs) = ms(&c);
                t_comp.push(vec![
                    id.clone(),
                    kind.into(),
                    l.to_string(),
                    rm,
                    rs,
                    cm,
                    cs,
                    recs.len().to_string(),
                ]);
            }
            ns.recall = Some(RecallStats {
                n_participants: recs.len(),
                r,
                c,
                descramble_tendency: tendency,
            });
        }

        if let Some(trials) = trials {
            match retained_with_bootstrap(trials, l, cfg.n_resamples, seed) {
                Ok(s) => {
                    t_m.push(vec![
                        id.clone(),
                        kind.into(),
                        l.to_string(),
                        num(s.m),
                        num(s.m_stderr),
                        num(s.p_h),
                        num(s.p_f),
                        s.n_participants.to_string(),
                    ]);
                    ns.recognition = Some(s);
                }
                Err(e) => a.skip(&format!("M for {id}"), e),
            }
        }

        if let (Some(rec), Some(m)) = (&ns.recall, &ns.recognition) {
            if let Some(r) = rec.r {
                t_rm.push(vec![
                    id.clone(),
                    kind.into(),
                    l.to_string(),
                    num(m.m),
                    num(m.m_stderr),
                    num(r.mean),
                    num(r.stderr),
                ]);
            }
        }
        a.summary.narratives.push(ns);
    }

    let put = |a: &mut Analysis, name: &str, t: Table, what: &str, why: &str| {
        if t.rows.is_empty() {
            a.skip(what, why);
        } else {
            a.tables.insert(name.to_string(), t);
        }
    };
    put(
        &mut a,
        "p_rec.csv",
        t_prec,
        "recall probabilities",
        "no recall data",
    );
    put(
        &mut a,
        "fig2a_m_vs_l.csv",
        t_m,
        "fig2a (M vs L)",
        "no recognition data",
    );
    put(
        &mut a,
        "fig2b_r_vs_l.csv",
        t_r,
        "fig2b (R vs L)",
        "no recall data",
    );
    let m_max = t_rm
        .rows
        .iter()
        .filter_map(|r| r[3].parse::<f64>().ok())
        .fold(f64::NAN, f64::max);
    put(
        &mut a,
        "fig2c_r_vs_m.csv",
        t_rm,
        "fig2c (R vs M)",
        "no narrative has both recall and recognition data",
    );
    if m_max.is_finite() {
        let hi = m_max.max(1.0);
        let mut law = Table::new(&["M", "R"]);
        for i in 0..=100 {
            let m = hi * i as f64 / 100.0;
            law.push(vec![num(m), num(sqrt_law(m))]);
        }
        a.tables.insert("fig2c_sqrt_law.csv".into(), law);
    }
    put(
        &mut a,
        "fig3_recall_order.csv",
        t_order,
        "fig3 (recall order)",
        "no ordered recalls",
    );
    put(
        &mut a,
        "figB2_compression.csv",
        t_comp,
        "figB2 (C vs R)",
        "no recall clause counts",
    );
    put(
        &mut a,
        "figB4_serial_position.csv",
        t_serial,
        "figB4 (serial position)",
        "no recall data",
    );
    put(
        &mut a,
        "figB4_cdf.csv",
        t_cdf,
        "figB4 (CDF)",
        "no recall data",
    );

    hit_rate_figure(ds, &p_recs, seed, cfg, &mut a);
    dprime_figure(ds, &mut a);
    descrambling_figure(ds, &p_recs, seed, cfg.n_resamples, &mut a);
    a
}

fn hit_rate_figure(
    ds: &Dataset,
    p_recs: &BTreeMap<String, Vec<f64>>,
    seed: u64,
    cfg: &crate::config::AnalysisConfig,
    a: &mut Analysis,
) {
    let spec = if cfg.hit_rate_bin_mode == "equal_width" {
        BinSpec::equal_width(cfg.hit_rate_bins)
    } else {
        BinSpec::equal_count(cfg.hit_rate_bins)
    };
    let mut bins = Table::new(&["series", "x_center", "y_mean", "y_stderr", "count"]);
    let mut points = Table::new(&[
        "series",
        "narrative",
        "clause_index",
        "p_rec",
        "p_h",
        "n_trials",
    ]);
    for (series, scrambled) in [("intact", false), ("scrambled", true)] {
        let ids: Vec<&String> = ds
            .trials
            .keys()
            .filter(|id| ds.narratives[*id].is_scrambled() == scrambled && p_recs.contains_key(*id))
            .collect();
        if ids.is_empty() {
            continue;
        }
        let trials: Vec<RecognitionTrial> = ids
            .iter()
            .flat_map(|id| ds.trials[*id].iter().cloned())
            .collect();
        let hits = clause_hit_rates(&trials);
        let mut map = BTreeMap::new();
        for id in &ids {
            for (i, v) in p_recs[*id].iter().enumerate() {
                map.insert(
                    ClauseKey {
                        narrative_id: (*id).clone(),
                        clause_index: i as u32 + 1,
                    },
                    *v,
                );
            }
        }
        match hit_rate_by_recall_bin(&hits, &map, spec, cfg.hit_rate_resamples, seed) {
            Ok(h) => {
                for b in &h.bins.bins {
                    bins.push(vec![
                        series.into(),
                        num(b.x_center),
                        num(b.y_mean),
                        num(b.y_stderr),
                        b.count.to_string(),
                    ]);
                }
                for hr in &hits {
                    points.push(vec![
                        series.into(),
                        hr.key.narrative_id.clone(),
                        hr.key.clause_index.to_string(),
                        num(map[&hr.key]),
                        num(hr.p_h()),
                        hr.n.to_string(),
                    ]);
                }
                a.summary.hit_rate_vs_recall.push(HitRateSeries {
                    series: series.into(),
                    correlation: h.result,
                    n_clauses: h.n_clauses,
                    unprobed: h.unprobed,
                    bins: h.bins.bins.len(),
                });
            }
            Err(e) => a.skip(&format!("fig4 ({series})"), e),
        }
    }
    if bins.rows.is_empty() {
        a.skip(
            "fig4 (hit rate vs recall)",
            "needs recall and recognition data for the same narratives",
        );
    } else {
        a.tables.insert("fig4_hit_rate_bins.csv".into(), bins);
        a.tables.insert("fig4_hit_rate_points.csv".into(), points);
    }
}

fn dprime_figure(ds: &Dataset, a: &mut Analysis) {
    if ds.trials.is_empty() {
        a.skip("figB3 (d' by position)", "no recognition data");
        return;
    }
    let mut t = Table::new(&[
        "scope", "position", "p_h", "p_f", "n_old", "n_new", "dprime",
    ]);
    let all: Vec<RecognitionTrial> = ds.trials.values().flatten().cloned().collect();
    let mut scopes: Vec<(String, Vec<RecognitionTrial>)> = vec![("all".into(), all)];
    scopes.extend(ds.trials.iter().map(|(k, v)| (k.clone(), v.clone())));
    for (scope, trials) in scopes {
        match dprime_by_position(&trials) {
            Ok(curve) => {
                for p in &curve.points {
                    t.push(vec![
                        scope.clone(),
                        p.position.to_string(),
                        num(p.p_h),
                        num(p.p_f),
                        p.n_old.to_string(),
                        p.n_new.to_string(),
                        num(p.dprime),
                    ]);
                }
                a.summary.dprime.push(DPrimeSummary {
                    scope,
                    fit: curve.fit,
                    omitted_positions: curve.omitted,
                });
            }
            Err(e) => a.skip(&format!("figB3 ({scope})"), e),
        }
    }
    if !t.rows.is_empty() {
        a.tables.insert("figB3_dprime.csv".into(), t);
    }
}

fn descrambling_figure(
    ds: &Dataset,
    p_recs: &BTreeMap<String, Vec<f64>>,
    seed: u64,
    n_resamples: usize,
    a: &mut Analysis,
) {
    let mut t = Table::new(&[
        "intact",
        "scrambled",
        "clause_index",
        "p_rec_intact",
        "p_rec_scrambled",
    ]);
    for (sid, s) in &ds.narratives {
        let Some(base) = sid.strip_suffix("-scrambled").filter(|_| s.is_scrambled()) else {
            continue;
        };
        let (Some(ps), Some(pi)) = (p_recs.get(sid), p_recs.get(base)) else {
            continue;
        };
        let by_position = match serial_position_curve(ps, s) {
            Ok(v) => v,
            Err(e) => {
                a.skip(&format!("figB5 ({sid})"), e);
                continue;
            }
        };
        match descrambling_correlation(pi, &by_position, s, n_resamples, seed) {
            Ok(c) => {
                for (i, (x, y)) in pi.iter().zip(ps).enumerate() {
                    t.push(vec![
                        base.into(),
                        sid.clone(),
                        (i + 1).to_string(),
                        num(*x),
                        num(*y),
                    ]);
                }
                a.summary.descrambling.push(DescramblingSummary {
                    intact: base.into(),
                    scrambled: sid.clone(),
                    correlation: c,
                });
            }
            Err(e) => a.skip(&format!("figB5 ({sid})"), e),
        }
    }
    if t.rows.is_empty() {
        a.skip(
            "figB5 (descrambling)",
            "no intact/scrambled pair with recall data",
        );
    } else {
        a.tables.insert("figB5_descrambling.csv".into(), t);
    }
}

pub fn run(ctx: &Context, args: &AnalyzeArgs) -> Result<Status, CmdError> {
    let dataset = args.dataset.clone().unwrap_or_else(|| ctx.data_dir.clone());
    let out = args.out.clone().unwrap_or_else(|| dataset.join("analysis"));
    let ds = Dataset::load(&dataset, &[&ctx.config.service.corpus_dir])?;
    let rel_dir = dataset.join("reliability");
    let has_rel = !io::list_files(&rel_dir, "json")?.is_empty();
    if ds.is_empty() && !has_rel {
        log::warn!(
            "no recall or recognition data under {}; nothing to do",
            dataset.display()
        );
        return Ok(Status::Ok);
    }
    let cfg = &ctx.config.analysis;
    let mut a = analyze_dataset(&ds, ctx.seed, cfg);
    let mut man = ctx.manifest("analyze");
    for f in &ds.files {
        man.input(f);
    }

    if args.no_similarity {
        a.summary
            .skipped
            .push("similarity figures: disabled".into());
    } else {
        let p_recs = p_rec_by_narrative(&ds);
        let intact: Vec<(&Narrative, &[f64])> = p_recs
            .iter()
            .filter(|(id, _)| !ds.narratives[*id].is_scrambled())
            .map(|(id, p)| (&ds.narratives[id], p.as_slice()))
            .collect();
        if intact.is_empty() {
            a.skip("similarity figures", "no intact narrative with recall data");
        } else {
            let embedder = ctx.embedder(None)?;
            man.model(embedder.model_id());
            let embedders: Vec<&dyn narrecall_core::similarity::Embedder> = vec![embedder.as_ref()];
            match similarity::similarity_tables(&intact, &embedders, cfg, ctx.seed) {
                Ok((tables, summary)) => {
                    a.tables.extend(tables);
                    a.summary.similarity = Some(summary);
                }
                Err(e) => a.skip("similarity figures", e),
            }
        }
    }

    if has_rel {
        match reliability::load_matrices(&rel_dir)
            .and_then(|set| reliability::reliability_tables(&set))
        {
            Ok((tables, summary)) => {
                a.tables.extend(tables);
                a.summary.reliability = Some(summary);
            }
            Err(e) => a.skip("fig1 (scorer reliability)", e),
        }
    } else {
        a.skip("fig1 (scorer reliability)", "no reliability/ matrices");
    }

    for (name, t) in &a.tables {
        let p = out.join(name);
        t.write(&p)?;
        man.output(&p);
    }
    let sp = out.join("summary.json");
    io::write_json(&sp, &a.summary)?;
    man.output(&sp);
    man.finish("analyze", Status::Ok)?;
    Ok(Status::Ok)
}
