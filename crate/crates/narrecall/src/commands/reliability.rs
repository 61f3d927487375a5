//! Agreement between scorers on a shared set of recalls. Input is a
//! directory of scorer files, one per scorer:
//!
//! ```json
//! {"id": "gpt-4", "human": false, "recall_ids": ["p01", "p02"], "cells": [[true, false], [false, false]]}
//! ```
//!
//! `recall_ids` may be omitted from all but one file; when given it must
//! agree across files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use narrecall_core::reliability::{
    range_band, scorer_correlations, CorrelationTable, RangeBand, Scorer, ScorerMatrixSet,
};
use serde::{Deserialize, Serialize};

use super::{CmdError, Context, Status};
use crate::io::{self, num, Table};

#[derive(Debug, Clone)]
pub struct ReliabilityArgs {
    pub matrices: PathBuf,
    /// Defaults to `<data>/reliability`.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerFile {
    pub id: String,
    #[serde(default)]
    pub human: bool,
    #[serde(default)]
    pub recall_ids: Option<Vec<String>>,
    pub cells: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilitySummary {
    pub correlations: CorrelationTable,
    pub band: Option<RangeBand>,
}

/// Reads every `*.json` scorer file in `dir`, sorted by file name.
pub fn load_matrices(dir: &Path) -> Result<ScorerMatrixSet, CmdError> {
    let files = io::list_files(dir, "json")?;
    if files.is_empty() {
        return Err(CmdError::Usage(format!(
            "no scorer files in {}",
            dir.display()
        )));
    }
    let mut ids: Option<Vec<String>> = None;
    let mut scorers = Vec::new();
    for f in &files {
        let s: ScorerFile = io::read_json(f)?;
        if let Some(r) = s.recall_ids {
            match &ids {
                Some(prev) if *prev != r => {
                    return Err(CmdError::Usage(format!(
                        "{}: recall ids differ from those in earlier scorer files",
                        f.display()
                    )))
                }
                _ => ids = Some(r),
            }
        }
        scorers.push(Scorer {
            id: s.id,
            human: s.human,
            cells: s.cells,
        });
    }
    let n_rows = scorers.first().map_or(0, |s| s.cells.len());
    let recall_ids = ids.unwrap_or_else(|| (1..=n_rows).map(|i| format!("recall-{i}")).collect());
    let n_clauses = scorers
        .first()
        .and_then(|s| s.cells.first())
        .map_or(0, Vec::len);
    ScorerMatrixSet::new(recall_ids, n_clauses, scorers).map_err(|e| CmdError::Usage(e.to_string()))
}

fn matrix_table(t: &CorrelationTable, m: &[Vec<f64>]) -> Table {
    let mut header = vec!["scorer"];
    header.extend(t.labels.iter().map(String::as_str));
    let mut out = Table::new(&header);
    for (label, row) in t.labels.iter().zip(m) {
        let mut cells = vec![label.clone()];
        cells.extend(row.iter().map(|v| num(*v)));
        out.push(cells);
    }
    out
}

pub fn reliability_tables(
    set: &ScorerMatrixSet,
) -> Result<(BTreeMap<String, Table>, ReliabilitySummary), CmdError> {
    let corr = scorer_correlations(set).map_err(|e| CmdError::Usage(e.to_string()))?;
    let mut tables = BTreeMap::new();
    tables.insert("table_b1_r.csv".to_string(), matrix_table(&corr, &corr.r));
    tables.insert("table_b1_p.csv".to_string(), matrix_table(&corr, &corr.p));

    let mut scatter = Table::new(&["scorer", "clause_index", "p_rec"]);
    for s in &set.scorers {
        for (i, v) in s.p_rec().iter().enumerate() {
            scatter.push(vec![s.id.clone(), (i + 1).to_string(), num(*v)]);
        }
    }
    tables.insert("fig1b_scatter.csv".to_string(), scatter);

    let band = match range_band(set) {
        Ok(b) => {
            let mut t = Table::new(&["clause_index", "min", "mean", "max"]);
            for (i, r) in b.rows.iter().enumerate() {
                t.push(vec![
                    (i + 1).to_string(),
                    num(r.min),
                    num(r.mean),
                    num(r.max),
                ]);
            }
            tables.insert("fig1a_band.csv".to_string(), t);
            Some(b)
        }
        Err(e) => {
            log::warn!("no human range band: {e}");
            None
        }
    };
    Ok((
        tables,
        ReliabilitySummary {
            correlations: corr,
            band,
        },
    ))
}

pub fn run(ctx: &Context, args: &ReliabilityArgs) -> Result<Status, CmdError> {
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| ctx.data_dir.join("reliability"));
    let set = load_matrices(&args.matrices)?;
    let (tables, summary) = reliability_tables(&set)?;
    let mut man = ctx.manifest("reliability");
    man.input(&args.matrices);
    for (name, t) in &tables {
        let p = out.join(name);
        t.write(&p)?;
        man.output(&p);
    }
    let sp = out.join("reliability_summary.json");
    io::write_json(&sp, &summary)?;
    man.output(&sp);
    man.finish("reliability", Status::Ok)?;
    Ok(Status::Ok)
}
