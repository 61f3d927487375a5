//! Batch scoring of free recalls. Each recall gets three calls: scoring,
//! ordered scoring (the scoring exchange continued with the ordering
//! instruction) and segmentation of the recall itself into clauses.
//!
//! The scorer numbers clauses in presentation order. Scored sets are mapped
//! back to original clause indices; ordered sequences are kept as the scorer
//! wrote them and mapped at analysis time.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use narrecall_core::corpus::assemble_prose;
use narrecall_core::parse::{parse_numbered_clauses, parse_ordered_sequence, parse_scored_set};
use narrecall_core::recall::RecallRecord;
use narrecall_core::{Narrative, PromptArgs, PromptKind};
use serde::{Deserialize, Serialize};

use super::{slug, CmdError, Context, Status};
use crate::gateway::Gateway;
use crate::io;
use crate::service::RecallSubmission;

#[derive(Debug, Clone)]
pub struct ScoreArgs {
    pub narrative: String,
    /// Directory of `<participant>.txt` files, or a JSONL file of exported
    /// recall submissions.
    pub recalls: PathBuf,
    /// Defaults to `<data>/recalls/<narrative>.jsonl`.
    pub out: Option<PathBuf>,
    /// Defaults to the chat model id.
    pub scorer_id: Option<String>,
}

/// One recall that could not be scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFailure {
    pub participant_id: String,
    pub stage: PromptKind,
    pub error: String,
    /// Completion that failed to parse, when there was one.
    pub raw_completion: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecall {
    pub participant_id: String,
    pub text: String,
}

/// Recalls from a directory of text files (participant id = file stem) or an
/// exported JSONL file filtered to `narrative_id`. Sorted by participant.
pub fn load_recalls(path: &Path, narrative_id: &str) -> Result<Vec<RawRecall>, CmdError> {
    let mut out = Vec::new();
    if path.is_dir() {
        for f in io::list_files(path, "txt")? {
            let text = std::fs::read_to_string(&f).map_err(|source| io::IoError::Fs {
                path: f.clone(),
                source,
            })?;
            let participant_id = f
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            out.push(RawRecall {
                participant_id,
                text,
            });
        }
    } else if path.is_file() {
        let subs: Vec<RecallSubmission> = io::read_jsonl(path)?;
        out.extend(
            subs.into_iter()
                .filter(|s| s.narrative_id == narrative_id)
                .map(|s| RawRecall {
                    participant_id: s.participant_id,
                    text: s.recall_text,
                }),
        );
    } else {
        return Err(CmdError::Usage(format!(
            "recalls path {} does not exist",
            path.display()
        )));
    }
    out.sort_by(|a, b| a.participant_id.cmp(&b.participant_id));
    Ok(out)
}

/// Scores one recall against `narrative`.
pub fn score_recall(
    gw: &Gateway,
    narrative: &Narrative,
    recall: &RawRecall,
    scorer_id: &str,
) -> Result<RecallRecord, ScoreFailure> {
    let fail = |stage, error: String, raw: Option<&str>| ScoreFailure {
        participant_id: recall.participant_id.clone(),
        stage,
        error,
        raw_completion: raw.map(str::to_string),
    };
    let mut rec = RecallRecord {
        participant_id: recall.participant_id.clone(),
        narrative_id: narrative.id.clone(),
        recall_text: recall.text.clone(),
        scored_set: Default::default(),
        ordered_sequence: Vec::new(),
        recall_clause_count: Some(0),
        scorer_id: scorer_id.to_string(),
    };
    if recall.text.trim().is_empty() {
        return Ok(rec);
    }
    let l = narrative.len() as u32;
    let base = PromptArgs::new()
        .with("narrative", assemble_prose(narrative))
        .with("segmentation", narrative.numbered_segmentation())
        .with("recall", &recall.text);

    let kind = PromptKind::RecallScoring;
    let scoring = gw
        .run(kind, &base)
        .map_err(|e| fail(kind, e.to_string(), None))?;
    let positions = parse_scored_set(&scoring.raw_text, l)
        .map_err(|e| fail(kind, e.to_string(), Some(&scoring.raw_text)))?;
    rec.scored_set = positions
        .iter()
        .filter_map(|&p| narrative.original_index_at(p))
        .collect();

    let kind = PromptKind::OrderedScoring;
    let ordered_args = base.with("scoring_completion", &scoring.raw_text);
    let ordered = gw
        .run(kind, &ordered_args)
        .map_err(|e| fail(kind, e.to_string(), None))?;
    rec.ordered_sequence = parse_ordered_sequence(&ordered.raw_text, l)
        .map_err(|e| fail(kind, e.to_string(), Some(&ordered.raw_text)))?;

    let kind = PromptKind::RecallSegmentation;
    let seg_args = PromptArgs::new().with("narrative", &recall.text);
    let seg = gw
        .run(kind, &seg_args)
        .map_err(|e| fail(kind, e.to_string(), None))?;
    let clauses = parse_numbered_clauses(&seg.raw_text)
        .map_err(|e| fail(kind, e.to_string(), Some(&seg.raw_text)))?;
    rec.recall_clause_count = Some(clauses.len() as u32);
    Ok(rec)
}

/// Scores every recall with up to the gateway's in-flight cap running at
/// once. Results come back in input order.
pub fn score_all(
    gw: &Gateway,
    narrative: &Narrative,
    recalls: &[RawRecall],
    scorer_id: &str,
) -> Vec<Result<RecallRecord, ScoreFailure>> {
    let slots: Vec<Mutex<Option<Result<RecallRecord, ScoreFailure>>>> =
        recalls.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = gw.max_in_flight().min(recalls.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(r) = recalls.get(i) else { break };
                let res = score_recall(gw, narrative, r, scorer_id);
                *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(res);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .unwrap_or_else(|e| e.into_inner())
                .expect("every slot is filled")
        })
        .collect()
}

pub fn run(ctx: &Context, args: &ScoreArgs) -> Result<Status, CmdError> {
    let narrative = ctx.narrative(&args.narrative)?;
    let recalls = load_recalls(&args.recalls, &narrative.id)?;
    let gw = ctx.gateway()?;
    let scorer_id = args
        .scorer_id
        .clone()
        .unwrap_or_else(|| gw.model_id().to_string());
    let out = args.out.clone().unwrap_or_else(|| {
        ctx.data_dir
            .join("recalls")
            .join(format!("{}.jsonl", slug(&narrative.id)))
    });
    let errors_path = ctx
        .data_dir
        .join("errors")
        .join(format!("score-{}.jsonl", slug(&narrative.id)));
    let mut man = ctx.manifest("score");
    man.model(gw.model_id());
    man.input(&args.recalls);

    if recalls.is_empty() {
        log::warn!(
            "no recalls for `{}` in {}",
            narrative.id,
            args.recalls.display()
        );
    }
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for r in score_all(&gw, &narrative, &recalls, &scorer_id) {
        match r {
            Ok(rec) => records.push(rec),
            Err(f) => {
                log::error!("{}: {} failed: {}", f.participant_id, f.stage, f.error);
                failures.push(f);
            }
        }
    }
    io::write_jsonl(&out, &records)?;
    man.output(&out);
    if failures.is_empty() {
        if errors_path.exists() {
            std::fs::remove_file(&errors_path).map_err(|source| io::IoError::Fs {
                path: errors_path.clone(),
                source,
            })?;
        }
    } else {
        io::write_jsonl(&errors_path, &failures)?;
        man.output(&errors_path);
    }
    let status = if failures.is_empty() {
        Status::Ok
    } else {
        Status::Partial
    };
    man.finish(&format!("score-{}", slug(&narrative.id)), status)?;
    if !recalls.is_empty() && records.is_empty() {
        return Err(CmdError::Failed(format!(
            "all {} recalls failed; see {}",
            recalls.len(),
            errors_path.display()
        )));
    }
    Ok(status)
}
