//! Lure pool for one narrative: items numbered k.5 that fit the story but
//! were never in it.

use std::path::PathBuf;

use narrecall_core::parse::{parse_lures, select_lures};
use narrecall_core::{LurePool, PromptArgs, PromptKind};

use super::{slug, CmdError, Context, Status};
use crate::io;

#[derive(Debug, Clone)]
pub struct LuresArgs {
    pub narrative: String,
    /// Defaults to `<data>/lures/<id>.json`.
    pub out: Option<PathBuf>,
}

pub fn run(ctx: &Context, args: &LuresArgs) -> Result<Status, CmdError> {
    let narrative = ctx.narrative(&args.narrative)?;
    if narrative.is_scrambled() {
        return Err(CmdError::Usage(format!(
            "`{}` is scrambled; generate lures for the intact narrative",
            narrative.id
        )));
    }
    let l = narrative.len();
    let gw = ctx.gateway()?;
    let mut man = ctx.manifest("lures");
    man.model(gw.model_id());
    man.input(std::path::Path::new(&args.narrative));
    let prompt_args = PromptArgs::new().with("segmentation", narrative.numbered_segmentation());
    let cap = ctx.config.analysis.generation_retry_cap;
    let mut last = String::new();
    for attempt in 1..=cap {
        let outcome = gw
            .run(PromptKind::LureGeneration, &prompt_args)
            .map_err(|e| e.to_string())
            .and_then(|c| parse_lures(&c.raw_text, l as u32).map_err(|e| e.to_string()))
            .and_then(|lures| select_lures(lures, l).map_err(|e| e.to_string()));
        match outcome {
            Ok(lures) => {
                let pool = LurePool {
                    narrative_id: narrative.id.clone(),
                    lures,
                };
                pool.validate_for(&narrative)
                    .map_err(|e| CmdError::Failed(e.to_string()))?;
                let path = args.out.clone().unwrap_or_else(|| {
                    ctx.data_dir
                        .join("lures")
                        .join(format!("{}.json", slug(&narrative.id)))
                });
                io::write_json(&path, &pool)?;
                man.output(&path);
                man.finish(&format!("lures-{}", slug(&narrative.id)), Status::Ok)?;
                return Ok(Status::Ok);
            }
            Err(e) => {
                log::warn!(
                    "{}: lure attempt {attempt}/{cap} rejected: {e}",
                    narrative.id
                );
                last = e;
            }
        }
    }
    Err(CmdError::Failed(format!(
        "{}: no usable lure pool after {cap} attempts: {last}",
        narrative.id
    )))
}
