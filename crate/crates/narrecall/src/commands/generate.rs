//! Candidate narratives generated from a template. Each candidate must have
//! exactly as many clauses as the template; others are discarded and the
//! request repeated up to the configured cap.

use std::path::PathBuf;

use narrecall_core::parse::parse_numbered_clauses;
use narrecall_core::{Narrative, PromptArgs, PromptKind};

use super::{slug, CmdError, Context, Status};
use crate::io;

#[derive(Debug, Clone)]
pub struct GenerateArgs {
    /// Template narrative (path or id).
    pub template: String,
    pub variants: usize,
    /// Defaults to `<data>/generated`.
    pub out: Option<PathBuf>,
}

pub fn run(ctx: &Context, args: &GenerateArgs) -> Result<Status, CmdError> {
    if args.variants == 0 {
        return Err(CmdError::Usage("--variants must be at least 1".into()));
    }
    let template = ctx.narrative(&args.template)?;
    if template.is_scrambled() {
        return Err(CmdError::Usage(format!(
            "template `{}` is scrambled",
            template.id
        )));
    }
    let n = template.len();
    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| ctx.data_dir.join("generated"));
    let gw = ctx.gateway()?;
    let mut man = ctx.manifest("generate");
    man.model(gw.model_id());
    man.input(std::path::Path::new(&args.template));
    let prompt_args = PromptArgs::new()
        .with("n_clauses", n)
        .with("template", template.numbered_segmentation());
    let cap = ctx.config.analysis.generation_retry_cap;
    let mut failed = 0;
    for v in 1..=args.variants {
        let id = format!("{}-gen{v:02}", template.id);
        let mut made = None;
        for attempt in 1..=cap {
            let outcome = gw
                .run(PromptKind::NarrativeGeneration, &prompt_args)
                .map_err(|e| e.to_string())
                .and_then(|c| parse_numbered_clauses(&c.raw_text).map_err(|e| e.to_string()))
                .and_then(|clauses| {
                    if clauses.len() == n {
                        Ok(clauses)
                    } else {
                        Err(format!("{} clauses instead of {n}", clauses.len()))
                    }
                });
            match outcome {
                Ok(clauses) => {
                    made = Some(clauses);
                    break;
                }
                Err(e) => log::warn!("{id}: attempt {attempt}/{cap} rejected: {e}"),
            }
        }
        match made {
            Some(clauses) => {
                let mut narrative = Narrative::intact(&id, &id, clauses)
                    .map_err(|e| CmdError::Failed(format!("{id}: {e}")))?;
                narrative.source = format!("generated from `{}` by {}", template.id, gw.model_id());
                let path = out_dir.join(format!("{}.json", slug(&id)));
                io::write_json(&path, &narrative)?;
                man.output(&path);
            }
            None => {
                log::error!("{id}: no valid candidate after {cap} attempts");
                failed += 1;
            }
        }
    }
    let status = if failed == 0 {
        Status::Ok
    } else {
        Status::Partial
    };
    man.finish(&format!("generate-{}", slug(&template.id)), status)?;
    if failed == args.variants {
        return Err(CmdError::Failed(format!("all {failed} variants failed")));
    }
    Ok(status)
}
