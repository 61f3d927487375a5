//! Scrambled copy of an intact narrative.

use std::path::PathBuf;

use narrecall_core::corpus::scramble;

use super::{slug, CmdError, Context, Status};
use crate::io;

#[derive(Debug, Clone)]
pub struct ScrambleArgs {
    pub narrative: String,
    /// Id of the scrambled copy; defaults to `<id>-scrambled`.
    pub id: Option<String>,
    /// Defaults to `<data>/narratives/<new id>.json`.
    pub out: Option<PathBuf>,
}

pub fn run(ctx: &Context, args: &ScrambleArgs) -> Result<Status, CmdError> {
    let narrative = ctx.narrative(&args.narrative)?;
    let mut s = scramble(&narrative, ctx.seed).map_err(|e| CmdError::Usage(e.to_string()))?;
    s.id = args
        .id
        .clone()
        .unwrap_or_else(|| format!("{}-scrambled", narrative.id));
    s.title = format!("{} (scrambled)", narrative.title);
    s.source = format!("scrambled from `{}` with seed {}", narrative.id, ctx.seed);
    let path = args.out.clone().unwrap_or_else(|| {
        ctx.data_dir
            .join("narratives")
            .join(format!("{}.json", slug(&s.id)))
    });
    io::write_json(&path, &s)?;
    let mut man = ctx.manifest("scramble");
    man.seed("scramble", ctx.seed);
    man.input(std::path::Path::new(&args.narrative));
    man.output(&path);
    man.finish(&format!("scramble-{}", slug(&s.id)), Status::Ok)?;
    Ok(Status::Ok)
}
