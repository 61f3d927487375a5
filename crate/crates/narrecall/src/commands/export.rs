//! Offline export: replays the service's event log and writes the analysis
//! input files.

use std::path::PathBuf;

use narrecall_core::session::replay;

use super::{CmdError, Context, Status};
use crate::service::{read_event_log, Export, ExportFilter, EVENT_LOG};

#[derive(Debug, Clone, Default)]
pub struct ExportArgs {
    /// Defaults to the data directory.
    pub out: Option<PathBuf>,
    pub filter: String,
}

pub fn run(ctx: &Context, args: &ExportArgs) -> Result<Status, CmdError> {
    let filter = ExportFilter::parse(&args.filter).map_err(|e| CmdError::Usage(e.to_string()))?;
    let log = ctx.data_dir.join(EVENT_LOG);
    if !log.exists() {
        log::warn!("no event log at {}; exporting empty files", log.display());
    }
    let records = read_event_log(&log)?;
    let sessions =
        replay(&records).map_err(|e| CmdError::Failed(format!("{}: {e}", log.display())))?;
    let export = Export::from_sessions(sessions.values(), &filter);
    let out = args.out.clone().unwrap_or_else(|| ctx.data_dir.clone());
    let mut man = ctx.manifest("export");
    man.input(&log);
    for p in export.write(&out)? {
        man.output(&p);
    }
    log::info!(
        "exported {} recalls and {} recognition trials",
        export.recalls.len(),
        export.recognition.len()
    );
    man.finish("export", Status::Ok)?;
    Ok(Status::Ok)
}
