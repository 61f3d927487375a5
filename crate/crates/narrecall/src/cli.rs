//! Command-line entry point.

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};

use crate::clock::{Clock, SteppingClock};
use crate::commands::{
    analyze, export, generate, lures, reliability, score, scramble, similarity, CmdError, Context,
    ProviderMode, Status,
};
use crate::config::Config;
use crate::service::{self, ExperimentService};

#[derive(Debug, Parser)]
#[command(
    name = "narrecall",
    version,
    about = "Narrative recall and recognition experiment pipeline"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// TOML (or .json) configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Where model completions and embeddings come from.
    #[arg(long, global = true, value_enum, default_value_t = ProviderMode::Mock)]
    pub provider: ProviderMode,
    #[arg(long, global = true, default_value = "data")]
    pub data_dir: PathBuf,
    /// Audit log answering replay-mode calls (default `<data>/audit.jsonl`).
    #[arg(long, global = true)]
    pub replay_log: Option<PathBuf>,
    /// Use a clock that starts here and advances one second per reading.
    #[arg(long, global = true, hide = true)]
    pub clock_start: Option<DateTime<Utc>>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate candidate narratives from a template.
    Generate {
        /// Template narrative (file path or corpus id).
        template: String,
        #[arg(long, default_value_t = 1)]
        variants: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the lure pool for a narrative.
    Lures {
        narrative: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Produce a scrambled version of a narrative.
    Scramble {
        narrative: String,
        /// Id of the scrambled narrative (default `<id>-scrambled`).
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score free recalls against a narrative.
    Score {
        narrative: String,
        /// Directory of `<participant>.txt` files or an exported JSONL file.
        #[arg(long)]
        recalls: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        scorer_id: Option<String>,
    },
    /// Compute figure tables and a summary from a dataset directory.
    Analyze {
        /// Dataset directory (default: the data directory).
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_similarity: bool,
    },
    /// Embedding similarity against recall probability.
    Similarity {
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated embedding models.
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
    },
    /// Agreement between scorers on shared recalls.
    Reliability {
        /// Directory of scorer matrix files.
        matrices: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export completed sessions from the event log.
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Terms such as `narrative_id:boyscout,task:recall`.
        #[arg(long, default_value = "")]
        filter: String,
    },
    /// Run the experiment HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<SocketAddr>,
    },
}

fn build_context(g: &Global, argv: Vec<String>) -> Result<Context, CmdError> {
    let config = match &g.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let mut ctx = Context::new(config, g.provider, &g.data_dir, g.seed);
    ctx.replay_log = g.replay_log.clone();
    ctx.argv = argv;
    if let Some(start) = g.clock_start {
        ctx.clock = Arc::new(SteppingClock::new(start, 1000)) as Arc<dyn Clock>;
    }
    Ok(ctx)
}

/// Runs one command in an existing context.
pub fn dispatch(ctx: &Context, command: Command) -> Result<Status, CmdError> {
    match command {
        Command::Generate {
            template,
            variants,
            out,
        } => generate::run(
            ctx,
            &generate::GenerateArgs {
                template,
                variants,
                out,
            },
        ),
        Command::Lures { narrative, out } => lures::run(ctx, &lures::LuresArgs { narrative, out }),
        Command::Scramble { narrative, id, out } => {
            scramble::run(ctx, &scramble::ScrambleArgs { narrative, id, out })
        }
        Command::Score {
            narrative,
            recalls,
            out,
            scorer_id,
        } => score::run(
            ctx,
            &score::ScoreArgs {
                narrative,
                recalls,
                out,
                scorer_id,
            },
        ),
        Command::Analyze {
            dataset,
            out,
            no_similarity,
        } => analyze::run(
            ctx,
            &analyze::AnalyzeArgs {
                dataset,
                out,
                no_similarity,
            },
        ),
        Command::Similarity {
            dataset,
            out,
            models,
        } => similarity::run(
            ctx,
            &similarity::SimilarityArgs {
                dataset,
                out,
                models,
            },
        ),
        Command::Reliability { matrices, out } => {
            reliability::run(ctx, &reliability::ReliabilityArgs { matrices, out })
        }
        Command::Export { out, filter } => export::run(ctx, &export::ExportArgs { out, filter }),
        Command::Serve { bind } => serve(ctx, bind),
    }
}

fn serve(ctx: &Context, bind: Option<SocketAddr>) -> Result<Status, CmdError> {
    let addr: SocketAddr = match bind {
        Some(a) => a,
        None => ctx.config.service.bind.parse().map_err(|e| {
            CmdError::Usage(format!("bind address `{}`: {e}", ctx.config.service.bind))
        })?,
    };
    let corpus = ctx.corpus()?;
    let svc = Arc::new(ExperimentService::open(
        corpus,
        &ctx.data_dir,
        ctx.clock.clone(),
        ctx.seed,
    )?);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CmdError::Failed(format!("runtime: {e}")))?;
    rt.block_on(service::serve(svc, addr))
        .map_err(|e| CmdError::Failed(format!("serve {addr}: {e}")))?;
    Ok(Status::Ok)
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code: 0 on success, 1 on failure or partial success, 2 on
/// usage or configuration errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.global.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    let argv: Vec<String> = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let ctx = match build_context(&cli.global, argv) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match dispatch(&ctx, cli.command) {
        Ok(s) => s.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
