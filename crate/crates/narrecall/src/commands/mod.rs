//! Pipeline commands. Each takes a [`Context`] plus its own arguments, writes
//! its outputs and a [`RunManifest`], and reports whether every item
//! succeeded.

pub mod analyze;
pub mod export;
pub mod generate;
pub mod lures;
pub mod reliability;
pub mod score;
pub mod scramble;
pub mod similarity;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::ValueEnum;
use narrecall_core::mock::MockEmbedder;
use narrecall_core::similarity::Embedder;
use narrecall_core::Narrative;
use serde::{Deserialize, Serialize};

use crate::clock::{Clock, SystemClock};
use crate::config::{Config, ConfigError};
use crate::gateway::{
    AuditLog, Backoff, CacheOnlyEmbedder, CachedEmbedder, ChatProvider, Gateway, GatewayError,
    HttpChat, HttpEmbedder, MockProvider, ReplayProvider, Sleeper, ThreadSleeper, Transport,
    UreqTransport,
};
use crate::io::{self, Corpus, IoError};
use crate::service::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    Live,
    Mock,
    Replay,
}

impl ProviderMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ProviderMode::Live => "live",
            ProviderMode::Mock => "mock",
            ProviderMode::Replay => "replay",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CmdError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("{0}")]
    Failed(String),
}

impl CmdError {
    /// 2 for usage and configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Usage(_) | CmdError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// How a command finished when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    /// Some items failed; outputs hold the rest.
    Partial,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Partial => 1,
        }
    }
}

/// Everything needed to reproduce a command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name; feeding them back to the CLI reruns
    /// the command.
    pub args: Vec<String>,
    pub config: Config,
    pub seeds: BTreeMap<String, u64>,
    pub provider: ProviderMode,
    pub model_ids: Vec<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
    pub status: Status,
}

pub struct Context {
    pub config: Config,
    pub seed: u64,
    pub provider: ProviderMode,
    pub data_dir: PathBuf,
    /// Audit log to answer from in replay mode; defaults to the data
    /// directory's `audit.jsonl`.
    pub replay_log: Option<PathBuf>,
    pub clock: Arc<dyn Clock>,
    pub argv: Vec<String>,
    /// Replaces the chat provider chosen by `provider`.
    pub chat_override: Option<Arc<dyn ChatProvider>>,
    pub transport: Option<Arc<dyn Transport>>,
    pub sleeper: Arc<dyn Sleeper>,
}

impl Context {
    pub fn new(config: Config, provider: ProviderMode, data_dir: &Path, seed: u64) -> Self {
        Self {
            config,
            seed,
            provider,
            data_dir: data_dir.to_owned(),
            replay_log: None,
            clock: Arc::new(SystemClock),
            argv: Vec::new(),
            chat_override: None,
            transport: None,
            sleeper: Arc::new(ThreadSleeper),
        }
    }

    pub fn audit_path(&self) -> PathBuf {
        self.data_dir.join("audit.jsonl")
    }

    pub fn embedding_cache(&self) -> PathBuf {
        self.data_dir.join("cache").join("embeddings")
    }

    fn transport(&self) -> Arc<dyn Transport> {
        self.transport.clone().unwrap_or_else(|| {
            Arc::new(UreqTransport::new(std::time::Duration::from_secs(
                self.config.provider.timeout_s,
            )))
        })
    }

    fn api_key(&self) -> Result<String, CmdError> {
        let var = &self.config.provider.api_key_env;
        std::env::var(var).map_err(|_| {
            CmdError::Config(ConfigError::Invalid(format!(
                "credential variable {var} is not set"
            )))
        })
    }

    fn backoff(&self) -> Backoff {
        let p = &self.config.provider;
        Backoff {
            initial: std::time::Duration::from_millis(p.backoff_initial_ms),
            max: std::time::Duration::from_millis(p.backoff_max_ms),
        }
    }

    /// Chat gateway for the configured provider. Live and mock calls are
    /// appended to the audit log; replayed ones are not.
    pub fn gateway(&self) -> Result<Gateway, CmdError> {
        let p = &self.config.provider;
        let (provider, audit): (Box<dyn ChatProvider>, bool) =
            match (&self.chat_override, self.provider) {
                (Some(o), _) => (Box::new(o.clone()), true),
                (None, ProviderMode::Mock) => (Box::new(MockProvider::new(self.seed)), true),
                (None, ProviderMode::Replay) => {
                    let path = self.replay_log.clone().unwrap_or_else(|| self.audit_path());
                    let r = ReplayProvider::from_file(&path).map_err(|e| {
                        CmdError::Usage(format!("replay log {}: {e}", path.display()))
                    })?;
                    (Box::new(r), false)
                }
                (None, ProviderMode::Live) => {
                    let chat = HttpChat::new(
                        self.transport(),
                        &p.endpoint,
                        Some(self.api_key()?),
                        &p.chat_model,
                    )
                    .with_backoff(self.backoff(), self.sleeper.clone());
                    (Box::new(chat), true)
                }
            };
        let mut g = Gateway::new(provider, self.clock.clone(), p.max_in_flight, p.max_retries)
            .with_scoring_temperature(p.scoring_temperature);
        if audit {
            let log = AuditLog::open(&self.audit_path()).map_err(|source| IoError::Fs {
                path: self.audit_path(),
                source,
            })?;
            g = g.with_audit(log);
        }
        Ok(g)
    }

    /// Embedder for `model`, cached on disk. In mock mode `model` is `mock`
    /// or `mock:<seed>`; in live mode it is a provider model id (default from
    /// config); in replay mode only cached vectors are served.
    pub fn embedder(
        &self,
        model: Option<&str>,
    ) -> Result<Box<dyn Embedder + Send + Sync>, CmdError> {
        let p = &self.config.provider;
        let cache = self.embedding_cache();
        Ok(match self.provider {
            ProviderMode::Mock => {
                let seed = match model.unwrap_or("mock") {
                    "mock" => 0,
                    m => m
                        .strip_prefix("mock:")
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| {
                            CmdError::Usage(format!(
                                "mock embedding model `{m}` is not mock or mock:<seed>"
                            ))
                        })?,
                };
                Box::new(CachedEmbedder::new(MockEmbedder::new(seed), &cache))
            }
            ProviderMode::Live => {
                let m = model.unwrap_or(&p.embedding_model);
                let e = HttpEmbedder::new(
                    self.transport(),
                    &p.endpoint,
                    Some(self.api_key()?),
                    m,
                    p.max_retries,
                    p.embedding_char_limit,
                )
                .with_backoff(self.backoff(), self.sleeper.clone());
                Box::new(CachedEmbedder::new(e, &cache))
            }
            ProviderMode::Replay => {
                let m = match model {
                    Some(m) => m.to_string(),
                    None => MockEmbedder::new(0).model_id().to_string(),
                };
                Box::new(CacheOnlyEmbedder::new(&m, &cache))
            }
        })
    }

    /// Corpus from the configured corpus directory, overlaid by the data
    /// directory (which wins on id collisions).
    pub fn corpus(&self) -> Result<Corpus, CmdError> {
        Ok(Corpus::load(&[
            &self.config.service.corpus_dir,
            &self.data_dir,
        ])?)
    }

    /// A narrative given as a JSON file path or as an id in the corpus.
    pub fn narrative(&self, spec: &str) -> Result<Narrative, CmdError> {
        let path = Path::new(spec);
        if path.extension().is_some_and(|e| e == "json") || path.is_file() {
            if !path.is_file() {
                return Err(CmdError::Usage(format!(
                    "narrative file {spec} does not exist"
                )));
            }
            let n: Narrative = io::read_json(path)?;
            n.validate().map_err(|source| IoError::Corpus {
                path: path.to_owned(),
                source,
            })?;
            return Ok(n);
        }
        self.corpus()?
            .narratives
            .remove(spec)
            .ok_or_else(|| CmdError::Usage(format!("unknown narrative `{spec}`")))
    }

    /// Path as recorded in manifests: relative to the data directory when
    /// inside it, so identical runs in different directories match.
    pub fn display_path(&self, p: &Path) -> String {
        p.strip_prefix(&self.data_dir)
            .map(|r| format!("$DATA/{}", r.display()))
            .unwrap_or_else(|_| p.display().to_string())
    }

    pub fn manifest(&self, command: &str) -> ManifestBuilder<'_> {
        let mut seeds = BTreeMap::new();
        seeds.insert("master".to_string(), self.seed);
        ManifestBuilder {
            ctx: self,
            m: RunManifest {
                command: command.to_string(),
                args: self.argv.clone(),
                config: self.config.clone(),
                seeds,
                provider: self.provider,
                model_ids: Vec::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                started_at: self.clock.now(),
                finished_at: String::new(),
                status: Status::Ok,
            },
        }
    }
}

pub struct ManifestBuilder<'a> {
    ctx: &'a Context,
    m: RunManifest,
}

impl ManifestBuilder<'_> {
    pub fn model(&mut self, id: &str) {
        if !self.m.model_ids.iter().any(|m| m == id) {
            self.m.model_ids.push(id.to_string());
        }
    }

    pub fn seed(&mut self, name: &str, v: u64) {
        self.m.seeds.insert(name.to_string(), v);
    }

    pub fn input(&mut self, p: &Path) {
        self.m.inputs.push(self.ctx.display_path(p));
    }

    pub fn output(&mut self, p: &Path) {
        self.m.outputs.push(self.ctx.display_path(p));
    }

    /// Writes `<data>/manifests/<name>.json` and returns its path.
    pub fn finish(mut self, name: &str, status: Status) -> Result<PathBuf, CmdError> {
        self.m.finished_at = self.ctx.clock.now();
        self.m.status = status;
        let path = self
            .ctx
            .data_dir
            .join("manifests")
            .join(format!("{name}.json"));
        io::write_json(&path, &self.m)?;
        Ok(path)
    }
}

/// File-name-safe form of an id.
pub(crate) fn slug(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}
