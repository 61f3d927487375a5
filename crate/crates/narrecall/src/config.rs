//! Run configuration, read from TOML (or JSON when the file ends in `.json`).
//! Every field has a default so an empty file is valid.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    /// Base URL of an OpenAI-compatible API (`/chat/completions`, `/embeddings`).
    pub endpoint: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub chat_model: String,
    pub embedding_model: String,
    pub timeout_s: u64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub backoff_initial_ms: u64,
    pub backoff_max_ms: u64,
    /// Longest text accepted by the embedding endpoint, in characters.
    pub embedding_char_limit: usize,
    /// Temperature used for scoring and segmentation.
    pub scoring_temperature: f64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            chat_model: "gpt-4-0613".into(),
            embedding_model: "text-embedding-3-large".into(),
            timeout_s: 120,
            max_retries: 3,
            max_in_flight: 4,
            backoff_initial_ms: 500,
            backoff_max_ms: 30_000,
            embedding_char_limit: 16_384,
            scoring_temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    /// Directory with `narratives/` and `lures/` subdirectories.
    pub corpus_dir: PathBuf,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            corpus_dir: PathBuf::from("fixtures"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Resamples for `M` and most correlation intervals.
    pub n_resamples: usize,
    /// Resamples for the hit-rate vs recall correlation.
    pub hit_rate_resamples: usize,
    pub hit_rate_bins: usize,
    /// `equal_count` or `equal_width`.
    pub hit_rate_bin_mode: String,
    pub similarity_bins: usize,
    pub similarity_panel_bins: usize,
    pub similarity_resamples: usize,
    /// Attempts per generated narrative or lure pool before giving up.
    pub generation_retry_cap: u32,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            n_resamples: 1000,
            hit_rate_resamples: 3000,
            hit_rate_bins: 15,
            hit_rate_bin_mode: "equal_count".into(),
            similarity_bins: 5,
            similarity_panel_bins: 4,
            similarity_resamples: 1000,
            generation_retry_cap: 5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub provider: ProviderConfig,
    pub service: ServiceConfig,
    pub analysis: AnalysisConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        let cfg: Config = parsed.map_err(|message| ConfigError::Parse {
            path: path.to_owned(),
            message,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.provider;
        if p.max_in_flight == 0 {
            return Err(ConfigError::Invalid(
                "provider.max_in_flight must be at least 1".into(),
            ));
        }
        if p.scoring_temperature.is_nan() || p.scoring_temperature < 0.0 {
            return Err(ConfigError::Invalid(
                "provider.scoring_temperature must be >= 0".into(),
            ));
        }
        let a = &self.analysis;
        if a.hit_rate_bins == 0 || a.similarity_bins == 0 || a.similarity_panel_bins == 0 {
            return Err(ConfigError::Invalid("bin counts must be positive".into()));
        }
        if !matches!(a.hit_rate_bin_mode.as_str(), "equal_count" | "equal_width") {
            return Err(ConfigError::Invalid(format!(
                "analysis.hit_rate_bin_mode `{}` is not equal_count or equal_width",
                a.hit_rate_bin_mode
            )));
        }
        if a.generation_retry_cap == 0 {
            return Err(ConfigError::Invalid(
                "analysis.generation_retry_cap must be at least 1".into(),
            ));
        }
        Ok(())
    }
}
