//! OpenAI-compatible HTTP providers with bounded exponential-backoff retries.

use std::sync::Arc;
use std::time::Duration;

use narrecall_core::similarity::{EmbedError, Embedder, EmbeddingVector};
use narrecall_core::PromptKind;
use serde_json::{json, Value};

use super::{ChatProvider, ChatRequest, Completion, GatewayError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Blocking JSON POST. IO errors (refused, reset, timed out) are retried.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &str,
    ) -> std::io::Result<HttpResponse>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent }
    }
}

impl Transport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &str,
    ) -> std::io::Result<HttpResponse> {
        let mut req = self
            .agent
            .post(url)
            .header("Content-Type", "application/json");
        if let Some(token) = bearer {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send(body).map_err(std::io::Error::other)?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(std::io::Error::other)?;
        Ok(HttpResponse { status, body })
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Skips waiting; for tests.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoSleep;

impl Sleeper for NoSleep {
    fn sleep(&self, _: Duration) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backoff {
    pub initial: Duration,
    pub max: Duration,
}

impl Backoff {
    /// Delay before retry number `retry` (0-based): `initial * 2^retry`, capped.
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry.min(31)).unwrap_or(u32::MAX);
        self.initial.saturating_mul(factor).min(self.max)
    }
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            initial: Duration::from_millis(500),
            max: Duration::from_secs(30),
        }
    }
}

fn retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

/// POSTs `body` up to `1 + max_retries` times, retrying on IO errors, 429 and
/// 5xx. Other non-2xx statuses fail at once.
fn post_with_retries(
    transport: &dyn Transport,
    sleeper: &dyn Sleeper,
    backoff: Backoff,
    url: &str,
    bearer: Option<&str>,
    body: &str,
    max_retries: u32,
) -> Result<String, GatewayError> {
    let attempts = max_retries.saturating_add(1);
    let mut last = String::new();
    for attempt in 0..attempts {
        if attempt > 0 {
            sleeper.sleep(backoff.delay(attempt - 1));
        }
        match transport.post_json(url, bearer, body) {
            Ok(r) if (200..300).contains(&r.status) => return Ok(r.body),
            Ok(r) if retryable(r.status) => {
                log::warn!(
                    "{url}: status {} (attempt {}/{attempts})",
                    r.status,
                    attempt + 1
                );
                last = format!("status {}: {}", r.status, r.body);
            }
            Ok(r) => {
                return Err(GatewayError::Rejected {
                    status: r.status,
                    body: r.body,
                })
            }
            Err(e) => {
                log::warn!("{url}: {e} (attempt {}/{attempts})", attempt + 1);
                last = e.to_string();
            }
        }
    }
    Err(GatewayError::Transport { attempts, last })
}

fn endpoint_url(base: &str, path: &str) -> String {
    format!("{}/{path}", base.trim_end_matches('/'))
}

/// Chat completions over HTTP.
pub struct HttpChat {
    transport: Arc<dyn Transport>,
    sleeper: Arc<dyn Sleeper>,
    backoff: Backoff,
    endpoint: String,
    api_key: Option<String>,
    model: String,
}

impl HttpChat {
    pub fn new(
        transport: Arc<dyn Transport>,
        endpoint: &str,
        api_key: Option<String>,
        model: &str,
    ) -> Self {
        Self {
            transport,
            sleeper: Arc::new(ThreadSleeper),
            backoff: Backoff::default(),
            endpoint: endpoint.to_string(),
            api_key,
            model: model.to_string(),
        }
    }

    pub fn with_backoff(mut self, backoff: Backoff, sleeper: Arc<dyn Sleeper>) -> Self {
        self.backoff = backoff;
        self.sleeper = sleeper;
        self
    }
}

fn parse_chat(body: &str) -> Result<Completion, GatewayError> {
    let v: Value = serde_json::from_str(body).map_err(|e| GatewayError::Decode(e.to_string()))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| GatewayError::Decode("response has no choices".into()))?;
    if choice.get("finish_reason").and_then(Value::as_str) == Some("content_filter") {
        return Err(GatewayError::Content(
            "completion withheld by content filter".into(),
        ));
    }
    let message = choice.get("message");
    if let Some(refusal) = message
        .and_then(|m| m.get("refusal"))
        .and_then(Value::as_str)
    {
        return Err(GatewayError::Content(format!("refusal: {refusal}")));
    }
    let text = message
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .unwrap_or_default();
    if text.trim().is_empty() {
        return Err(GatewayError::Content("empty completion".into()));
    }
    let mut c = Completion::text(text);
    for key in ["model", "usage", "id"] {
        if let Some(val) = v.get(key) {
            c.provider_meta.insert(key.to_string(), val.clone());
        }
    }
    Ok(c)
}

impl ChatProvider for HttpChat {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, _kind: PromptKind, req: &ChatRequest) -> Result<Completion, GatewayError> {
        let body = json!({
            "model": req.model_id,
            "temperature": req.temperature,
            "messages": [{"role": "user", "content": req.prompt}],
        })
        .to_string();
        let text = post_with_retries(
            self.transport.as_ref(),
            self.sleeper.as_ref(),
            self.backoff,
            &endpoint_url(&self.endpoint, "chat/completions"),
            self.api_key.as_deref(),
            &body,
            req.max_retries,
        )?;
        parse_chat(&text)
    }
}

/// Embeddings over HTTP.
pub struct HttpEmbedder {
    transport: Arc<dyn Transport>,
    sleeper: Arc<dyn Sleeper>,
    backoff: Backoff,
    endpoint: String,
    api_key: Option<String>,
    model: String,
    max_retries: u32,
    char_limit: usize,
}

impl HttpEmbedder {
    pub fn new(
        transport: Arc<dyn Transport>,
        endpoint: &str,
        api_key: Option<String>,
        model: &str,
        max_retries: u32,
        char_limit: usize,
    ) -> Self {
        Self {
            transport,
            sleeper: Arc::new(ThreadSleeper),
            backoff: Backoff::default(),
            endpoint: endpoint.to_string(),
            api_key,
            model: model.to_string(),
            max_retries,
            char_limit,
        }
    }

    pub fn with_backoff(mut self, backoff: Backoff, sleeper: Arc<dyn Sleeper>) -> Self {
        self.backoff = backoff;
        self.sleeper = sleeper;
        self
    }
}

impl Embedder for HttpEmbedder {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        let chars = text.chars().count();
        if chars > self.char_limit {
            return Err(EmbedError::TooLong {
                chars,
                limit: self.char_limit,
            });
        }
        let body = json!({"model": self.model, "input": text}).to_string();
        let raw = post_with_retries(
            self.transport.as_ref(),
            self.sleeper.as_ref(),
            self.backoff,
            &endpoint_url(&self.endpoint, "embeddings"),
            self.api_key.as_deref(),
            &body,
            self.max_retries,
        )
        .map_err(|e| EmbedError::Provider(e.to_string()))?;
        let v: Value =
            serde_json::from_str(&raw).map_err(|e| EmbedError::Provider(e.to_string()))?;
        let values: Vec<f64> = v
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| EmbedError::Provider("response has no embedding".into()))?
            .iter()
            .map(|x| {
                x.as_f64()
                    .ok_or_else(|| EmbedError::Provider("non-numeric embedding".into()))
            })
            .collect::<Result<_, _>>()?;
        if values.is_empty() {
            return Err(EmbedError::Provider("empty embedding".into()));
        }
        Ok(EmbeddingVector {
            model_id: self.model.clone(),
            values,
        })
    }
}
