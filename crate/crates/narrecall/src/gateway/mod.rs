//! Chat and embedding providers behind one interface, with retries, an
//! in-flight cap, an audit log and an on-disk embedding cache.
//!
//! Providers:
//! * [`HttpChat`] / [`HttpEmbedder`]: an OpenAI-compatible HTTP API.
//! * [`MockProvider`]: the deterministic offline model from the core crate.
//! * [`ReplayProvider`]: answers from a recorded audit log.
//! * [`ScriptedProvider`]: a fixed queue of answers, for tests.

mod audit;
mod cache;
mod http;
mod providers;

use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};

use narrecall_core::prompt::{render_prompt, PromptError};
use narrecall_core::{PromptArgs, PromptKind};
use serde::{Deserialize, Serialize};

use crate::clock::Clock;

pub use audit::{read_audit, AuditLog, AuditRecord};
pub use cache::{CacheOnlyEmbedder, CachedEmbedder};
pub use http::{
    Backoff, HttpChat, HttpEmbedder, HttpResponse, NoSleep, Sleeper, ThreadSleeper, Transport,
    UreqTransport,
};
pub use providers::{MockProvider, ReplayProvider, ScriptedProvider};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("transport failed after {attempts} attempt(s): {last}")]
    Transport { attempts: u32, last: String },
    #[error("provider rejected the request (status {status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("provider returned no usable content: {0}")]
    Content(String),
    #[error("malformed provider response: {0}")]
    Decode(String),
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error("no recorded {kind} completion for this prompt")]
    ReplayMiss { kind: PromptKind },
    #[error("scripted provider has no answers left")]
    ScriptExhausted,
    #[error("empty prompt")]
    EmptyPrompt,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("mock provider: {0}")]
    Mock(String),
    #[error("audit log: {0}")]
    Audit(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub temperature: f64,
    pub prompt: String,
    pub max_retries: u32,
}

impl ChatRequest {
    pub fn new(
        model_id: &str,
        temperature: f64,
        prompt: String,
        max_retries: u32,
    ) -> Result<Self, GatewayError> {
        if prompt.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        Ok(Self {
            model_id: model_id.to_string(),
            temperature: temperature.max(0.0),
            prompt,
            max_retries,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    /// Provider text, byte-exact.
    pub raw_text: String,
    #[serde(default)]
    pub provider_meta: BTreeMap<String, serde_json::Value>,
}

impl Completion {
    pub fn text(raw_text: impl Into<String>) -> Self {
        Self {
            raw_text: raw_text.into(),
            provider_meta: BTreeMap::new(),
        }
    }
}

pub trait ChatProvider: Send + Sync {
    /// Model identifier recorded in audit logs and manifests.
    fn model_id(&self) -> &str;
    fn complete(&self, kind: PromptKind, request: &ChatRequest)
        -> Result<Completion, GatewayError>;
}

impl<P: ChatProvider + ?Sized> ChatProvider for Arc<P> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn complete(
        &self,
        kind: PromptKind,
        request: &ChatRequest,
    ) -> Result<Completion, GatewayError> {
        (**self).complete(kind, request)
    }
}

/// Counting semaphore bounding concurrent provider calls.
#[derive(Debug)]
pub struct InFlight {
    cap: usize,
    busy: Mutex<usize>,
    freed: Condvar,
}

pub struct InFlightGuard<'a>(&'a InFlight);

impl InFlight {
    pub fn new(cap: usize) -> Self {
        Self {
            cap: cap.max(1),
            busy: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn acquire(&self) -> InFlightGuard<'_> {
        let mut busy = self.busy.lock().unwrap_or_else(|e| e.into_inner());
        while *busy >= self.cap {
            busy = self.freed.wait(busy).unwrap_or_else(|e| e.into_inner());
        }
        *busy += 1;
        InFlightGuard(self)
    }
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut busy = self.0.busy.lock().unwrap_or_else(|e| e.into_inner());
        *busy -= 1;
        self.0.freed.notify_one();
    }
}

/// Shared front door for chat calls: renders prompts, applies default
/// temperatures, caps concurrency and writes the audit log.
pub struct Gateway {
    provider: Box<dyn ChatProvider>,
    audit: Option<AuditLog>,
    clock: Arc<dyn Clock>,
    limit: InFlight,
    max_retries: u32,
    scoring_temperature: f64,
}

impl Gateway {
    pub fn new(
        provider: Box<dyn ChatProvider>,
        clock: Arc<dyn Clock>,
        max_in_flight: usize,
        max_retries: u32,
    ) -> Self {
        Self {
            provider,
            audit: None,
            clock,
            limit: InFlight::new(max_in_flight),
            max_retries,
            scoring_temperature: 0.0,
        }
    }

    pub fn with_audit(mut self, audit: AuditLog) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn with_scoring_temperature(mut self, t: f64) -> Self {
        self.scoring_temperature = t;
        self
    }

    pub fn model_id(&self) -> &str {
        self.provider.model_id()
    }

    pub fn max_in_flight(&self) -> usize {
        self.limit.cap()
    }

    pub fn temperature(&self, kind: PromptKind) -> f64 {
        match kind {
            PromptKind::NarrativeGeneration | PromptKind::LureGeneration => {
                kind.default_temperature()
            }
            _ => self.scoring_temperature,
        }
    }

    /// Renders `kind` with `args` and completes it.
    pub fn run(&self, kind: PromptKind, args: &PromptArgs) -> Result<Completion, GatewayError> {
        let prompt = render_prompt(kind, args)?;
        self.complete(kind, prompt)
    }

    pub fn complete(&self, kind: PromptKind, prompt: String) -> Result<Completion, GatewayError> {
        let req = ChatRequest::new(
            self.model_id(),
            self.temperature(kind),
            prompt,
            self.max_retries,
        )?;
        let completion = {
            let _slot = self.limit.acquire();
            self.provider.complete(kind, &req)?
        };
        if completion.raw_text.trim().is_empty() {
            return Err(GatewayError::Content("empty completion".into()));
        }
        if let Some(log) = &self.audit {
            log.append(&AuditRecord {
                timestamp: self.clock.now(),
                kind,
                model: self.model_id().to_string(),
                prompt: req.prompt,
                completion: completion.raw_text.clone(),
            })
            .map_err(|e| GatewayError::Audit(e.to_string()))?;
        }
        Ok(completion)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SteppingClock;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn empty_prompt_rejected() {
        assert_eq!(
            ChatRequest::new("m", 0.0, "  ".into(), 1),
            Err(GatewayError::EmptyPrompt)
        );
    }

    #[test]
    fn missing_placeholder_surfaces() {
        let g = Gateway::new(
            Box::new(MockProvider::new(0)),
            Arc::new(SteppingClock::fixed()),
            1,
            0,
        );
        let err = g
            .run(PromptKind::LureGeneration, &PromptArgs::new())
            .unwrap_err();
        assert!(err.to_string().contains("segmentation"), "{err}");
    }

    #[test]
    fn empty_completion_is_content_error() {
        let p = ScriptedProvider::new(vec![Ok("   ".into())]);
        let g = Gateway::new(Box::new(p), Arc::new(SteppingClock::fixed()), 1, 0);
        let err = g
            .complete(PromptKind::RecallSegmentation, "x".into())
            .unwrap_err();
        assert!(matches!(err, GatewayError::Content(_)));
    }

    #[test]
    fn in_flight_cap_holds() {
        let sem = Arc::new(InFlight::new(2));
        let now = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        std::thread::scope(|s| {
            for _ in 0..8 {
                let (sem, now, peak) = (sem.clone(), now.clone(), peak.clone());
                s.spawn(move || {
                    let _g = sem.acquire();
                    let v = now.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(v, Ordering::SeqCst);
                    std::thread::sleep(std::time::Duration::from_millis(5));
                    now.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn scoring_temperature_zero_by_default() {
        let g = Gateway::new(
            Box::new(MockProvider::new(0)),
            Arc::new(SteppingClock::fixed()),
            1,
            0,
        );
        assert_eq!(g.temperature(PromptKind::RecallScoring), 0.0);
        assert_eq!(g.temperature(PromptKind::NarrativeGeneration), 0.6);
        assert_eq!(g.temperature(PromptKind::LureGeneration), 0.3);
    }
}
