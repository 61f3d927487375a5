use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use narrecall_core::mock::MockChat;
use narrecall_core::PromptKind;

use super::audit::{read_audit, AuditRecord};
use super::{ChatProvider, ChatRequest, Completion, GatewayError};

/// The core mock model. Repeated identical prompts get successive variants,
/// so generating several narratives from one template yields distinct ones.
#[derive(Debug)]
pub struct MockProvider {
    chat: MockChat,
    model: String,
    seen: Mutex<HashMap<String, u64>>,
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        Self {
            chat: MockChat::new(seed),
            model: format!("mock-chat-{seed}"),
            seen: Mutex::new(HashMap::new()),
        }
    }
}

impl ChatProvider for MockProvider {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, _kind: PromptKind, req: &ChatRequest) -> Result<Completion, GatewayError> {
        let variant = {
            let mut seen = self.seen.lock().unwrap_or_else(|e| e.into_inner());
            let n = seen.entry(req.prompt.clone()).or_insert(0);
            *n += 1;
            *n - 1
        };
        self.chat
            .complete(&req.prompt, variant)
            .map(Completion::text)
            .map_err(|e| GatewayError::Mock(e.to_string()))
    }
}

/// Answers from recorded audit records, matched on (kind, exact prompt).
/// Repeats of one prompt get the recorded answers in order, and the last one
/// once they run out.
#[derive(Debug)]
pub struct ReplayProvider {
    model: String,
    answers: HashMap<(PromptKind, String), Vec<String>>,
    cursor: Mutex<HashMap<(PromptKind, String), usize>>,
}

impl ReplayProvider {
    pub fn from_records(records: impl IntoIterator<Item = AuditRecord>) -> Self {
        let mut answers: HashMap<(PromptKind, String), Vec<String>> = HashMap::new();
        let mut model = String::new();
        for r in records {
            if model.is_empty() {
                model = r.model.clone();
            }
            answers
                .entry((r.kind, r.prompt))
                .or_default()
                .push(r.completion);
        }
        Self {
            model: if model.is_empty() {
                "replay".into()
            } else {
                model
            },
            answers,
            cursor: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        Ok(Self::from_records(read_audit(path)?))
    }

    pub fn len(&self) -> usize {
        self.answers.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

impl ChatProvider for ReplayProvider {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, kind: PromptKind, req: &ChatRequest) -> Result<Completion, GatewayError> {
        let key = (kind, req.prompt.clone());
        let list = self
            .answers
            .get(&key)
            .ok_or(GatewayError::ReplayMiss { kind })?;
        let mut cursor = self.cursor.lock().unwrap_or_else(|e| e.into_inner());
        let i = cursor.entry(key).or_insert(0);
        let text = list[(*i).min(list.len() - 1)].clone();
        *i += 1;
        Ok(Completion::text(text))
    }
}

/// Returns queued answers in order regardless of prompt.
#[derive(Debug)]
pub struct ScriptedProvider {
    queue: Mutex<VecDeque<Result<String, GatewayError>>>,
    calls: AtomicUsize,
}

impl ScriptedProvider {
    pub fn new(answers: Vec<Result<String, GatewayError>>) -> Self {
        Self {
            queue: Mutex::new(answers.into()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatProvider for ScriptedProvider {
    fn model_id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, _kind: PromptKind, _req: &ChatRequest) -> Result<Completion, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.queue
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .pop_front()
            .unwrap_or(Err(GatewayError::ScriptExhausted))
            .map(Completion::text)
    }
}
