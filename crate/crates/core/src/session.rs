//! Experiment session state machine.
//!
//! Sessions are event-sourced: every command validates against the current
//! state and returns the events to append; [`Session::apply`] folds an event
//! into the state. Replaying a session's events reproduces it exactly. Probe
//! sets travel inside the `presentation_finished` event so replay needs no
//! random number generator.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Probe, ProbeSet, CHARS_PER_SECOND};
use crate::mock::hash64;
use crate::recognition::RecognitionTrial;

pub const RECALL_INSTRUCTIONS: &str = "This is a recall task. You will be shown a small narrative in the form of rolling text and then you will be prompted to write it down as you remember it. Try to include as many details as possible.";
pub const RECOGNITION_INSTRUCTIONS: &str = "This is a recognition task. You will be shown a small narrative in the form of rolling text and then you will be shown different clauses, one at a time and your task will be to choose whether it was shown in the text or not according to your memory.";
pub const PROBE_QUESTION: &str = "Was the following clause presented in the story?";
pub const RECALL_PROMPT: &str = "Please recall the story";
pub const COUNTDOWN_S: u32 = 3;
pub const MARQUEE_SPEED_PX_S: u32 = 250;
/// Presentations reported faster than this fraction of `chars / 12` seconds
/// are flagged.
pub const FAST_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Recall,
    Recognition,
}

impl Task {
    pub fn instructions(self) -> &'static str {
        match self {
            Task::Recall => RECALL_INSTRUCTIONS,
            Task::Recognition => RECOGNITION_INSTRUCTIONS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum State {
    Created,
    Consented,
    Presenting,
    Testing,
    Completed,
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            State::Created => "created",
            State::Consented => "consented",
            State::Presenting => "presenting",
            State::Testing => "testing",
            State::Completed => "completed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("session is {actual}, expected {expected}")]
    State { expected: State, actual: State },
    #[error("operation requires a {expected:?} session")]
    WrongTask { expected: Task },
    #[error("recall already submitted with different text")]
    RecallConflict,
    #[error("probe {0} already answered")]
    AlreadyAnswered(u8),
    #[error("probe sequence error: {0}")]
    Sequence(String),
    #[error("recognition session needs a probe set")]
    MissingProbeSet,
    #[error("event for unknown session {0}")]
    UnknownSession(String),
    #[error("session {0} created twice")]
    DuplicateSession(String),
    #[error("invalid event for session {session}: {reason}")]
    InvalidEvent { session: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Event {
    SessionCreated {
        participant_id: String,
        narrative_id: String,
        task: Task,
    },
    Consent,
    PresentationStarted,
    PresentationFinished {
        elapsed_s: f64,
        expected_s: f64,
        fast: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        probe_set: Option<ProbeSet>,
    },
    RecallSubmitted {
        text: String,
        token: String,
    },
    ProbeServed {
        position: u8,
    },
    ProbeAnswered {
        position: u8,
        response_yes: bool,
    },
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub session_id: String,
    pub timestamp: String,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeAnswer {
    pub position: u8,
    pub response_yes: bool,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredRecall {
    pub text: String,
    pub token: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresentationReport {
    pub elapsed_s: f64,
    pub expected_s: f64,
    pub fast: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub participant_id: String,
    pub narrative_id: String,
    pub task: Task,
    pub state: State,
    pub probe_set: Option<ProbeSet>,
    pub created_at: String,
    pub completed_at: Option<String>,
    pub presentation: Option<PresentationReport>,
    pub recall: Option<StoredRecall>,
    /// Number of probes served so far.
    pub served: u8,
    pub answers: Vec<ProbeAnswer>,
}

/// What the next-probe request yields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum NextProbe {
    Probe {
        position: u8,
        text: String,
        question: String,
    },
    Done,
}

/// Completion token for a recall submission: hex SHA-256 prefix of the
/// session id and text.
pub fn completion_token(session_id: &str, text: &str) -> String {
    let mut h = Sha256::new();
    h.update(session_id.as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    let d = h.finalize();
    d[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Deterministic session id for the `counter`-th session under `master_seed`.
pub fn session_id(master_seed: u64, counter: u64) -> String {
    let h = hash64(&[
        b"session",
        &master_seed.to_le_bytes(),
        &counter.to_le_bytes(),
    ]);
    format!("s-{h:016x}")
}

/// Per-session RNG seed: `hash(session_id, master_seed)`.
pub fn session_seed(session_id: &str, master_seed: u64) -> u64 {
    hash64(&[session_id.as_bytes(), &master_seed.to_le_bytes()])
}

impl Session {
    /// A new session and its creation event.
    pub fn create(
        session_id: &str,
        participant_id: &str,
        narrative_id: &str,
        task: Task,
        timestamp: &str,
    ) -> (Session, Event) {
        let ev = Event::SessionCreated {
            participant_id: participant_id.to_string(),
            narrative_id: narrative_id.to_string(),
            task,
        };
        let s = Session {
            session_id: session_id.to_string(),
            participant_id: participant_id.to_string(),
            narrative_id: narrative_id.to_string(),
            task,
            state: State::Created,
            probe_set: None,
            created_at: timestamp.to_string(),
            completed_at: None,
            presentation: None,
            recall: None,
            served: 0,
            answers: Vec::new(),
        };
        (s, ev)
    }

    fn expect(&self, expected: State) -> Result<(), SessionError> {
        if self.state == expected {
            Ok(())
        } else {
            Err(SessionError::State {
                expected,
                actual: self.state,
            })
        }
    }

    fn expect_task(&self, expected: Task) -> Result<(), SessionError> {
        if self.task == expected {
            Ok(())
        } else {
            Err(SessionError::WrongTask { expected })
        }
    }

    pub fn consent(&self) -> Result<Vec<Event>, SessionError> {
        self.expect(State::Created)?;
        Ok(vec![Event::Consent])
    }

    /// Starts the one allowed presentation of the stimulus.
    pub fn start_presentation(&self) -> Result<Vec<Event>, SessionError> {
        self.expect(State::Consented)?;
        Ok(vec![Event::PresentationStarted])
    }

    /// Client-reported end of the marquee. Recognition sessions receive their
    /// probe set here.
    pub fn finish_presentation(
        &self,
        elapsed_s: f64,
        char_count: usize,
        probe_set: Option<ProbeSet>,
    ) -> Result<Vec<Event>, SessionError> {
        self.expect(State::Presenting)?;
        if self.task == Task::Recognition && probe_set.is_none() {
            return Err(SessionError::MissingProbeSet);
        }
        let expected_s = char_count as f64 / CHARS_PER_SECOND;
        Ok(vec![Event::PresentationFinished {
            elapsed_s,
            expected_s,
            fast: elapsed_s < FAST_FRACTION * expected_s,
            probe_set: if self.task == Task::Recognition {
                probe_set
            } else {
                None
            },
        }])
    }

    /// Stores a recall. Resubmitting the same text returns the same token and
    /// no new events.
    pub fn submit_recall(&self, text: &str) -> Result<(Vec<Event>, String), SessionError> {
        self.expect_task(Task::Recall)?;
        if let Some(prev) = &self.recall {
            return if prev.text == text {
                Ok((Vec::new(), prev.token.clone()))
            } else {
                Err(SessionError::RecallConflict)
            };
        }
        self.expect(State::Testing)?;
        let token = completion_token(&self.session_id, text);
        Ok((
            vec![
                Event::RecallSubmitted {
                    text: text.to_string(),
                    token: token.clone(),
                },
                Event::Completed,
            ],
            token,
        ))
    }

    fn probe(&self, position: u8) -> Option<&Probe> {
        self.probe_set
            .as_ref()
            .and_then(|s| s.probes.iter().find(|p| p.position == position))
    }

    fn n_probes(&self) -> u8 {
        self.probe_set.as_ref().map_or(0, |s| s.probes.len() as u8)
    }

    /// Serves the next probe, or reports that all probes are answered.
    pub fn next_probe(&self) -> Result<(Vec<Event>, NextProbe), SessionError> {
        self.expect_task(Task::Recognition)?;
        if self.state == State::Completed {
            return Ok((Vec::new(), NextProbe::Done));
        }
        self.expect(State::Testing)?;
        let answered = self.answers.len() as u8;
        if self.served > answered {
            return Err(SessionError::Sequence(format!(
                "probe {} has not been answered",
                self.served
            )));
        }
        if answered >= self.n_probes() {
            return Ok((Vec::new(), NextProbe::Done));
        }
        let position = self.served + 1;
        let probe = self.probe(position).ok_or(SessionError::MissingProbeSet)?;
        Ok((
            vec![Event::ProbeServed { position }],
            NextProbe::Probe {
                position,
                text: probe.text.clone(),
                question: PROBE_QUESTION.to_string(),
            },
        ))
    }

    /// Records the answer to the currently served probe. The last answer
    /// completes the session.
    pub fn answer_probe(
        &self,
        position: u8,
        response_yes: bool,
    ) -> Result<Vec<Event>, SessionError> {
        self.expect_task(Task::Recognition)?;
        if self.answers.iter().any(|a| a.position == position) {
            return Err(SessionError::AlreadyAnswered(position));
        }
        self.expect(State::Testing)?;
        if position != self.served || self.served as usize == self.answers.len() {
            return Err(SessionError::Sequence(format!(
                "probe {position} is not the current probe"
            )));
        }
        let mut events = vec![Event::ProbeAnswered {
            position,
            response_yes,
        }];
        if position == self.n_probes() {
            events.push(Event::Completed);
        }
        Ok(events)
    }

    fn invalid(&self, reason: &str) -> SessionError {
        SessionError::InvalidEvent {
            session: self.session_id.clone(),
            reason: reason.to_string(),
        }
    }

    /// Folds one event into the session, checking it is legal in the current
    /// state.
    pub fn apply(&mut self, event: &Event, timestamp: &str) -> Result<(), SessionError> {
        match event {
            Event::SessionCreated { .. } => {
                return Err(SessionError::DuplicateSession(self.session_id.clone()))
            }
            Event::Consent => {
                self.expect(State::Created)?;
                self.state = State::Consented;
            }
            Event::PresentationStarted => {
                self.expect(State::Consented)?;
                self.state = State::Presenting;
            }
            Event::PresentationFinished {
                elapsed_s,
                expected_s,
                fast,
                probe_set,
            } => {
                self.expect(State::Presenting)?;
                if (self.task == Task::Recognition) != probe_set.is_some() {
                    return Err(self.invalid("probe set must accompany recognition sessions only"));
                }
                self.presentation = Some(PresentationReport {
                    elapsed_s: *elapsed_s,
                    expected_s: *expected_s,
                    fast: *fast,
                });
                self.probe_set = probe_set.clone();
                self.state = State::Testing;
            }
            Event::RecallSubmitted { text, token } => {
                self.expect_task(Task::Recall)?;
                self.expect(State::Testing)?;
                if self.recall.is_some() {
                    return Err(SessionError::RecallConflict);
                }
                self.recall = Some(StoredRecall {
                    text: text.clone(),
                    token: token.clone(),
                    timestamp: timestamp.to_string(),
                });
            }
            Event::ProbeServed { position } => {
                self.expect_task(Task::Recognition)?;
                self.expect(State::Testing)?;
                if *position != self.served + 1 || self.served as usize != self.answers.len() {
                    return Err(self.invalid("probe served out of order"));
                }
                self.served = *position;
            }
            Event::ProbeAnswered {
                position,
                response_yes,
            } => {
                self.expect_task(Task::Recognition)?;
                self.expect(State::Testing)?;
                if *position != self.served || self.answers.len() as u8 != self.served - 1 {
                    return Err(self.invalid("answer for a probe that is not current"));
                }
                self.answers.push(ProbeAnswer {
                    position: *position,
                    response_yes: *response_yes,
                    timestamp: timestamp.to_string(),
                });
            }
            Event::Completed => {
                self.expect(State::Testing)?;
                let done = match self.task {
                    Task::Recall => self.recall.is_some(),
                    Task::Recognition => self.answers.len() == self.n_probes() as usize,
                };
                if !done {
                    return Err(self.invalid("completed before the task was finished"));
                }
                self.state = State::Completed;
                self.completed_at = Some(timestamp.to_string());
            }
        }
        Ok(())
    }

    /// Recognition trials for the answered probes.
    pub fn trials(&self) -> Vec<RecognitionTrial> {
        self.answers
            .iter()
            .filter_map(|a| {
                let p = self.probe(a.position)?;
                Some(RecognitionTrial {
                    participant_id: self.participant_id.clone(),
                    narrative_id: self.narrative_id.clone(),
                    probe_position: a.position,
                    item: p.item.clone(),
                    is_old: p.is_old(),
                    response_yes: a.response_yes,
                    timestamp: a.timestamp.clone(),
                })
            })
            .collect()
    }
}

/// Rebuilds every session from an ordered event log.
pub fn replay(events: &[EventRecord]) -> Result<BTreeMap<String, Session>, SessionError> {
    let mut sessions: BTreeMap<String, Session> = BTreeMap::new();
    for rec in events {
        match &rec.event {
            Event::SessionCreated {
                participant_id,
                narrative_id,
                task,
            } => {
                if sessions.contains_key(&rec.session_id) {
                    return Err(SessionError::DuplicateSession(rec.session_id.clone()));
                }
                let (s, _) = Session::create(
                    &rec.session_id,
                    participant_id,
                    narrative_id,
                    *task,
                    &rec.timestamp,
                );
                sessions.insert(rec.session_id.clone(), s);
            }
            ev => sessions
                .get_mut(&rec.session_id)
                .ok_or_else(|| SessionError::UnknownSession(rec.session_id.clone()))?
                .apply(ev, &rec.timestamp)?,
        }
    }
    Ok(sessions)
}
