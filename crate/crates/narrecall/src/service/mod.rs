//! Experiment service: session state machine over an append-only JSONL event
//! log, and the HTTP API around it.
//!
//! Every command validates against the current session, appends its events
//! to the log and only then updates memory, so a crash never leaves memory
//! ahead of the log. On startup the log is replayed to rebuild all sessions.

mod http;

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use narrecall_core::corpus::{assemble_prose, sample_probes, CorpusError, LurePool};
use narrecall_core::recognition::RecognitionTrial;
use narrecall_core::session::{
    self, session_seed, Event, EventRecord, NextProbe, Session, SessionError, State, Task,
    COUNTDOWN_S, MARQUEE_SPEED_PX_S, RECALL_PROMPT,
};
use narrecall_core::Narrative;
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::io::{self, Corpus, IoError};

pub use http::{router, serve};

/// Event log file name inside the data directory.
pub const EVENT_LOG: &str = "events.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown narrative `{0}`")]
    UnknownNarrative(String),
    #[error("narrative `{0}` has no lure pool; recognition sessions need one")]
    MissingLures(String),
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("event log: {0}")]
    Log(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub participant_id: String,
    pub narrative_id: String,
    pub task: Task,
    pub state: State,
    pub instructions: String,
}

/// What the client needs to run the marquee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stimulus {
    pub session_id: String,
    pub prose: String,
    pub char_count: usize,
    pub countdown_s: u32,
    pub marquee_speed_px_s: u32,
    pub font_color: String,
    pub background_color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresentationAck {
    pub state: State,
    pub expected_s: f64,
    pub fast: bool,
    /// Recall sessions: the text prompt shown above the textbox.
    pub recall_prompt: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerAck {
    pub position: u8,
    pub completed: bool,
}

/// Unscored recall as stored by the service. Scoring turns these into
/// recall records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecallSubmission {
    pub participant_id: String,
    pub narrative_id: String,
    pub session_id: String,
    pub recall_text: String,
    pub submitted_at: String,
}

/// Optional equality filters on exported records.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportFilter {
    pub narrative_id: Option<String>,
    pub participant_id: Option<String>,
    pub task: Option<Task>,
}

impl ExportFilter {
    /// Parses `key:value` (or `key=value`) pairs separated by commas. Keys:
    /// `narrative` / `narrative_id`, `participant` / `participant_id`, `task`.
    pub fn parse(s: &str) -> Result<Self, ServiceError> {
        let mut f = ExportFilter::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once([':', '=']).ok_or_else(|| {
                ServiceError::BadRequest(format!("filter term `{part}` has no value"))
            })?;
            let v = v.trim().to_string();
            match k.trim() {
                "narrative" | "narrative_id" => f.narrative_id = Some(v),
                "participant" | "participant_id" => f.participant_id = Some(v),
                "task" => {
                    f.task = Some(match v.as_str() {
                        "recall" => Task::Recall,
                        "recognition" => Task::Recognition,
                        _ => return Err(ServiceError::BadRequest(format!("unknown task `{v}`"))),
                    })
                }
                other => {
                    return Err(ServiceError::BadRequest(format!(
                        "unknown filter key `{other}`"
                    )))
                }
            }
        }
        Ok(f)
    }

    fn admits(&self, s: &Session) -> bool {
        self.narrative_id
            .as_ref()
            .is_none_or(|n| *n == s.narrative_id)
            && self
                .participant_id
                .as_ref()
                .is_none_or(|p| *p == s.participant_id)
            && self.task.is_none_or(|t| t == s.task)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Export {
    pub recalls: Vec<RecallSubmission>,
    pub recognition: Vec<RecognitionTrial>,
}

impl Export {
    /// Completed sessions only, ordered by (narrative, participant, time).
    pub fn from_sessions<'a>(
        sessions: impl IntoIterator<Item = &'a Session>,
        filter: &ExportFilter,
    ) -> Self {
        let mut out = Export::default();
        for s in sessions {
            if s.state != State::Completed || !filter.admits(s) {
                continue;
            }
            match s.task {
                Task::Recall => {
                    if let Some(r) = &s.recall {
                        out.recalls.push(RecallSubmission {
                            participant_id: s.participant_id.clone(),
                            narrative_id: s.narrative_id.clone(),
                            session_id: s.session_id.clone(),
                            recall_text: r.text.clone(),
                            submitted_at: r.timestamp.clone(),
                        });
                    }
                }
                Task::Recognition => out.recognition.extend(s.trials()),
            }
        }
        out.recalls.sort_by(|a, b| {
            (
                &a.narrative_id,
                &a.participant_id,
                &a.submitted_at,
                &a.session_id,
            )
                .cmp(&(
                    &b.narrative_id,
                    &b.participant_id,
                    &b.submitted_at,
                    &b.session_id,
                ))
        });
        out.recognition.sort_by(|a, b| {
            (
                &a.narrative_id,
                &a.participant_id,
                &a.timestamp,
                a.probe_position,
            )
                .cmp(&(
                    &b.narrative_id,
                    &b.participant_id,
                    &b.timestamp,
                    b.probe_position,
                ))
        });
        out
    }

    /// Writes `recall_texts.jsonl` and `recognition/trials.jsonl` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, IoError> {
        let recalls = dir.join("recall_texts.jsonl");
        let trials = dir.join("recognition").join("trials.jsonl");
        io::write_jsonl(&recalls, &self.recalls)?;
        io::write_jsonl(&trials, &self.recognition)?;
        Ok(vec![recalls, trials])
    }
}

/// Reads an event log; a missing file is an empty log.
pub fn read_event_log(path: &Path) -> Result<Vec<EventRecord>, IoError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    io::read_jsonl(path)
}

struct Inner {
    sessions: BTreeMap<String, Session>,
    log: BufWriter<File>,
    next_seq: u64,
    created: u64,
}

pub struct ExperimentService {
    corpus: Corpus,
    clock: Arc<dyn Clock>,
    master_seed: u64,
    log_path: PathBuf,
    inner: Mutex<Inner>,
}

impl ExperimentService {
    /// Opens (or creates) `data_dir/events.jsonl` and replays it.
    pub fn open(
        corpus: Corpus,
        data_dir: &Path,
        clock: Arc<dyn Clock>,
        master_seed: u64,
    ) -> Result<Self, ServiceError> {
        std::fs::create_dir_all(data_dir).map_err(|e| ServiceError::Log(e.to_string()))?;
        let log_path = data_dir.join(EVENT_LOG);
        let records = read_event_log(&log_path)?;
        let sessions = session::replay(&records)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| ServiceError::Log(e.to_string()))?;
        let inner = Inner {
            next_seq: records.last().map_or(0, |r| r.seq + 1),
            created: sessions.len() as u64,
            sessions,
            log: BufWriter::new(file),
        };
        Ok(Self {
            corpus,
            clock,
            master_seed,
            log_path,
            inner: Mutex::new(inner),
        })
    }

    pub fn log_path(&self) -> &Path {
        &self.log_path
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn narrative(&self, id: &str) -> Result<&Narrative, ServiceError> {
        self.corpus
            .narratives
            .get(id)
            .ok_or_else(|| ServiceError::UnknownNarrative(id.to_string()))
    }

    /// Lure pool for `narrative`. A scrambled narrative `X-scrambled` without
    /// its own pool borrows the pool of `X`, since the clauses are the same.
    fn lures_for(&self, narrative: &Narrative) -> Result<LurePool, ServiceError> {
        if let Some(p) = self.corpus.lures.get(&narrative.id) {
            return Ok(p.clone());
        }
        let base = narrative
            .id
            .strip_suffix("-scrambled")
            .filter(|_| narrative.is_scrambled());
        match base.and_then(|b| self.corpus.lures.get(b)) {
            Some(p) => Ok(LurePool {
                narrative_id: narrative.id.clone(),
                lures: p.lures.clone(),
            }),
            None => Err(ServiceError::MissingLures(narrative.id.clone())),
        }
    }

    /// Applies `events` to a copy of the session, appends them to the log and
    /// then installs the copy.
    fn commit(
        &self,
        inner: &mut Inner,
        mut session: Session,
        events: Vec<Event>,
    ) -> Result<Session, ServiceError> {
        let mut records = Vec::with_capacity(events.len());
        for (i, event) in events.into_iter().enumerate() {
            let timestamp = if matches!(event, Event::SessionCreated { .. }) {
                session.created_at.clone()
            } else {
                let t = self.clock.now();
                session.apply(&event, &t)?;
                t
            };
            records.push(EventRecord {
                seq: inner.next_seq + i as u64,
                session_id: session.session_id.clone(),
                timestamp,
                event,
            });
        }
        let write = |log: &mut BufWriter<File>| -> std::io::Result<()> {
            for r in &records {
                serde_json::to_writer(&mut *log, r).map_err(std::io::Error::other)?;
                log.write_all(b"\n")?;
            }
            log.flush()?;
            log.get_ref().sync_data()
        };
        write(&mut inner.log).map_err(|e| ServiceError::Log(e.to_string()))?;
        inner.next_seq += records.len() as u64;
        inner
            .sessions
            .insert(session.session_id.clone(), session.clone());
        Ok(session)
    }

    fn get(inner: &Inner, id: &str) -> Result<Session, ServiceError> {
        inner
            .sessions
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    pub fn create_session(
        &self,
        participant_id: &str,
        narrative_id: &str,
        task: Task,
    ) -> Result<CreatedSession, ServiceError> {
        if participant_id.trim().is_empty() {
            return Err(ServiceError::BadRequest("participant_id is empty".into()));
        }
        let narrative = self.narrative(narrative_id)?;
        if task == Task::Recognition {
            self.lures_for(narrative)?;
        }
        let mut inner = self.lock();
        let id = session::session_id(self.master_seed, inner.created);
        if inner.sessions.contains_key(&id) {
            return Err(SessionError::DuplicateSession(id).into());
        }
        let (s, ev) = Session::create(&id, participant_id, narrative_id, task, &self.clock.now());
        let s = self.commit(&mut inner, s, vec![ev])?;
        inner.created += 1;
        Ok(CreatedSession {
            session_id: s.session_id,
            participant_id: s.participant_id,
            narrative_id: s.narrative_id,
            task,
            state: s.state,
            instructions: task.instructions().to_string(),
        })
    }

    pub fn consent(&self, id: &str) -> Result<State, ServiceError> {
        let mut inner = self.lock();
        let s = Self::get(&inner, id)?;
        let ev = s.consent()?;
        Ok(self.commit(&mut inner, s, ev)?.state)
    }

    /// Hands out the prose once; a second request is a state error.
    pub fn stimulus(&self, id: &str) -> Result<Stimulus, ServiceError> {
        let mut inner = self.lock();
        let s = Self::get(&inner, id)?;
        let ev = s.start_presentation()?;
        let prose = assemble_prose(self.narrative(&s.narrative_id)?);
        self.commit(&mut inner, s, ev)?;
        Ok(Stimulus {
            session_id: id.to_string(),
            char_count: prose.chars().count(),
            prose,
            countdown_s: COUNTDOWN_S,
            marquee_speed_px_s: MARQUEE_SPEED_PX_S,
            font_color: "black".into(),
            background_color: "white".into(),
        })
    }

    /// Client reports the marquee finished after `elapsed_s` seconds. Fast
    /// runs are flagged, not rejected. Recognition sessions draw their probes
    /// here from the per-session seed.
    pub fn presentation_finished(
        &self,
        id: &str,
        elapsed_s: f64,
    ) -> Result<PresentationAck, ServiceError> {
        if !elapsed_s.is_finite() || elapsed_s < 0.0 {
            return Err(ServiceError::BadRequest(
                "elapsed_s must be a non-negative number".into(),
            ));
        }
        let mut inner = self.lock();
        let s = Self::get(&inner, id)?;
        let narrative = self.narrative(&s.narrative_id)?;
        let chars = assemble_prose(narrative).chars().count();
        let probes = if s.task == Task::Recognition && s.state == State::Presenting {
            let pool = self.lures_for(narrative)?;
            Some(sample_probes(
                narrative,
                &pool,
                session_seed(id, self.master_seed),
            )?)
        } else {
            None
        };
        let ev = s.finish_presentation(elapsed_s, chars, probes)?;
        let s = self.commit(&mut inner, s, ev)?;
        let p = s.presentation.expect("set by presentation_finished");
        Ok(PresentationAck {
            state: s.state,
            expected_s: p.expected_s,
            fast: p.fast,
            recall_prompt: (s.task == Task::Recall).then(|| RECALL_PROMPT.to_string()),
        })
    }

    /// Returns the completion token. Same text again gives the same token.
    pub fn submit_recall(&self, id: &str, text: &str) -> Result<String, ServiceError> {
        let mut inner = self.lock();
        let s = Self::get(&inner, id)?;
        let (ev, token) = s.submit_recall(text)?;
        if !ev.is_empty() {
            self.commit(&mut inner, s, ev)?;
        }
        Ok(token)
    }

    pub fn next_probe(&self, id: &str) -> Result<NextProbe, ServiceError> {
        let mut inner = self.lock();
        let s = Self::get(&inner, id)?;
        let (ev, next) = s.next_probe()?;
        if !ev.is_empty() {
            self.commit(&mut inner, s, ev)?;
        }
        Ok(next)
    }

    pub fn answer_probe(
        &self,
        id: &str,
        position: u8,
        response_yes: bool,
    ) -> Result<AnswerAck, ServiceError> {
        let mut inner = self.lock();
        let s = Self::get(&inner, id)?;
        let ev = s.answer_probe(position, response_yes)?;
        let s = self.commit(&mut inner, s, ev)?;
        Ok(AnswerAck {
            position,
            completed: s.state == State::Completed,
        })
    }

    pub fn session(&self, id: &str) -> Result<Session, ServiceError> {
        Self::get(&self.lock(), id)
    }

    /// Copy of every session, keyed by id.
    pub fn snapshot(&self) -> BTreeMap<String, Session> {
        self.lock().sessions.clone()
    }

    pub fn export(&self, filter: &ExportFilter) -> Export {
        let inner = self.lock();
        Export::from_sessions(inner.sessions.values(), filter)
    }
}
