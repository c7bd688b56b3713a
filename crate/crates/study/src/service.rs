//! Session bookkeeping for one or more studies.

use std::collections::{BTreeMap, HashMap};
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use histoprompt_core::seeding::{derive_seed, hash_str, rng};
use histoprompt_core::stats::{write_responses_csv, Choice, ResponseRecord};
use rand::seq::SliceRandom;
use serde::Serialize;
use thiserror::Error;

use crate::clock::Clock;
use crate::definition::StudyDefinition;
use crate::log::{Event, EventLog};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("unknown study {0}")]
    UnknownStudy(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("reader {reader_id} already has a session for study {study_id}")]
    DuplicateSession { study_id: String, reader_id: String },
    #[error("response for {got} but the current item is {expected}")]
    OutOfOrder { expected: String, got: String },
    #[error("item {0} has not been served yet")]
    NotServed(String),
    #[error("invalid choice {0:?}; expected one of definitely_real, maybe_real, maybe_synthetic, definitely_synthetic")]
    InvalidChoice(String),
    #[error("every item of session {0} has already been answered")]
    AlreadyAnswered(String),
    #[error("unknown item {0}")]
    UnknownItem(String),
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("invalid study definition: {0}")]
    InvalidDefinition(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl StudyError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        StudyError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            StudyError::UnknownStudy(_) => "unknown_study",
            StudyError::UnknownSession(_) => "unknown_session",
            StudyError::DuplicateSession { .. } => "duplicate_session",
            StudyError::OutOfOrder { .. } => "out_of_order",
            StudyError::NotServed(_) => "not_served",
            StudyError::InvalidChoice(_) => "invalid_choice",
            StudyError::AlreadyAnswered(_) => "already_answered",
            StudyError::UnknownItem(_) => "unknown_item",
            StudyError::BadRequest(_) => "bad_request",
            StudyError::InvalidDefinition(_) => "invalid_definition",
            StudyError::Io { .. } => "io_failure",
        }
    }
}

/// What a reader sees next. Never carries the truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum NextItem {
    Item {
        item_id: String,
        image_url: String,
        index: usize,
        total: usize,
    },
    Complete {
        complete: bool,
    },
}

/// Read-only snapshot of a session, for operators and tests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub study_id: String,
    pub reader_id: String,
    pub item_order: Vec<String>,
    pub cursor: usize,
    pub served_at: Option<f64>,
}

#[derive(Debug, Clone)]
struct Session {
    study_id: String,
    reader_id: String,
    item_order: Vec<String>,
    cursor: usize,
    /// Serve time of the item at `cursor`, once delivered.
    served_at: Option<f64>,
    last_time: f64,
}

struct StudyState {
    definition: StudyDefinition,
    log: EventLog,
    /// Accepted responses in the order they were received.
    responses: Vec<ResponseRecord>,
}

#[derive(Default)]
struct State {
    studies: BTreeMap<String, StudyState>,
    sessions: HashMap<String, Session>,
}

/// Thread-safe study administration. All mutations go through one lock and
/// are appended to the study's log before the call returns.
pub struct StudyService {
    state: Mutex<State>,
    clock: Arc<dyn Clock>,
}

fn session_id(study_id: &str, reader_id: &str) -> String {
    format!("s-{:016x}", derive_seed(hash_str(study_id), &[hash_str(reader_id)]))
}

impl StudyService {
    /// Opens every study, replaying its event log from `data_dir`.
    pub fn open(
        definitions: Vec<StudyDefinition>,
        data_dir: &Path,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, StudyError> {
        std::fs::create_dir_all(data_dir).map_err(|e| StudyError::io(data_dir, e))?;
        let mut state = State::default();
        for definition in definitions {
            definition.validate()?;
            let path = EventLog::path_for(data_dir, &definition.study_id);
            let (log, events) = EventLog::open(&path).map_err(|e| StudyError::io(&path, e))?;
            let study_id = definition.study_id.clone();
            if state.studies.contains_key(&study_id) {
                return Err(StudyError::InvalidDefinition(format!("study {study_id} defined twice")));
            }
            state.studies.insert(
                study_id.clone(),
                StudyState {
                    definition,
                    log,
                    responses: Vec::new(),
                },
            );
            for event in events {
                state.apply(&study_id, event)?;
            }
        }
        Ok(Self {
            state: Mutex::new(state),
            clock,
        })
    }

    pub fn definition(&self, study_id: &str) -> Result<StudyDefinition, StudyError> {
        let state = self.state.lock().unwrap();
        state
            .studies
            .get(study_id)
            .map(|s| s.definition.clone())
            .ok_or_else(|| StudyError::UnknownStudy(study_id.to_string()))
    }

    /// Starts a reader's session with a seeded permutation of all items.
    /// Without an explicit seed the order derives from the study seed and reader id.
    pub fn create_session(&self, study_id: &str, reader_id: &str, seed: Option<u64>) -> Result<String, StudyError> {
        if reader_id.trim().is_empty() {
            return Err(StudyError::BadRequest("reader_id must not be empty".into()));
        }
        let now = self.clock.now();
        let mut state = self.state.lock().unwrap();
        let study = state
            .studies
            .get(study_id)
            .ok_or_else(|| StudyError::UnknownStudy(study_id.to_string()))?;
        if state
            .sessions
            .values()
            .any(|s| s.study_id == study_id && s.reader_id == reader_id)
        {
            return Err(StudyError::DuplicateSession {
                study_id: study_id.to_string(),
                reader_id: reader_id.to_string(),
            });
        }
        let seed = seed.unwrap_or_else(|| derive_seed(study.definition.seed, &[hash_str(reader_id)]));
        let mut item_order: Vec<String> = study.definition.items.iter().map(|i| i.item_id.clone()).collect();
        item_order.shuffle(&mut rng(seed));
        let session_id = session_id(study_id, reader_id);
        let event = Event::SessionCreated {
            session_id: session_id.clone(),
            reader_id: reader_id.to_string(),
            seed,
            item_order,
            at: now,
        };
        state.record(study_id, event)?;
        tracing::info!(study_id, reader_id, %session_id, seed, "session created");
        Ok(session_id)
    }

    /// The item at the session cursor. Repeated calls return the same item
    /// and keep its first serve time.
    pub fn next_item(&self, session_id: &str) -> Result<NextItem, StudyError> {
        let now = self.clock.now();
        let mut state = self.state.lock().unwrap();
        let session = state
            .sessions
            .get(session_id)
            .ok_or_else(|| StudyError::UnknownSession(session_id.to_string()))?
            .clone();
        let total = session.item_order.len();
        if session.cursor >= total {
            return Ok(NextItem::Complete { complete: true });
        }
        let item_id = session.item_order[session.cursor].clone();
        if session.served_at.is_none() {
            let event = Event::ItemServed {
                session_id: session_id.to_string(),
                item_id: item_id.clone(),
                index: session.cursor,
                at: now.max(session.last_time),
            };
            state.record(&session.study_id, event)?;
        }
        Ok(NextItem::Item {
            image_url: format!("/img/{}/{}", session.study_id, item_id),
            item_id,
            index: session.cursor,
            total,
        })
    }

    /// Records the reader's answer to the current item and advances the cursor.
    pub fn submit_response(
        &self,
        session_id: &str,
        item_id: &str,
        choice: &str,
        comment: Option<String>,
    ) -> Result<ResponseRecord, StudyError> {
        let now = self.clock.now();
        let mut state = self.state.lock().unwrap();
        let session = state
            .sessions
            .get(session_id)
            .ok_or_else(|| StudyError::UnknownSession(session_id.to_string()))?
            .clone();
        if session.cursor >= session.item_order.len() {
            return Err(StudyError::AlreadyAnswered(session_id.to_string()));
        }
        let expected = &session.item_order[session.cursor];
        if item_id != expected {
            return Err(StudyError::OutOfOrder {
                expected: expected.clone(),
                got: item_id.to_string(),
            });
        }
        let served_at = session
            .served_at
            .ok_or_else(|| StudyError::NotServed(item_id.to_string()))?;
        let choice: Choice = choice
            .parse()
            .map_err(|_| StudyError::InvalidChoice(choice.to_string()))?;
        let received_at = now.max(served_at);
        let comment = comment.filter(|c| !c.trim().is_empty());
        let event = Event::ResponseRecorded {
            session_id: session_id.to_string(),
            item_id: item_id.to_string(),
            index: session.cursor,
            choice,
            comment,
            served_at,
            received_at,
            lead_time_s: received_at - served_at,
        };
        state.record(&session.study_id, event)?;
        let study = &state.studies[&session.study_id];
        Ok(study.responses.last().cloned().expect("response just recorded"))
    }

    pub fn session(&self, session_id: &str) -> Result<SessionView, StudyError> {
        let state = self.state.lock().unwrap();
        let s = state
            .sessions
            .get(session_id)
            .ok_or_else(|| StudyError::UnknownSession(session_id.to_string()))?;
        Ok(SessionView {
            session_id: session_id.to_string(),
            study_id: s.study_id.clone(),
            reader_id: s.reader_id.clone(),
            item_order: s.item_order.clone(),
            cursor: s.cursor,
            served_at: s.served_at,
        })
    }

    /// Image path of an item, for the static image route.
    pub fn image_path(&self, study_id: &str, item_id: &str) -> Result<PathBuf, StudyError> {
        let state = self.state.lock().unwrap();
        let study = state
            .studies
            .get(study_id)
            .ok_or_else(|| StudyError::UnknownStudy(study_id.to_string()))?;
        study
            .definition
            .item(item_id)
            .map(|i| i.image_path.clone())
            .ok_or_else(|| StudyError::UnknownItem(item_id.to_string()))
    }

    /// Persisted responses sorted by reader, then answer order.
    pub fn responses(&self, study_id: &str) -> Result<Vec<ResponseRecord>, StudyError> {
        let state = self.state.lock().unwrap();
        let study = state
            .studies
            .get(study_id)
            .ok_or_else(|| StudyError::UnknownStudy(study_id.to_string()))?;
        let mut out = study.responses.clone();
        out.sort_by(|a, b| a.reader_id.cmp(&b.reader_id));
        Ok(out)
    }

    /// Responses as CSV in the analysis input schema.
    pub fn export_csv(&self, study_id: &str) -> Result<Vec<u8>, StudyError> {
        let records = self.responses(study_id)?;
        let mut buf = Vec::new();
        write_responses_csv(&mut buf, &records)
            .map_err(|e| StudyError::io(Path::new("<export>"), io::Error::other(e.to_string())))?;
        Ok(buf)
    }
}

impl State {
    /// Appends the event to the study log, then applies it.
    fn record(&mut self, study_id: &str, event: Event) -> Result<(), StudyError> {
        let study = self
            .studies
            .get_mut(study_id)
            .ok_or_else(|| StudyError::UnknownStudy(study_id.to_string()))?;
        study
            .log
            .append(&event)
            .map_err(|e| StudyError::io(study.log.path(), e))?;
        self.apply(study_id, event)
    }

    fn apply(&mut self, study_id: &str, event: Event) -> Result<(), StudyError> {
        let corrupt = |msg: String| StudyError::InvalidDefinition(format!("event log of {study_id}: {msg}"));
        match event {
            Event::SessionCreated {
                session_id,
                reader_id,
                item_order,
                at,
                ..
            } => {
                self.sessions.insert(
                    session_id,
                    Session {
                        study_id: study_id.to_string(),
                        reader_id,
                        item_order,
                        cursor: 0,
                        served_at: None,
                        last_time: at,
                    },
                );
            }
            Event::ItemServed {
                session_id,
                index,
                at,
                ..
            } => {
                let s = self
                    .sessions
                    .get_mut(&session_id)
                    .ok_or_else(|| corrupt(format!("serve for unknown session {session_id}")))?;
                if index != s.cursor {
                    return Err(corrupt(format!("serve index {index} but cursor {}", s.cursor)));
                }
                s.served_at = Some(at);
                s.last_time = s.last_time.max(at);
            }
            Event::ResponseRecorded {
                session_id,
                item_id,
                index,
                choice,
                comment,
                received_at,
                lead_time_s,
                ..
            } => {
                let s = self
                    .sessions
                    .get_mut(&session_id)
                    .ok_or_else(|| corrupt(format!("response for unknown session {session_id}")))?;
                if index != s.cursor || s.item_order.get(index) != Some(&item_id) {
                    return Err(corrupt(format!("response {item_id} out of sequence")));
                }
                s.cursor += 1;
                s.served_at = None;
                s.last_time = s.last_time.max(received_at);
                let reader_id = s.reader_id.clone();
                let study = self.studies.get_mut(study_id).expect("study exists");
                let truth = study
                    .definition
                    .item(&item_id)
                    .ok_or_else(|| corrupt(format!("unknown item {item_id}")))?
                    .truth;
                study.responses.push(ResponseRecord {
                    reader_id,
                    item_id,
                    truth,
                    choice,
                    lead_time_s,
                    comment,
                });
            }
        }
        Ok(())
    }
}
