//! Append-only newline-delimited JSON event log, one file per study.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use histoprompt_core::stats::Choice;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SessionCreated {
        session_id: String,
        reader_id: String,
        seed: u64,
        item_order: Vec<String>,
        at: f64,
    },
    ItemServed {
        session_id: String,
        item_id: String,
        index: usize,
        at: f64,
    },
    ResponseRecorded {
        session_id: String,
        item_id: String,
        index: usize,
        choice: Choice,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        comment: Option<String>,
        served_at: f64,
        received_at: f64,
        lead_time_s: f64,
    },
}

pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    pub fn path_for(data_dir: &Path, study_id: &str) -> PathBuf {
        data_dir.join(format!("{study_id}.events.jsonl"))
    }

    /// Opens (creating if needed) the log and returns it with the events
    /// already recorded. An unterminated, unparsable final line is the trace
    /// of an interrupted write and is truncated away.
    pub fn open(path: &Path) -> io::Result<(Self, Vec<Event>)> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e),
        };
        let complete = text.ends_with('\n') || text.is_empty();
        let lines: Vec<&str> = text.lines().collect();
        let mut events = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(line) {
                Ok(e) => events.push(e),
                Err(_) if i + 1 == lines.len() && !complete => {
                    tracing::warn!(path = %path.display(), "dropping partial trailing log line");
                }
                Err(e) => {
                    return Err(io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("{} line {}: {e}", path.display(), i + 1),
                    ))
                }
            }
        }
        if !complete {
            // Cut the partial line so the next record starts cleanly.
            let keep = text.rfind('\n').map_or(0, |i| i + 1);
            OpenOptions::new().write(true).open(path)?.set_len(keep as u64)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
            },
            events,
        ))
    }

    /// Appends one event as a single write and flushes it to the OS.
    pub fn append(&mut self, event: &Event) -> io::Result<()> {
        let mut line = serde_json::to_vec(event).expect("event serializes");
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
