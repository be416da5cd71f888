//! Append-only JSONL event log; the durable record from which sessions and
//! the training set are rebuilt on restart.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Active,
    Completed,
    Abandoned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SessionStarted {
        session_id: String,
        at: DateTime<Utc>,
        k: usize,
        served: usize,
        /// Refit count of the model the session is pinned to.
        model_version: usize,
    },
    Answered {
        session_id: String,
        at: DateTime<Utc>,
        question_id: usize,
        raw_index: usize,
        value: f64,
        /// Next question served, `None` when the session closed with this answer.
        served: Option<usize>,
    },
    SessionClosed {
        session_id: String,
        at: DateTime<Utc>,
        status: SessionStatus,
    },
    /// The listed sessions enter the training set at refit `refit`.
    RefitScheduled {
        refit: usize,
        at: DateTime<Utc>,
        sessions: Vec<String>,
    },
}

/// Serialized append channel; every event is flushed before the call returns.
pub struct EventLog {
    file: Mutex<Option<File>>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self { file: Mutex::new(None) }
    }

    pub fn open(path: &Path) -> Result<Self, ServiceError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file: Mutex::new(Some(file)) })
    }

    pub fn append(&self, event: &Event) -> Result<(), ServiceError> {
        let mut guard = self.file.lock().expect("event log lock poisoned");
        if let Some(file) = guard.as_mut() {
            let mut line = serde_json::to_string(event).map_err(|e| ServiceError::Persistence(e.to_string()))?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.flush()?;
            file.sync_data()?;
        }
        Ok(())
    }
}

pub fn read_events(path: &Path) -> Result<Vec<Event>, ServiceError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(e) => events.push(e),
            // A torn final line from a crash mid-write is dropped.
            Err(e) if is_last_line(path, i)? => log::warn!("ignoring truncated final event: {e}"),
            Err(e) => return Err(ServiceError::Persistence(format!("{} line {}: {e}", path.display(), i + 1))),
        }
    }
    Ok(events)
}

fn is_last_line(path: &Path, index: usize) -> Result<bool, ServiceError> {
    let n = BufReader::new(File::open(path)?).lines().count();
    Ok(index + 1 == n)
}
