//! Bounded per-object chat memory.

use std::collections::VecDeque;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DialogueError;
use crate::fsutil::{write_atomic, FileSnapshot};

/// Records kept per object: five user/object cycles.
pub const HISTORY_CAPACITY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    User,
    Object,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRecord {
    pub role: Role,
    pub text: String,
    #[serde(rename = "timestamp")]
    pub timestamp_ms: u64,
}

impl ChatRecord {
    pub fn user(text: impl Into<String>, timestamp_ms: u64) -> Self {
        Self {
            role: Role::User,
            text: text.into(),
            timestamp_ms,
        }
    }

    pub fn object(text: impl Into<String>, timestamp_ms: u64) -> Self {
        Self {
            role: Role::Object,
            text: text.into(),
            timestamp_ms,
        }
    }
}

/// Chronological, alternating USER/OBJECT records, at most ten of them.
///
/// When a new record would overflow the buffer, the oldest whole cycle (the
/// oldest USER record and its OBJECT reply) is dropped first, so memory
/// always holds the most recent cycles.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ChatHistory {
    records: VecDeque<ChatRecord>,
}

impl ChatHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl ExactSizeIterator<Item = &ChatRecord> + DoubleEndedIterator {
        self.records.iter()
    }

    pub fn last(&self) -> Option<&ChatRecord> {
        self.records.back()
    }

    fn expected_role(&self) -> Role {
        match self.records.back() {
            Some(r) if r.role == Role::User => Role::Object,
            _ => Role::User,
        }
    }

    /// Appends `record`, evicting the oldest cycle if the buffer is full.
    pub fn append_with_eviction(&mut self, record: ChatRecord) -> Result<(), DialogueError> {
        if record.text.trim().is_empty() {
            return Err(DialogueError::EmptyRecord);
        }
        let expected = self.expected_role();
        if record.role != expected {
            return Err(DialogueError::OutOfTurn {
                expected,
                got: record.role,
            });
        }
        while self.records.len() + 1 > HISTORY_CAPACITY {
            self.records.pop_front();
            if matches!(self.records.front(), Some(r) if r.role == Role::Object) {
                self.records.pop_front();
            }
        }
        self.records.push_back(record);
        Ok(())
    }

    /// Rebuilds a history from records, checking every invariant.
    pub fn from_records(records: Vec<ChatRecord>) -> Result<Self, DialogueError> {
        if records.len() > HISTORY_CAPACITY {
            return Err(DialogueError::CorruptHistory(format!(
                "{} records exceed capacity {HISTORY_CAPACITY}",
                records.len()
            )));
        }
        let mut h = Self::new();
        for r in records {
            h.append_with_eviction(r)
                .map_err(|e| DialogueError::CorruptHistory(e.to_string()))?;
        }
        Ok(h)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.records).expect("history serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, DialogueError> {
        let records: Vec<ChatRecord> = serde_json::from_str(text)
            .map_err(|e| DialogueError::CorruptHistory(e.to_string()))?;
        Self::from_records(records)
    }
}

/// History documents on disk: `root/history/<class_id>.json`.
#[derive(Debug, Clone)]
pub struct HistoryStore {
    dir: PathBuf,
}

impl HistoryStore {
    pub fn new(root: impl AsRef<Path>) -> Self {
        Self {
            dir: root.as_ref().join("history"),
        }
    }

    pub fn path_for(&self, class_id: u32) -> PathBuf {
        self.dir.join(format!("{class_id}.json"))
    }

    /// A class with no document yet has an empty history.
    pub fn load(&self, class_id: u32) -> Result<ChatHistory, DialogueError> {
        match fs::read_to_string(self.path_for(class_id)) {
            Ok(text) => ChatHistory::from_json(&text),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(ChatHistory::new()),
            Err(e) => Err(DialogueError::Io(e.to_string())),
        }
    }

    pub fn save(&self, class_id: u32, history: &ChatHistory) -> Result<PathBuf, DialogueError> {
        let path = self.path_for(class_id);
        write_atomic(&path, history.to_json().as_bytes())
            .map_err(|e| DialogueError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn snapshot(&self, class_id: u32) -> Result<FileSnapshot, DialogueError> {
        FileSnapshot::take(&self.path_for(class_id)).map_err(|e| DialogueError::Io(e.to_string()))
    }
}
