//! Append-only per-node protocol logs, stored as JSONL.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub mod kind {
    pub const ISSUANCE: &str = "issuance";
    pub const ISSUANCE_DENIED: &str = "issuance_denied";
    pub const PRESENTATION: &str = "presentation";
    pub const GOSSIP: &str = "gossip";
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptEvent {
    pub timestamp: u64,
    pub node: String,
    pub seq: u64,
    pub kind: String,
    pub payload: Map<String, Value>,
}

impl TranscriptEvent {
    pub fn field(&self, name: &str) -> Option<&str> {
        self.payload.get(name).and_then(Value::as_str)
    }

    /// One canonical JSON line (sorted keys, no whitespace), without newline.
    pub fn to_line(&self) -> String {
        serde_json::to_value(self).expect("event serializes").to_string()
    }
}

/// A node's log. Events can only be appended; ordering is
/// `(timestamp, node, seq)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transcript {
    node: String,
    events: Vec<TranscriptEvent>,
}

impl Transcript {
    pub fn new(node: impl Into<String>) -> Self {
        Self {
            node: node.into(),
            events: Vec::new(),
        }
    }

    pub fn node(&self) -> &str {
        &self.node
    }

    pub fn events(&self) -> &[TranscriptEvent] {
        &self.events
    }

    /// Appends an event. A timestamp earlier than the last one is raised to it
    /// so the log stays ordered.
    pub fn append<'a>(&mut self, timestamp: u64, kind: &str, fields: impl IntoIterator<Item = (&'a str, Value)>) {
        let timestamp = self.events.last().map_or(timestamp, |last| last.timestamp.max(timestamp));
        let payload = fields.into_iter().map(|(k, v)| (k.to_owned(), v)).collect();
        self.events.push(TranscriptEvent {
            timestamp,
            node: self.node.clone(),
            seq: self.events.len() as u64,
            kind: kind.to_owned(),
            payload,
        });
    }

    pub fn to_jsonl(&self) -> String {
        self.events.iter().map(|e| e.to_line() + "\n").collect()
    }
}

pub fn parse_jsonl(text: &str) -> Result<Vec<TranscriptEvent>, TranscriptError> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| serde_json::from_str(line).map_err(|source| TranscriptError::Parse { line: i + 1, source }))
        .collect()
}
