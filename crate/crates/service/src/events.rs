//! Append-only event log and state snapshots.
//!
//! Every state change is one JSON line in `events.jsonl`. A snapshot records
//! how many events it covers; startup loads it and replays the rest. A torn
//! final line (a crash mid-append) is dropped with a warning.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use claim_match::cluster::ClusterId;
use claim_match::corpus::{Message, Timestamp};
use claim_match::matcher::Decision;
use serde::{Deserialize, Serialize};

use crate::engine::{QueuedMessage, ReviewItem, ReviewVerdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    MessageAdded {
        message: Message,
        embedding: Vec<f32>,
        decision: Decision,
        /// Message whose cluster this one joined on an auto-match.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        attached_to: Option<String>,
    },
    ReviewCreated {
        review: ReviewItem,
    },
    ReviewResolved {
        id: u64,
        verdict: ReviewVerdict,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reviewer: Option<String>,
        at: Timestamp,
    },
    ManualMatch {
        id_a: String,
        id_b: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reviewer: Option<String>,
        at: Timestamp,
    },
    MessageQueued {
        message: Message,
        reason: String,
    },
}

#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    len: usize,
}

impl EventLog {
    /// Opens (creating if needed) the log and returns it with its events.
    pub fn open(path: &Path) -> io::Result<(Self, Vec<Event>)> {
        let events = if path.exists() { read_events(path)? } else { Vec::new() };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok((EventLog { path: path.to_path_buf(), file, len: events.len() }, events))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Writes the events and syncs before returning.
    pub fn append(&mut self, events: &[Event]) -> io::Result<()> {
        let mut buf = Vec::new();
        for e in events {
            serde_json::to_writer(&mut buf, e)?;
            buf.push(b'\n');
        }
        self.file.write_all(&buf)?;
        self.file.sync_data()?;
        self.len += events.len();
        Ok(())
    }
}

fn read_events(path: &Path) -> io::Result<Vec<Event>> {
    let mut events = Vec::new();
    let mut lines = BufReader::new(File::open(path)?).lines().enumerate().peekable();
    let mut torn = None;
    while let Some((i, line)) = lines.next() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(e) => events.push(e),
            Err(_) if lines.peek().is_none() => torn = Some(i + 1),
            Err(e) => {
                return Err(io::Error::new(io::ErrorKind::InvalidData, format!("event log line {}: {e}", i + 1)))
            }
        }
    }
    if let Some(line) = torn {
        tracing::warn!(line, "dropping incomplete final event");
        // rewrite without the torn tail so later appends start on a fresh line
        let mut tmp = Vec::new();
        for e in &events {
            serde_json::to_writer(&mut tmp, e)?;
            tmp.push(b'\n');
        }
        write_atomic(path, &tmp)?;
    }
    Ok(events)
}

/// Materialized state at some point of the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Number of log events folded into this snapshot.
    pub events: usize,
    pub next_message: u64,
    pub next_review: u64,
    pub next_cluster: ClusterId,
    pub messages: Vec<SnapshotMessage>,
    pub reviews: Vec<ReviewItem>,
    pub queued: Vec<QueuedMessage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMessage {
    pub message: Message,
    pub embedding: Vec<f32>,
    pub cluster: ClusterId,
}

impl Snapshot {
    pub fn read(path: &Path) -> io::Result<Option<Self>> {
        if !path.exists() {
            return Ok(None);
        }
        let s = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        Ok(Some(s))
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        write_atomic(path, &serde_json::to_vec(self)?)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}
