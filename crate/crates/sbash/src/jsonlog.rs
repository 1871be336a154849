//! Threat-intelligence log: JSON Lines, append-only, one record per line.
//!
//! Three record shapes share the file, discriminated by `"type"`:
//! `session_open`, `session_close`, and `command`. Appends are serialized
//! through one mutex so concurrent sessions never interleave within a line,
//! and every record is flushed as it is written. If the sink fails,
//! records buffer in memory up to a cap, after which the oldest are
//! dropped and counted.

use std::collections::VecDeque;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use sbash_core::dispatch::ClassKind;

/// Default in-memory buffer cap while the sink is unavailable.
pub const DEFAULT_BUFFER_CAP: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    SessionOpen {
        session_id: String,
        peer_address: String,
        start_time: String,
        username: String,
        profile_id: String,
    },
    SessionClose {
        session_id: String,
        peer_address: String,
        start_time: String,
        end_time: String,
        username: String,
        profile_id: String,
    },
    Command {
        session_id: String,
        seq: u64,
        timestamp: String,
        raw_input: String,
        class: ClassKind,
        output: String,
        latency_ms: u64,
        #[serde(skip_serializing_if = "Option::is_none")]
        backend_error: Option<String>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("cannot open log sink {path}: {source}")]
    Open {
        path: String,
        source: std::io::Error,
    },
}

struct SinkInner {
    writer: Box<dyn Write + Send>,
    buffer: VecDeque<String>,
    cap: usize,
    dropped: u64,
}

/// Append-only JSONL sink shared by all sessions.
pub struct LogSink {
    inner: Mutex<SinkInner>,
}

impl LogSink {
    pub fn to_path(path: impl AsRef<Path>) -> Result<Self, LogError> {
        let path = path.as_ref();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| LogError::Open {
                path: path.display().to_string(),
                source,
            })?;
        Ok(Self::from_writer(Box::new(file)))
    }

    pub fn from_writer(writer: Box<dyn Write + Send>) -> Self {
        Self {
            inner: Mutex::new(SinkInner {
                writer,
                buffer: VecDeque::new(),
                cap: DEFAULT_BUFFER_CAP,
                dropped: 0,
            }),
        }
    }

    /// Drop a sink that throws away everything (for `serve` without `--log`).
    pub fn discard() -> Self {
        struct Null;
        impl Write for Null {
            fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
                Ok(buf.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        Self::from_writer(Box::new(Null))
    }

    /// Append one record; flushed before returning. Failures buffer the
    /// line for a later retry instead of propagating to the session.
    pub fn append(&self, record: &LogRecord) {
        let line = serde_json::to_string(record).expect("records serialize");
        debug_assert!(!line.contains('\n'));
        let mut inner = self.inner.lock().expect("log sink poisoned");

        // Retry anything buffered from earlier failures first, preserving
        // record order in the file.
        while let Some(pending) = inner.buffer.front().cloned() {
            if write_line(&mut inner.writer, &pending).is_err() {
                break;
            }
            inner.buffer.pop_front();
        }

        if inner.buffer.is_empty() && write_line(&mut inner.writer, &line).is_ok() {
            return;
        }
        inner.buffer.push_back(line);
        while inner.buffer.len() > inner.cap {
            inner.buffer.pop_front();
            inner.dropped += 1;
        }
    }

    /// Records dropped because the sink stayed unavailable past the cap.
    pub fn dropped(&self) -> u64 {
        self.inner.lock().expect("log sink poisoned").dropped
    }

    /// Lines still waiting for the sink to come back.
    pub fn buffered(&self) -> usize {
        self.inner.lock().expect("log sink poisoned").buffer.len()
    }
}

fn write_line(writer: &mut Box<dyn Write + Send>, line: &str) -> std::io::Result<()> {
    writer.write_all(line.as_bytes())?;
    writer.write_all(b"\n")?;
    writer.flush()
}
