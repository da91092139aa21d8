use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::session::SessionEvent;

/// One line of a session event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub schema_version: u32,
    pub session_id: String,
    /// Position in the session's event stream, from 0.
    pub index: u64,
    pub event: SessionEvent,
}

/// Appends events as JSON lines, numbering them per session.
#[derive(Debug)]
pub struct EventLogWriter<W: Write> {
    session_id: String,
    next: u64,
    out: W,
}

impl<W: Write> EventLogWriter<W> {
    pub fn new(session_id: impl Into<String>, out: W) -> Self {
        Self {
            session_id: session_id.into(),
            next: 0,
            out,
        }
    }

    pub fn append(&mut self, events: &[SessionEvent]) -> Result<(), ServiceError> {
        for event in events {
            let line = LoggedEvent {
                schema_version: crate::SCHEMA_VERSION,
                session_id: self.session_id.clone(),
                index: self.next,
                event: event.clone(),
            };
            serde_json::to_writer(&mut self.out, &line)?;
            self.out.write_all(b"\n")?;
            self.next += 1;
        }
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn render_event_log(session_id: &str, events: &[SessionEvent]) -> Vec<u8> {
    let mut w = EventLogWriter::new(session_id, Vec::new());
    w.append(events).expect("writing to memory");
    w.into_inner()
}

pub fn read_event_log<R: BufRead>(r: R) -> Result<Vec<LoggedEvent>, ServiceError> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: LoggedEvent = serde_json::from_str(&line)
            .map_err(|e| ServiceError::Json(format!("event log line {}: {e}", n + 1)))?;
        out.push(e);
    }
    Ok(out)
}
