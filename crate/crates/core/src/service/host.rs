//! Transport-independent adapter between protocol messages and a guidance
//! session.

use std::fs::{self, File, OpenOptions};
use std::sync::Arc;

use super::eventlog::{render_event_log, EventLogWriter};
use super::files::{render_document, CalibrationFile, SessionRecord};
use super::store::{artifact_ref, ArtifactKind, ArtifactStore};
use super::wire::{ClientBody, ClientMessage, ErrorCode, ServerBody, ServerMessage};
use super::ServiceError;
use crate::calibration::{write_observations, CalibrationResult, Corner, SolverConfig};
use crate::session::{
    advance, begin_session, finalize, manual_capture, SessionConfig, SessionError, SessionEvent,
    SessionState,
};

/// Owns one session and answers its client messages.
///
/// Replies to one client message are a batch; a batch never ends with
/// `ServerCapture`, which is always followed by the next target, the
/// completion or an error.
#[derive(Debug)]
pub struct SessionHost {
    session_id: String,
    state: SessionState,
    solver: SolverConfig,
    last_client_seq: Option<u64>,
    next_server_seq: u64,
    last_update: Option<(u64, Vec<Corner>)>,
    events: Vec<SessionEvent>,
    store: Option<Arc<ArtifactStore>>,
    log: Option<EventLogWriter<File>>,
    result: Option<(String, CalibrationResult)>,
    persistence_errors: Vec<String>,
}

impl SessionHost {
    pub fn new(
        session_id: impl Into<String>,
        config: SessionConfig,
        solver: SolverConfig,
    ) -> Result<Self, ServiceError> {
        solver.validate()?;
        let state = begin_session(config)?;
        Ok(Self {
            session_id: session_id.into(),
            state,
            solver,
            last_client_seq: None,
            next_server_seq: 0,
            last_update: None,
            events: Vec::new(),
            store: None,
            log: None,
            result: None,
            persistence_errors: Vec::new(),
        })
    }

    /// Persists the session record, streams events to
    /// `<root>/sessions/<id>/events.jsonl` and stores the final artifacts.
    pub fn with_store(mut self, store: Arc<ArtifactStore>) -> Result<Self, ServiceError> {
        let record = SessionRecord {
            schema_version: crate::SCHEMA_VERSION,
            session_id: self.session_id.clone(),
            config: self.state.config().clone(),
        };
        store.put(
            ArtifactKind::Session,
            &render_document(&record),
            Some(&self.session_id),
        )?;
        let dir = store.root().join("sessions").join(&self.session_id);
        fs::create_dir_all(&dir)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join("events.jsonl"))?;
        self.log = Some(EventLogWriter::new(self.session_id.clone(), file));
        self.store = Some(store);
        Ok(self)
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub fn result(&self) -> Option<&CalibrationResult> {
        self.result.as_ref().map(|(_, r)| r)
    }

    pub fn result_ref(&self) -> Option<&str> {
        self.result.as_ref().map(|(r, _)| r.as_str())
    }

    /// Event-log writes that failed; the in-memory event list is complete.
    pub fn persistence_errors(&self) -> &[String] {
        &self.persistence_errors
    }

    /// Ends an unfinished session; a completed one is left as is.
    pub fn abort(&mut self) {
        self.state = self.state.aborted();
    }

    fn reply(&mut self, body: ServerBody) -> ServerMessage {
        let seq = self.next_server_seq;
        self.next_server_seq += 1;
        ServerMessage::new(self.session_id.clone(), seq, body)
    }

    fn error(&mut self, code: ErrorCode, detail: impl Into<String>) -> ServerMessage {
        self.reply(ServerBody::ServerError {
            code,
            detail: detail.into(),
        })
    }

    /// Current target, or the completion if the session is done.
    pub fn status_body(&self) -> ServerBody {
        if let Some((result_ref, result)) = &self.result {
            return ServerBody::ServerComplete {
                result_ref: result_ref.clone(),
                mre: result.mre,
            };
        }
        match self.state.target() {
            Some(t) => ServerBody::ServerTarget {
                target_index: t.index,
                total: self.state.total_targets(),
                expected_corners: t.expected_corners.clone(),
                outer_four: t.outer_four,
            },
            None => ServerBody::ServerError {
                code: ErrorCode::SessionClosed,
                detail: format!("session is {:?}", self.state.phase),
            },
        }
    }

    pub fn handle(&mut self, msg: &ClientMessage) -> Vec<ServerMessage> {
        if msg.session_id != self.session_id {
            let detail = format!("unknown session '{}'", msg.session_id);
            return vec![self.error(ErrorCode::NoSession, detail)];
        }
        if let Some(last) = self.last_client_seq {
            if msg.seq <= last {
                let detail = format!("seq {} is not after {last}", msg.seq);
                return vec![self.error(ErrorCode::StaleSequence, detail)];
            }
        }
        self.last_client_seq = Some(msg.seq);
        match &msg.body {
            ClientBody::ClientHello {} => {
                let body = self.status_body();
                vec![self.reply(body)]
            }
            ClientBody::CornerUpdate {
                frame_token,
                corners,
            } => {
                let outcome = advance(&self.state, corners, *frame_token);
                self.last_update = Some((*frame_token, corners.clone()));
                self.apply(outcome)
            }
            ClientBody::ManualCaptureRequest {} => {
                let (token, corners) = self.last_update.clone().unwrap_or_default();
                let outcome = manual_capture(&self.state, &corners, token);
                self.apply(outcome)
            }
        }
    }

    fn apply(
        &mut self,
        outcome: Result<(SessionState, Vec<SessionEvent>), SessionError>,
    ) -> Vec<ServerMessage> {
        let (next, events) = match outcome {
            Ok(v) => v,
            Err(e) => {
                let code = match e {
                    SessionError::ModeMismatch { .. } => ErrorCode::ModeMismatch,
                    SessionError::SessionClosed { .. } => ErrorCode::SessionClosed,
                    SessionError::NoBoardDetected { .. } | SessionError::MissingCorner { .. } => {
                        ErrorCode::NoBoard
                    }
                    _ => ErrorCode::BadMessage,
                };
                return vec![self.error(code, e.to_string())];
            }
        };
        self.state = next;
        if let Some(log) = &mut self.log {
            if let Err(e) = log.append(&events) {
                self.persistence_errors.push(e.to_string());
            }
        }
        self.events.extend(events.iter().cloned());

        let captured = events
            .iter()
            .any(|e| matches!(e, SessionEvent::Capture { .. }));
        let mut out = Vec::new();
        for e in &events {
            match e {
                SessionEvent::NoBoard { target_index, .. } if !captured => {
                    out.push(self.reply(ServerBody::ServerProgress {
                        target_index: *target_index,
                        distance: None,
                        adjustments: None,
                        dwell_count: 0,
                    }))
                }
                SessionEvent::MatchProgress {
                    target_index,
                    distance,
                    adjustments,
                    dwell_count,
                    ..
                } if !captured => out.push(self.reply(ServerBody::ServerProgress {
                    target_index: *target_index,
                    distance: Some(*distance),
                    adjustments: Some(*adjustments),
                    dwell_count: *dwell_count,
                })),
                SessionEvent::Capture {
                    target_index,
                    frame_token,
                } => {
                    let captured = self.state.captured.len();
                    out.push(self.reply(ServerBody::ServerCapture {
                        target_index: *target_index,
                        frame_token: *frame_token,
                        captured,
                    }))
                }
                SessionEvent::Completed { .. } => {
                    let m = self.complete();
                    out.push(m);
                }
                _ => {}
            }
        }
        if captured && !self.state.is_complete() {
            let body = self.status_body();
            out.push(self.reply(body));
        }
        out
    }

    fn complete(&mut self) -> ServerMessage {
        match finalize(&self.state, &self.solver) {
            Ok(result) => match self.persist(&result) {
                Ok(result_ref) => {
                    let mre = result.mre;
                    self.result = Some((result_ref.clone(), result));
                    self.reply(ServerBody::ServerComplete { result_ref, mre })
                }
                Err(e) => self.error(ErrorCode::CalibrationFailed, format!("storing result: {e}")),
            },
            Err(e) => self.error(ErrorCode::CalibrationFailed, e.to_string()),
        }
    }

    fn persist(&self, result: &CalibrationResult) -> Result<String, ServiceError> {
        let doc = render_document(&CalibrationFile::new(
            Some(self.session_id.clone()),
            result.clone(),
        ));
        let Some(store) = &self.store else {
            return Ok(artifact_ref(&doc));
        };
        let id = Some(self.session_id.as_str());
        let mut obs = Vec::new();
        write_observations(&mut obs, &self.state.captured)?;
        store.put(ArtifactKind::Observations, &obs, id)?;
        store.put(
            ArtifactKind::EventLog,
            &render_event_log(&self.session_id, &self.events),
            id,
        )?;
        store.put(ArtifactKind::CalibrationResult, &doc, id)
    }
}
