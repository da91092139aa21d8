//! Operational shell: versioned files, artifact storage, the session wire
//! protocol and its TCP server.

mod eventlog;
mod files;
mod host;
mod server;
mod store;
pub mod wire;

pub use eventlog::{read_event_log, render_event_log, EventLogWriter, LoggedEvent};
pub use files::{
    parse_document, read_document, render_document, write_document, CalibrationFile, CameraFile,
    PoseSetFile, SessionRecord, SpaceFile,
};
pub use host::SessionHost;
pub use server::{serve_session, DisconnectPolicy, SessionClient, SessionService};
pub use store::{artifact_ref, ArtifactKind, ArtifactStore, IndexEntry};
pub use wire::{ClientBody, ClientMessage, ErrorCode, ServerBody, ServerMessage, WireMessage};

use thiserror::Error;

use crate::calibration::CalibrationError;
use crate::pose_space::PoseSpaceError;
use crate::session::SessionError;
use crate::synthetic::SyntheticError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ServiceError {
    #[error("io: {0}")]
    Io(String),
    #[error("json: {0}")]
    Json(String),
    #[error("bad message: {0}")]
    BadMessage(String),
    #[error("unsupported schema_version {found} (expected {expected})")]
    UnsupportedSchema { found: u64, expected: u32 },
    #[error("artifact not found: {0}")]
    ArtifactNotFound(String),
    #[error("artifact content does not match its reference: {0}")]
    ArtifactCorrupt(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    PoseSpace(#[from] PoseSpaceError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<serde_json::Error> for ServiceError {
    fn from(e: serde_json::Error) -> Self {
        Self::Json(e.to_string())
    }
}

impl ServiceError {
    /// Stable machine-readable name.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Io(_) => "io",
            Self::Json(_) => "parse",
            Self::BadMessage(_) => "bad_message",
            Self::UnsupportedSchema { .. } => "unsupported_schema",
            Self::ArtifactNotFound(_) => "artifact_not_found",
            Self::ArtifactCorrupt(_) => "artifact_corrupt",
            Self::InvalidInput(_) => "invalid_input",
            Self::Session(_) => "session",
            Self::Calibration(_) => "calibration",
            Self::PoseSpace(_) => "pose_space",
            Self::Synthetic(_) => "synthetic",
        }
    }
}
