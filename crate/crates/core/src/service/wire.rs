//! Session protocol messages and their framing.
//!
//! A frame is a 4-byte big-endian length followed by that many bytes of
//! UTF-8 JSON. Every message is an envelope carrying `schema_version`,
//! `session_id` and a per-direction sequence number, with the body under
//! `type`/`payload`.

use std::io::{self, Read, Write};

use nalgebra::Vector2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::calibration::Corner;

pub const MAX_FRAME_BYTES: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage<B> {
    pub schema_version: u32,
    pub session_id: String,
    pub seq: u64,
    #[serde(flatten)]
    pub body: B,
}

impl<B> WireMessage<B> {
    pub fn new(session_id: impl Into<String>, seq: u64, body: B) -> Self {
        Self {
            schema_version: crate::SCHEMA_VERSION,
            session_id: session_id.into(),
            seq,
            body,
        }
    }
}

pub type ClientMessage = WireMessage<ClientBody>;
pub type ServerMessage = WireMessage<ServerBody>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum ClientBody {
    ClientHello {},
    CornerUpdate {
        frame_token: u64,
        corners: Vec<Corner>,
    },
    /// Captures the most recent corner update.
    ManualCaptureRequest {},
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    StaleSequence,
    NoSession,
    SessionBusy,
    ModeMismatch,
    SessionClosed,
    NoBoard,
    BadMessage,
    CalibrationFailed,
}

impl ErrorCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::StaleSequence => "stale_sequence",
            Self::NoSession => "no_session",
            Self::SessionBusy => "session_busy",
            Self::ModeMismatch => "mode_mismatch",
            Self::SessionClosed => "session_closed",
            Self::NoBoard => "no_board",
            Self::BadMessage => "bad_message",
            Self::CalibrationFailed => "calibration_failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum ServerBody {
    ServerTarget {
        target_index: usize,
        total: usize,
        expected_corners: Vec<Corner>,
        outer_four: [usize; 4],
    },
    /// `distance` and `adjustments` are absent when the board was not found.
    ServerProgress {
        target_index: usize,
        distance: Option<f64>,
        adjustments: Option<[Vector2<f64>; 4]>,
        dwell_count: usize,
    },
    ServerCapture {
        target_index: usize,
        frame_token: u64,
        captured: usize,
    },
    ServerComplete {
        result_ref: String,
        mre: f64,
    },
    ServerError {
        code: ErrorCode,
        detail: String,
    },
}

/// Reads one frame. `Ok(None)` on a clean end of stream before the header.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut header = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {len} bytes exceeds the {MAX_FRAME_BYTES} byte limit"),
        ));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> io::Result<()> {
    if payload.len() > MAX_FRAME_BYTES {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("frame of {} bytes exceeds the limit", payload.len()),
        ));
    }
    w.write_all(&(payload.len() as u32).to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

pub fn encode<T: Serialize>(msg: &T) -> Vec<u8> {
    serde_json::to_vec(msg).expect("wire messages serialize")
}

/// Parses a frame and checks its schema version.
pub fn decode<B: DeserializeOwned>(bytes: &[u8]) -> Result<WireMessage<B>, ServiceError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| ServiceError::BadMessage(e.to_string()))?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == crate::SCHEMA_VERSION as u64 => {}
        Some(v) => {
            return Err(ServiceError::UnsupportedSchema {
                found: v,
                expected: crate::SCHEMA_VERSION,
            })
        }
        None => return Err(ServiceError::BadMessage("missing schema_version".into())),
    }
    serde_json::from_value(value).map_err(|e| ServiceError::BadMessage(e.to_string()))
}

pub fn send<W: Write, B: Serialize>(w: &mut W, msg: &WireMessage<B>) -> io::Result<()> {
    write_frame(w, &encode(msg))
}

/// Next message, `Ok(None)` at end of stream.
pub fn recv<R: Read, B: DeserializeOwned>(
    r: &mut R,
) -> Result<Option<WireMessage<B>>, ServiceError> {
    match read_frame(r)? {
        None => Ok(None),
        Some(bytes) => decode(&bytes).map(Some),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn envelope_layout() {
        let msg = ClientMessage::new(
            "s1",
            3,
            ClientBody::CornerUpdate {
                frame_token: 9,
                corners: vec![Corner::new(0, 1.0, 2.0)],
            },
        );
        let v: serde_json::Value = serde_json::to_value(&msg).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["session_id"], "s1");
        assert_eq!(v["seq"], 3);
        assert_eq!(v["type"], "corner_update");
        assert_eq!(v["payload"]["frame_token"], 9);
        let hello =
            serde_json::to_value(ClientMessage::new("s", 0, ClientBody::ClientHello {})).unwrap();
        assert_eq!(hello["type"], "client_hello");
    }

    #[test]
    fn server_messages_round_trip() {
        let bodies = vec![
            ServerBody::ServerProgress {
                target_index: 1,
                distance: Some(2.5),
                adjustments: Some([Vector2::new(0.1, -0.2); 4]),
                dwell_count: 2,
            },
            ServerBody::ServerError {
                code: ErrorCode::StaleSequence,
                detail: "x".into(),
            },
            ServerBody::ServerComplete {
                result_ref: "sha256:00".into(),
                mre: 0.1,
            },
        ];
        for b in bodies {
            let msg = ServerMessage::new("s", 1, b);
            let back: ServerMessage = decode(&encode(&msg)).unwrap();
            assert_eq!(back, msg);
        }
    }

    #[test]
    fn frames_round_trip_and_eof_is_clean() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"{}").unwrap();
        write_frame(&mut buf, b"[1]").unwrap();
        let mut r = Cursor::new(buf);
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"{}");
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"[1]");
        assert!(read_frame(&mut r).unwrap().is_none());
    }

    #[test]
    fn truncated_frame_is_an_error() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"{\"a\":1}").unwrap();
        buf.truncate(6);
        assert!(read_frame(&mut Cursor::new(buf)).is_err());
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let bytes =
            br#"{"schema_version":7,"session_id":"s","seq":0,"type":"client_hello","payload":{}}"#;
        assert!(matches!(
            decode::<ClientBody>(bytes),
            Err(ServiceError::UnsupportedSchema { found: 7, .. })
        ));
        let missing = br#"{"session_id":"s","seq":0,"type":"client_hello","payload":{}}"#;
        assert!(matches!(
            decode::<ClientBody>(missing),
            Err(ServiceError::BadMessage(_))
        ));
    }
}
