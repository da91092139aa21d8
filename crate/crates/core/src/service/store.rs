//! Content-addressed, append-only artifact storage in a data directory.
//!
//! Layout:
//!
//! ```text
//! <root>/objects/<sha256 hex>   immutable record bytes
//! <root>/index.jsonl            one IndexEntry per record, in write order
//! ```

use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ServiceError;

const REF_PREFIX: &str = "sha256:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Session,
    PoseSet,
    CalibrationResult,
    ExperimentReport,
    Observations,
    EventLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub artifact_ref: String,
    pub kind: ArtifactKind,
    pub bytes: usize,
    /// Milliseconds since the Unix epoch.
    pub created_unix_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
}

pub fn artifact_ref(bytes: &[u8]) -> String {
    format!("{REF_PREFIX}{}", hex::encode(Sha256::digest(bytes)))
}

#[derive(Debug)]
pub struct ArtifactStore {
    root: PathBuf,
    index_lock: Mutex<()>,
}

impl ArtifactStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let root = root.into();
        fs::create_dir_all(root.join("objects"))?;
        Ok(Self {
            root,
            index_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn object_path(&self, reference: &str) -> Result<PathBuf, ServiceError> {
        let hex = reference
            .strip_prefix(REF_PREFIX)
            .filter(|h| h.len() == 64 && h.bytes().all(|b| b.is_ascii_hexdigit()))
            .ok_or_else(|| ServiceError::ArtifactNotFound(reference.to_string()))?;
        Ok(self.root.join("objects").join(hex))
    }

    /// Stores `bytes` and returns their reference. Writing identical content
    /// again is a no-op.
    pub fn put(
        &self,
        kind: ArtifactKind,
        bytes: &[u8],
        session_id: Option<&str>,
    ) -> Result<String, ServiceError> {
        let reference = artifact_ref(bytes);
        let path = self.object_path(&reference)?;
        let _guard = self.index_lock.lock().expect("index lock");
        if path.exists() {
            return Ok(reference);
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &path)?;
        let entry = IndexEntry {
            artifact_ref: reference.clone(),
            kind,
            bytes: bytes.len(),
            created_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            session_id: session_id.map(str::to_string),
        };
        let mut index = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.root.join("index.jsonl"))?;
        writeln!(index, "{}", serde_json::to_string(&entry)?)?;
        Ok(reference)
    }

    pub fn put_json<T: Serialize>(
        &self,
        kind: ArtifactKind,
        value: &T,
        session_id: Option<&str>,
    ) -> Result<String, ServiceError> {
        self.put(kind, &serde_json::to_vec_pretty(value)?, session_id)
    }

    /// Record bytes, verified against the reference.
    pub fn get(&self, reference: &str) -> Result<Vec<u8>, ServiceError> {
        let path = self.object_path(reference)?;
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ServiceError::ArtifactNotFound(reference.to_string()),
            _ => e.into(),
        })?;
        if artifact_ref(&bytes) != reference {
            return Err(ServiceError::ArtifactCorrupt(reference.to_string()));
        }
        Ok(bytes)
    }

    pub fn get_json<T: DeserializeOwned>(&self, reference: &str) -> Result<T, ServiceError> {
        Ok(serde_json::from_slice(&self.get(reference)?)?)
    }

    pub fn index(&self) -> Result<Vec<IndexEntry>, ServiceError> {
        let path = self.root.join("index.jsonl");
        if !path.exists() {
            return Ok(Vec::new());
        }
        BufReader::new(fs::File::open(path)?)
            .lines()
            .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
            .map(|l| Ok(serde_json::from_str(&l?)?))
            .collect()
    }
}
