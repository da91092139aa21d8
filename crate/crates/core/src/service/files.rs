//! Versioned JSON documents read and written by the CLI and the service.
//! Every document carries a top-level `schema_version`.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::calibration::CalibrationResult;
use crate::geometry::{BoardSpec, CameraIntrinsics, ImageSpec};
use crate::pose_space::{PoseSearchSpace, PoseSet, ScoreReport};
use crate::session::SessionConfig;
use crate::synthetic::{ExperimentReport, VirtualCamera};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraFile {
    pub schema_version: u32,
    pub camera: VirtualCamera,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceFile {
    pub schema_version: u32,
    pub space: PoseSearchSpace,
}

/// Output of pose optimization, input to guided sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSetFile {
    pub schema_version: u32,
    pub space_id: String,
    pub board: BoardSpec,
    pub image: ImageSpec,
    /// Intrinsics the set was scored against.
    pub reference_intrinsics: CameraIntrinsics,
    pub pose_set: PoseSet,
    pub report: ScoreReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    pub result: CalibrationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub schema_version: u32,
    pub session_id: String,
    pub config: SessionConfig,
}

impl CameraFile {
    pub fn new(camera: VirtualCamera) -> Self {
        Self {
            schema_version: crate::SCHEMA_VERSION,
            camera,
        }
    }
}

impl SpaceFile {
    pub fn new(space: PoseSearchSpace) -> Self {
        Self {
            schema_version: crate::SCHEMA_VERSION,
            space,
        }
    }
}

impl PoseSetFile {
    /// The selected set of an experiment, scored against `camera.truth`.
    pub fn from_report(
        camera: &VirtualCamera,
        space: &PoseSearchSpace,
        report: &ExperimentReport,
    ) -> Self {
        Self {
            schema_version: crate::SCHEMA_VERSION,
            space_id: space.id(),
            board: space.board,
            image: space.image,
            reference_intrinsics: camera.truth,
            pose_set: report.selected.clone(),
            report: report.selected_report.clone(),
        }
    }

    /// Session configuration with default threshold, mode and dwell.
    pub fn session_config(&self) -> SessionConfig {
        SessionConfig::new(
            self.pose_set.clone(),
            self.board,
            self.image,
            self.reference_intrinsics,
        )
    }
}

impl CalibrationFile {
    pub fn new(session_id: Option<String>, result: CalibrationResult) -> Self {
        Self {
            schema_version: crate::SCHEMA_VERSION,
            session_id,
            result,
        }
    }
}

/// Parses a document after checking its `schema_version`.
pub fn parse_document<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ServiceError> {
    let value: serde_json::Value = serde_json::from_slice(bytes)?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == crate::SCHEMA_VERSION as u64 => Ok(serde_json::from_value(value)?),
        Some(v) => Err(ServiceError::UnsupportedSchema {
            found: v,
            expected: crate::SCHEMA_VERSION,
        }),
        None => Err(ServiceError::Json("missing schema_version".into())),
    }
}

/// Pretty JSON with a trailing newline.
pub fn render_document<T: Serialize>(doc: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(doc).expect("documents serialize");
    out.push(b'\n');
    out
}

pub fn read_document<T: DeserializeOwned>(path: &Path) -> Result<T, ServiceError> {
    let bytes = fs::read(path).map_err(|e| ServiceError::Io(format!("{}: {e}", path.display())))?;
    parse_document(&bytes).map_err(|e| match e {
        ServiceError::Json(m) => ServiceError::Json(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_document<T: Serialize>(path: &Path, doc: &T) -> Result<(), ServiceError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, render_document(doc))
        .map_err(|e| ServiceError::Io(format!("{}: {e}", path.display())))
}
