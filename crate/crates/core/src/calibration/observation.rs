use std::collections::HashSet;
use std::io::{BufRead, Write};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::CalibrationError;
use crate::geometry::BoardSpec;

/// A detected (or synthesized) board corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corner {
    /// Row-major index into the board's model points.
    pub index: usize,
    pub pixel: Vector2<f64>,
}

impl Corner {
    pub fn new(index: usize, u: f64, v: f64) -> Self {
        Self {
            index,
            pixel: Vector2::new(u, v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationSource {
    Synthetic,
    Live,
}

/// Capture bookkeeping attached by the guidance session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptureMeta {
    pub target_index: usize,
    pub frame_token: u64,
    /// Outer-four match distance at the moment of capture, pixels.
    pub match_distance: f64,
}

/// Corners of one calibration view paired with the board they belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewObservation {
    pub board: BoardSpec,
    pub corners: Vec<Corner>,
    pub source: ObservationSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capture: Option<CaptureMeta>,
}

impl ViewObservation {
    pub fn new(board: BoardSpec, corners: Vec<Corner>, source: ObservationSource) -> Self {
        Self {
            board,
            corners,
            source,
            capture: None,
        }
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        self.board.validate()?;
        if self.corners.len() < 4 {
            return Err(CalibrationError::InvalidObservation(format!(
                "a view needs at least 4 corners, got {}",
                self.corners.len()
            )));
        }
        let mut seen = HashSet::with_capacity(self.corners.len());
        for c in &self.corners {
            if !self.board.contains_index(c.index) {
                return Err(CalibrationError::InvalidObservation(format!(
                    "corner index {} out of range for a {}x{} board",
                    c.index, self.board.cols, self.board.rows
                )));
            }
            if !seen.insert(c.index) {
                return Err(CalibrationError::InvalidObservation(format!(
                    "duplicate corner index {}",
                    c.index
                )));
            }
            if !(c.pixel.x.is_finite() && c.pixel.y.is_finite()) {
                return Err(CalibrationError::InvalidObservation(format!(
                    "corner {} has a non-finite pixel",
                    c.index
                )));
            }
        }
        Ok(())
    }

    pub fn corner(&self, index: usize) -> Option<&Corner> {
        self.corners.iter().find(|c| c.index == index)
    }
}

/// Reads one observation per line; blank lines are skipped.
pub fn read_observations<R: BufRead>(reader: R) -> Result<Vec<ViewObservation>, CalibrationError> {
    let mut views = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CalibrationError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let view: ViewObservation = serde_json::from_str(&line).map_err(|e| {
            CalibrationError::InvalidObservation(format!("line {}: {e}", lineno + 1))
        })?;
        view.validate()?;
        views.push(view);
    }
    Ok(views)
}

pub fn write_observations<W: Write>(
    mut writer: W,
    views: &[ViewObservation],
) -> Result<(), CalibrationError> {
    for v in views {
        let line = serde_json::to_string(v).map_err(|e| CalibrationError::Io(e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| CalibrationError::Io(e.to_string()))?;
    }
    Ok(())
}
