//! Guided capture: serve target poses one at a time, compare incoming corner
//! detections against the projected target, and capture a view once the
//! board matches.
//!
//! A board matches its target when the mean pixel distance over the four
//! outermost corners is below `match_threshold`. In auto mode the match has
//! to hold for `dwell_frames` consecutive updates; in manual mode capture is
//! triggered explicitly.
//!
//! [`advance`] and [`manual_capture`] are pure transitions: they return a new
//! [`SessionState`] and the events the transition produced.

use std::sync::Arc;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{
    calibrate, CalibrationError, CalibrationResult, CaptureMeta, Corner, ObservationSource,
    SolverConfig, ViewObservation,
};
use crate::geometry::{project_board, BoardSpec, CameraIntrinsics, ImageSpec, Pose};
use crate::pose_space::PoseSet;

/// Match threshold at the 1280 px reference width.
pub const REFERENCE_MATCH_THRESHOLD: f64 = 15.0;
pub const REFERENCE_IMAGE_WIDTH: f64 = 1280.0;
pub const DEFAULT_DWELL_FRAMES: usize = 5;

/// Default threshold, scaled linearly with the image width.
pub fn default_match_threshold(image: &ImageSpec) -> f64 {
    REFERENCE_MATCH_THRESHOLD * image.width as f64 / REFERENCE_IMAGE_WIDTH
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("pose set is empty")]
    EmptyPoseSet,
    #[error("no reference or fallback intrinsics to project targets")]
    MissingReference,
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("target {index} cannot be projected (board behind the camera)")]
    TargetNotRenderable { index: usize },
    #[error("session is {phase:?}; no further input accepted")]
    SessionClosed { phase: Phase },
    #[error("capture mode mismatch: session is in {mode:?} mode")]
    ModeMismatch { mode: CaptureMode },
    #[error("board not fully detected ({detected} of {expected} corners)")]
    NoBoardDetected { detected: usize, expected: usize },
    #[error("outer corner {index} missing from detections")]
    MissingCorner { index: usize },
    #[error("session not complete ({captured} of {total} captured)")]
    NotComplete { captured: usize, total: usize },
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureMode {
    Auto,
    Manual,
}

impl std::str::FromStr for CaptureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(Self::Auto),
            "manual" => Ok(Self::Manual),
            other => Err(format!(
                "unknown capture mode '{other}' (expected auto|manual)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub pose_set: PoseSet,
    pub board: BoardSpec,
    pub image: ImageSpec,
    /// Outer-four mean distance below which a detection matches, pixels.
    pub match_threshold: f64,
    pub capture_mode: CaptureMode,
    /// Consecutive matched updates required before an auto capture.
    pub dwell_frames: usize,
    /// Intrinsics used to project targets (factory or prior calibration).
    #[serde(default)]
    pub reference_intrinsics: Option<CameraIntrinsics>,
    /// Used when no reference is given; its use is recorded in the plan.
    #[serde(default)]
    pub fallback_intrinsics: Option<CameraIntrinsics>,
}

impl SessionConfig {
    /// Auto-capture config with the default threshold and dwell.
    pub fn new(
        pose_set: PoseSet,
        board: BoardSpec,
        image: ImageSpec,
        reference: CameraIntrinsics,
    ) -> Self {
        Self {
            pose_set,
            board,
            image,
            match_threshold: default_match_threshold(&image),
            capture_mode: CaptureMode::Auto,
            dwell_frames: DEFAULT_DWELL_FRAMES,
            reference_intrinsics: Some(reference),
            fallback_intrinsics: None,
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        if self.pose_set.is_empty() {
            return Err(SessionError::EmptyPoseSet);
        }
        if !(self.match_threshold > 0.0 && self.match_threshold.is_finite()) {
            return Err(SessionError::InvalidConfig(format!(
                "match_threshold must be positive, got {}",
                self.match_threshold
            )));
        }
        if self.dwell_frames == 0 {
            return Err(SessionError::InvalidConfig(
                "dwell_frames must be at least 1".into(),
            ));
        }
        self.board
            .validate()
            .and_then(|_| self.image.validate())
            .map_err(|e| SessionError::InvalidConfig(e.to_string()))
    }
}

/// One target the operator has to reproduce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetPose {
    pub index: usize,
    pub pose: Pose,
    /// Projection of every board corner under the session intrinsics.
    pub expected_corners: Vec<Corner>,
    /// Row-major indices of the four outermost corners.
    pub outer_four: [usize; 4],
}

impl TargetPose {
    pub fn expected(&self, index: usize) -> Option<&Vector2<f64>> {
        self.expected_corners
            .iter()
            .find(|c| c.index == index)
            .map(|c| &c.pixel)
    }

    pub fn outer_four_pixels(&self) -> [Vector2<f64>; 4] {
        self.outer_four
            .map(|i| *self.expected(i).expect("targets project every corner"))
    }
}

/// Immutable part of a session, shared by all of its states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub config: SessionConfig,
    /// Intrinsics used to project the targets.
    pub intrinsics: CameraIntrinsics,
    /// True when `config.fallback_intrinsics` had to be used.
    pub used_fallback_intrinsics: bool,
    pub targets: Vec<TargetPose>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingMatch,
    MatchedDwelling,
    /// Transient: a capture is being committed. Never observed between updates.
    Capturing,
    Complete,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub plan: Arc<SessionPlan>,
    pub phase: Phase,
    pub current_target: usize,
    pub captured: Vec<ViewObservation>,
    pub last_match_distance: Option<f64>,
    /// `expected - detected` for each outer corner, pixels.
    pub adjustment: Option<[Vector2<f64>; 4]>,
    pub dwell_count: usize,
}

impl SessionState {
    pub fn config(&self) -> &SessionConfig {
        &self.plan.config
    }

    pub fn total_targets(&self) -> usize {
        self.plan.targets.len()
    }

    /// Target currently displayed, `None` once the session is over.
    pub fn target(&self) -> Option<&TargetPose> {
        match self.phase {
            Phase::Complete | Phase::Aborted => None,
            _ => self.plan.targets.get(self.current_target),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.phase == Phase::Complete
    }

    pub fn is_closed(&self) -> bool {
        matches!(self.phase, Phase::Complete | Phase::Aborted)
    }

    /// The state with the session aborted; no further input is accepted.
    pub fn aborted(&self) -> Self {
        let mut s = self.clone();
        if !s.is_complete() {
            s.phase = Phase::Aborted;
        }
        s
    }

    fn ensure_open(&self) -> Result<(), SessionError> {
        if self.is_closed() {
            return Err(SessionError::SessionClosed { phase: self.phase });
        }
        Ok(())
    }
}

/// Events produced by a transition; persisted one per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionEvent {
    NoBoard {
        target_index: usize,
        frame_token: u64,
    },
    MatchProgress {
        target_index: usize,
        frame_token: u64,
        distance: f64,
        adjustments: [Vector2<f64>; 4],
        dwell_count: usize,
    },
    Capture {
        target_index: usize,
        frame_token: u64,
    },
    Completed {
        captured: usize,
    },
}

/// Projects every target and returns the initial state.
pub fn begin_session(config: SessionConfig) -> Result<SessionState, SessionError> {
    config.validate()?;
    let (intrinsics, used_fallback) =
        match (config.reference_intrinsics, config.fallback_intrinsics) {
            (Some(r), _) => (r, false),
            (None, Some(f)) => (f, true),
            (None, None) => return Err(SessionError::MissingReference),
        };
    intrinsics
        .validate()
        .map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
    let outer_four = config.board.outer_four();
    let targets = config
        .pose_set
        .poses
        .iter()
        .enumerate()
        .map(|(index, pose)| {
            let expected_corners = project_board(&config.board, pose, &intrinsics, &config.image)
                .into_iter()
                .map(|c| {
                    c.pixel
                        .map(|pixel| Corner {
                            index: c.index,
                            pixel,
                        })
                        .ok_or(SessionError::TargetNotRenderable { index })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(TargetPose {
                index,
                pose: *pose,
                expected_corners,
                outer_four,
            })
        })
        .collect::<Result<Vec<_>, SessionError>>()?;
    Ok(SessionState {
        plan: Arc::new(SessionPlan {
            config,
            intrinsics,
            used_fallback_intrinsics: used_fallback,
            targets,
        }),
        phase: Phase::AwaitingMatch,
        current_target: 0,
        captured: Vec::new(),
        last_match_distance: None,
        adjustment: None,
        dwell_count: 0,
    })
}

fn detected_pixel(detected: &[Corner], index: usize) -> Option<&Vector2<f64>> {
    detected.iter().find(|c| c.index == index).map(|c| &c.pixel)
}

/// Mean L2 distance between detected and expected outer-four corners.
pub fn match_distance(detected: &[Corner], target: &TargetPose) -> Result<f64, SessionError> {
    Ok(outer_offsets(detected, target)?
        .iter()
        .map(|d| d.norm())
        .sum::<f64>()
        / 4.0)
}

/// `expected - detected` for each outer corner.
pub fn outer_offsets(
    detected: &[Corner],
    target: &TargetPose,
) -> Result<[Vector2<f64>; 4], SessionError> {
    let mut out = [Vector2::zeros(); 4];
    for (k, &index) in target.outer_four.iter().enumerate() {
        let d = detected_pixel(detected, index).ok_or(SessionError::MissingCorner { index })?;
        let e = target
            .expected(index)
            .ok_or(SessionError::MissingCorner { index })?;
        out[k] = e - d;
    }
    Ok(out)
}

fn as_observation(state: &SessionState, detected: &[Corner]) -> ViewObservation {
    ViewObservation::new(
        state.config().board,
        detected.to_vec(),
        ObservationSource::Live,
    )
}

/// Records a capture for the current target and moves on.
fn commit_capture(
    state: &mut SessionState,
    detected: &[Corner],
    frame_token: u64,
    distance: f64,
    events: &mut Vec<SessionEvent>,
) {
    state.phase = Phase::Capturing;
    let target_index = state.current_target;
    let mut obs = as_observation(state, detected);
    obs.capture = Some(CaptureMeta {
        target_index,
        frame_token,
        match_distance: distance,
    });
    state.captured.push(obs);
    events.push(SessionEvent::Capture {
        target_index,
        frame_token,
    });
    state.dwell_count = 0;
    state.last_match_distance = None;
    state.adjustment = None;
    if state.captured.len() == state.total_targets() {
        state.phase = Phase::Complete;
        events.push(SessionEvent::Completed {
            captured: state.captured.len(),
        });
    } else {
        state.current_target += 1;
        state.phase = Phase::AwaitingMatch;
    }
}

/// Feeds one frame's detections to the session.
pub fn advance(
    state: &SessionState,
    detected: &[Corner],
    frame_token: u64,
) -> Result<(SessionState, Vec<SessionEvent>), SessionError> {
    state.ensure_open()?;
    let mut next = state.clone();
    let mut events = Vec::new();
    let target_index = state.current_target;
    let target = &state.plan.targets[target_index];

    let offsets = if as_observation(state, detected).validate().is_ok() {
        outer_offsets(detected, target).ok()
    } else {
        None
    };
    let Some(offsets) = offsets else {
        next.phase = Phase::AwaitingMatch;
        next.dwell_count = 0;
        next.last_match_distance = None;
        next.adjustment = None;
        events.push(SessionEvent::NoBoard {
            target_index,
            frame_token,
        });
        return Ok((next, events));
    };

    let distance = offsets.iter().map(|d| d.norm()).sum::<f64>() / 4.0;
    let matched = distance < state.config().match_threshold;
    next.dwell_count = if matched { state.dwell_count + 1 } else { 0 };
    next.last_match_distance = Some(distance);
    next.adjustment = Some(offsets);
    next.phase = if matched {
        Phase::MatchedDwelling
    } else {
        Phase::AwaitingMatch
    };
    events.push(SessionEvent::MatchProgress {
        target_index,
        frame_token,
        distance,
        adjustments: offsets,
        dwell_count: next.dwell_count,
    });
    if state.config().capture_mode == CaptureMode::Auto
        && next.dwell_count >= state.config().dwell_frames
    {
        commit_capture(&mut next, detected, frame_token, distance, &mut events);
    }
    Ok((next, events))
}

/// Operator-triggered capture; ignores the match threshold.
pub fn manual_capture(
    state: &SessionState,
    detected: &[Corner],
    frame_token: u64,
) -> Result<(SessionState, Vec<SessionEvent>), SessionError> {
    state.ensure_open()?;
    if state.config().capture_mode != CaptureMode::Manual {
        return Err(SessionError::ModeMismatch {
            mode: state.config().capture_mode,
        });
    }
    let expected = state.config().board.corner_count();
    let full = as_observation(state, detected).validate().is_ok() && detected.len() == expected;
    if !full {
        return Err(SessionError::NoBoardDetected {
            detected: detected.len(),
            expected,
        });
    }
    let target = &state.plan.targets[state.current_target];
    let distance = match_distance(detected, target)?;
    let mut next = state.clone();
    let mut events = Vec::new();
    commit_capture(&mut next, detected, frame_token, distance, &mut events);
    Ok((next, events))
}

/// Calibrates from every captured view.
pub fn finalize(
    state: &SessionState,
    solver: &SolverConfig,
) -> Result<CalibrationResult, SessionError> {
    if !state.is_complete() {
        return Err(SessionError::NotComplete {
            captured: state.captured.len(),
            total: state.total_targets(),
        });
    }
    Ok(calibrate(&state.captured, solver)?)
}
