//! C ABI over the poseguide library.
//!
//! Every fallible function returns a [`PgStatus`]; on failure a message is
//! available from [`pg_last_error`] on the calling thread until the next
//! failing call. Strings returned through `char **` out-parameters are owned
//! by the caller and released with [`pg_string_free`]. Sessions are opaque
//! handles created by [`pg_session_new`] and released with
//! [`pg_session_free`]; a handle must not be used from two threads at once.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::Vector3;
use serde::Deserialize;

use poseguide::calibration::{param_error, Corner, SolverConfig};
use poseguide::geometry::{project_point, CameraIntrinsics, GeometryError, Pose};
use poseguide::pose_space::{score_value, PoseSearchSpace, PoseSpaceError};
use poseguide::service::{
    parse_document, render_document, CalibrationFile, PoseSetFile, ServiceError,
};
use poseguide::session::{
    advance, begin_session, default_match_threshold, finalize, manual_capture, CaptureMode, Phase,
    SessionError, SessionEvent, SessionState,
};
use poseguide::synthetic::{
    run_table1_experiment, ExperimentConfig, NoiseModel, SyntheticError, VirtualCamera,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    UnsupportedSchema = 4,
    InvalidArgument = 5,
    BehindCamera = 6,
    SessionClosed = 7,
    ModeMismatch = 8,
    NoBoard = 9,
    NotComplete = 10,
    CalibrationFailed = 11,
    BufferTooSmall = 12,
    /// Every candidate pose set was flagged degenerate.
    AllDegenerate = 13,
    Internal = 14,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgPhase {
    AwaitingMatch = 0,
    MatchedDwelling = 1,
    Capturing = 2,
    Complete = 3,
    Aborted = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgCaptureMode {
    Auto = 0,
    Manual = 1,
}

/// Intrinsics in `fx, fy, cx, cy, k1, k2, k3, p1, p2` order.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub p1: f64,
    pub p2: f64,
}

/// Board-to-camera transform; `rotation` is axis-angle in radians.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgPose {
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgCorner {
    /// Row-major board corner index.
    pub index: u32,
    pub u: f64,
    pub v: f64,
}

/// Zero or non-finite fields select the defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgSessionOptions {
    pub match_threshold: f64,
    pub capture_mode: PgCaptureMode,
    pub dwell_frames: u32,
}

/// Snapshot of a session after an update.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgProgress {
    pub phase: PgPhase,
    pub current_target: usize,
    pub total_targets: usize,
    pub captured: usize,
    pub dwell_count: usize,
    /// False when the last frame had no usable board.
    pub has_match: bool,
    /// Outer-four match distance, pixels; NaN when `has_match` is false.
    pub distance: f64,
    /// `expected - detected` per outer corner as `u0, v0, u1, v1, ...`.
    pub adjustments: [f64; 8],
    /// True when the last update committed a capture.
    pub captured_now: bool,
}

pub struct PgSession {
    state: SessionState,
    solver: SolverConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let bytes: Vec<u8> = message
        .into()
        .into_bytes()
        .into_iter()
        .filter(|&b| b != 0)
        .collect();
    let c = CString::new(bytes).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(PgStatus, String);

impl Failure {
    fn null(name: &str) -> Self {
        Self(PgStatus::NullArgument, format!("{name} is null"))
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self(PgStatus::InvalidArgument, message.into())
    }
}

impl From<ServiceError> for Failure {
    fn from(e: ServiceError) -> Self {
        let status = match &e {
            ServiceError::Json(_) | ServiceError::BadMessage(_) => PgStatus::ParseError,
            ServiceError::UnsupportedSchema { .. } => PgStatus::UnsupportedSchema,
            ServiceError::Session(s) => return Failure::from(s.clone()),
            ServiceError::Calibration(_) => PgStatus::CalibrationFailed,
            ServiceError::InvalidInput(_)
            | ServiceError::PoseSpace(_)
            | ServiceError::Synthetic(_) => PgStatus::InvalidArgument,
            _ => PgStatus::Internal,
        };
        Self(status, e.to_string())
    }
}

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::SessionClosed { .. } => PgStatus::SessionClosed,
            SessionError::ModeMismatch { .. } => PgStatus::ModeMismatch,
            SessionError::NoBoardDetected { .. } | SessionError::MissingCorner { .. } => {
                PgStatus::NoBoard
            }
            SessionError::NotComplete { .. } => PgStatus::NotComplete,
            SessionError::Calibration(_) => PgStatus::CalibrationFailed,
            _ => PgStatus::InvalidArgument,
        };
        Self(status, e.to_string())
    }
}

impl From<GeometryError> for Failure {
    fn from(e: GeometryError) -> Self {
        let status = match e {
            GeometryError::BehindCamera { .. } => PgStatus::BehindCamera,
            _ => PgStatus::InvalidArgument,
        };
        Self(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PgStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "internal error".into());
            set_error(format!("internal error: {message}"));
            PgStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(name))
}

unsafe fn read_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(PgStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn write_string(out: *mut *mut c_char, bytes: Vec<u8>) -> Result<(), Failure> {
    let s = CString::new(bytes)
        .map_err(|_| Failure(PgStatus::Internal, "output contains a nul byte".into()))?;
    *out = s.into_raw();
    Ok(())
}

unsafe fn read_corners(corners: *const PgCorner, count: usize) -> Result<Vec<Corner>, Failure> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if corners.is_null() {
        return Err(Failure::null("corners"));
    }
    Ok(std::slice::from_raw_parts(corners, count)
        .iter()
        .map(|c| Corner::new(c.index as usize, c.u, c.v))
        .collect())
}

impl From<PgIntrinsics> for CameraIntrinsics {
    fn from(c: PgIntrinsics) -> Self {
        CameraIntrinsics::pinhole(c.fx, c.fy, c.cx, c.cy)
            .with_distortion(c.k1, c.k2, c.k3, c.p1, c.p2)
    }
}

impl From<CameraIntrinsics> for PgIntrinsics {
    fn from(c: CameraIntrinsics) -> Self {
        let [fx, fy, cx, cy, k1, k2, k3, p1, p2] = c.to_vector();
        Self {
            fx,
            fy,
            cx,
            cy,
            k1,
            k2,
            k3,
            p1,
            p2,
        }
    }
}

impl From<Phase> for PgPhase {
    fn from(p: Phase) -> Self {
        match p {
            Phase::AwaitingMatch => Self::AwaitingMatch,
            Phase::MatchedDwelling => Self::MatchedDwelling,
            Phase::Capturing => Self::Capturing,
            Phase::Complete => Self::Complete,
            Phase::Aborted => Self::Aborted,
        }
    }
}

fn progress(state: &SessionState, captured_now: bool) -> PgProgress {
    let mut adjustments = [f64::NAN; 8];
    if let Some(adj) = &state.adjustment {
        for (i, d) in adj.iter().enumerate() {
            adjustments[2 * i] = d.x;
            adjustments[2 * i + 1] = d.y;
        }
    }
    PgProgress {
        phase: state.phase.into(),
        current_target: state.current_target,
        total_targets: state.total_targets(),
        captured: state.captured.len(),
        dwell_count: state.dwell_count,
        has_match: state.last_match_distance.is_some(),
        distance: state.last_match_distance.unwrap_or(f64::NAN),
        adjustments,
        captured_now,
    }
}

/// Version written into and required of every JSON document.
#[no_mangle]
pub extern "C" fn pg_schema_version() -> u32 {
    poseguide::SCHEMA_VERSION
}

/// Message of the last failure on this thread, or NULL. Owned by the
/// library; valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// Safety: `s` must be NULL or a pointer returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Projects the board-frame `point[3]` through `pose` and `intrinsics` into
/// `out_pixel[2]`.
///
/// Safety: Pointers must be valid for the documented element counts.
#[no_mangle]
pub unsafe extern "C" fn pg_project_point(
    intrinsics: *const PgIntrinsics,
    pose: *const PgPose,
    point: *const f64,
    out_pixel: *mut f64,
) -> PgStatus {
    guard(|| {
        let c = CameraIntrinsics::from(*deref(intrinsics, "intrinsics")?);
        let pose = deref(pose, "pose")?;
        if point.is_null() {
            return Err(Failure::null("point"));
        }
        if out_pixel.is_null() {
            return Err(Failure::null("out_pixel"));
        }
        let p = std::slice::from_raw_parts(point, 3);
        let pose = Pose::new(
            Vector3::from(pose.rotation),
            Vector3::from(pose.translation),
        );
        let px = project_point(&Vector3::new(p[0], p[1], p[2]), &pose, &c)?;
        *out_pixel = px.x;
        *out_pixel.add(1) = px.y;
        Ok(())
    })
}

/// Euclidean distance between two intrinsic vectors.
///
/// Safety: Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pg_param_error(
    estimate: *const PgIntrinsics,
    reference: *const PgIntrinsics,
    out: *mut f64,
) -> PgStatus {
    guard(|| {
        let a = CameraIntrinsics::from(*deref(estimate, "estimate")?);
        let b = CameraIntrinsics::from(*deref(reference, "reference")?);
        let out = out.as_mut().ok_or_else(|| Failure::null("out"))?;
        *out = param_error(&a, &b);
        Ok(())
    })
}

/// `1 / (alpha * mre + beta * param_err)`.
///
/// Safety: `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pg_score(
    mre: f64,
    param_err: f64,
    alpha: f64,
    beta: f64,
    out: *mut f64,
) -> PgStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| Failure::null("out"))?;
        if [mre, param_err, alpha, beta]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Failure::invalid("inputs must be finite and non-negative"));
        }
        *out = score_value(mre, param_err, alpha, beta);
        Ok(())
    })
}

#[derive(Deserialize)]
struct OptimizeRequest {
    camera: VirtualCamera,
    space: PoseSearchSpace,
    #[serde(default)]
    config: ExperimentConfig,
    #[serde(default)]
    noise_sigma: f64,
}

/// Runs the candidate experiment described by `request_json` and writes the
/// selected pose-set document to `*out_json`.
///
/// The request is `{"schema_version", "camera", "space", "config",
/// "noise_sigma"}`; `config` and `noise_sigma` are optional.
///
/// Safety: `request_json` must be a NUL-terminated string; `out_json` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pg_optimize_poses(
    request_json: *const c_char,
    out_json: *mut *mut c_char,
) -> PgStatus {
    guard(|| {
        let text = read_str(request_json, "request_json")?;
        if out_json.is_null() {
            return Err(Failure::null("out_json"));
        }
        let req: OptimizeRequest = parse_document(text.as_bytes())?;
        if !(req.noise_sigma >= 0.0 && req.noise_sigma.is_finite()) {
            return Err(Failure::invalid(
                "noise_sigma must be finite and non-negative",
            ));
        }
        req.config
            .validate()
            .map_err(|e| Failure::invalid(e.to_string()))?;
        let noise = NoiseModel::gaussian(req.noise_sigma, req.config.seed);
        let report =
            run_table1_experiment(&req.camera, &req.space, &req.config, &noise).map_err(|e| {
                let status = match e {
                    SyntheticError::PoseSpace(PoseSpaceError::AllDegenerate { .. }) => {
                        PgStatus::AllDegenerate
                    }
                    _ => PgStatus::InvalidArgument,
                };
                Failure(status, e.to_string())
            })?;
        let file = PoseSetFile::from_report(&req.camera, &req.space, &report);
        write_string(out_json, render_document(&file))
    })
}

/// Starts a session from a pose-set document. `options` may be NULL.
///
/// Safety: `pose_set_json` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pg_session_new(
    pose_set_json: *const c_char,
    options: *const PgSessionOptions,
    out: *mut *mut PgSession,
) -> PgStatus {
    guard(|| {
        let text = read_str(pose_set_json, "pose_set_json")?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let file: PoseSetFile = parse_document(text.as_bytes())?;
        let mut config = file.session_config();
        if let Some(o) = options.as_ref() {
            config.match_threshold = if o.match_threshold.is_finite() && o.match_threshold > 0.0 {
                o.match_threshold
            } else {
                default_match_threshold(&file.image)
            };
            config.capture_mode = match o.capture_mode {
                PgCaptureMode::Auto => CaptureMode::Auto,
                PgCaptureMode::Manual => CaptureMode::Manual,
            };
            if o.dwell_frames > 0 {
                config.dwell_frames = o.dwell_frames as usize;
            }
        }
        let state = begin_session(config)?;
        *out = Box::into_raw(Box::new(PgSession {
            state,
            solver: SolverConfig::default(),
        }));
        Ok(())
    })
}

/// Releases a session. NULL is ignored.
///
/// Safety: `session` must be NULL or a live handle from [`pg_session_new`].
#[no_mangle]
pub unsafe extern "C" fn pg_session_free(session: *mut PgSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

unsafe fn step(
    session: *mut PgSession,
    corners: *const PgCorner,
    count: usize,
    frame_token: u64,
    out: *mut PgProgress,
    manual: bool,
) -> PgStatus {
    guard(|| {
        let s = session.as_mut().ok_or_else(|| Failure::null("session"))?;
        let detected = read_corners(corners, count)?;
        let (next, events) = if manual {
            manual_capture(&s.state, &detected, frame_token)?
        } else {
            advance(&s.state, &detected, frame_token)?
        };
        s.state = next;
        let captured_now = events
            .iter()
            .any(|e| matches!(e, SessionEvent::Capture { .. }));
        if let Some(out) = out.as_mut() {
            *out = progress(&s.state, captured_now);
        }
        Ok(())
    })
}

/// Feeds one frame of detections. `out` may be NULL.
///
/// Safety: `session` must be a live handle; `corners` must hold `count` elements.
#[no_mangle]
pub unsafe extern "C" fn pg_session_advance(
    session: *mut PgSession,
    corners: *const PgCorner,
    count: usize,
    frame_token: u64,
    out: *mut PgProgress,
) -> PgStatus {
    step(session, corners, count, frame_token, out, false)
}

/// Captures the current target from a full-board detection; manual mode
/// only. `out` may be NULL.
///
/// Safety: As for [`pg_session_advance`].
#[no_mangle]
pub unsafe extern "C" fn pg_session_manual_capture(
    session: *mut PgSession,
    corners: *const PgCorner,
    count: usize,
    frame_token: u64,
    out: *mut PgProgress,
) -> PgStatus {
    step(session, corners, count, frame_token, out, true)
}

/// Safety: `session` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pg_session_progress(
    session: *const PgSession,
    out: *mut PgProgress,
) -> PgStatus {
    guard(|| {
        let s = deref(session, "session")?;
        let out = out.as_mut().ok_or_else(|| Failure::null("out"))?;
        *out = progress(&s.state, false);
        Ok(())
    })
}

/// Copies the current target's expected corners into `buf`.
///
/// `*written` receives the corner count. With `buf` NULL only the count is
/// reported; a `capacity` below the count yields `BufferTooSmall`.
///
/// Safety: `buf` must be NULL or hold `capacity` elements; `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pg_session_target_corners(
    session: *const PgSession,
    buf: *mut PgCorner,
    capacity: usize,
    written: *mut usize,
) -> PgStatus {
    guard(|| {
        let s = deref(session, "session")?;
        let written = written.as_mut().ok_or_else(|| Failure::null("written"))?;
        let target = s.state.target().ok_or_else(|| {
            Failure(
                PgStatus::SessionClosed,
                format!("session is {:?}", s.state.phase),
            )
        })?;
        let corners = &target.expected_corners;
        *written = corners.len();
        if buf.is_null() {
            return Ok(());
        }
        if capacity < corners.len() {
            return Err(Failure(
                PgStatus::BufferTooSmall,
                format!("need {} corners, capacity {capacity}", corners.len()),
            ));
        }
        let out = std::slice::from_raw_parts_mut(buf, corners.len());
        for (dst, c) in out.iter_mut().zip(corners) {
            *dst = PgCorner {
                index: c.index as u32,
                u: c.pixel.x,
                v: c.pixel.y,
            };
        }
        Ok(())
    })
}

/// Calibrates a complete session. Writes the calibration document to
/// `*out_json` and, when `out_intrinsics` is not NULL, the estimate.
///
/// Safety: `session` and `out_json` must be valid; `out_intrinsics` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn pg_session_finalize(
    session: *const PgSession,
    out_json: *mut *mut c_char,
    out_intrinsics: *mut PgIntrinsics,
) -> PgStatus {
    guard(|| {
        let s = deref(session, "session")?;
        if out_json.is_null() {
            return Err(Failure::null("out_json"));
        }
        let result = finalize(&s.state, &s.solver)?;
        if let Some(out) = out_intrinsics.as_mut() {
            *out = result.intrinsics.into();
        }
        write_string(
            out_json,
            render_document(&CalibrationFile::new(None, result)),
        )
    })
}
