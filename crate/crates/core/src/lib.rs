//! Calibration with pose guidance.
//!
//! The crate selects a set of calibration-board poses that scores well under
//! a combined reprojection/parameter-error criterion, guides an operator to
//! reproduce those poses in a live capture session, and estimates camera
//! intrinsics from the captured corners.
//!
//! Module map:
//!
//! - [`geometry`]: pinhole camera, radial-tangential distortion, poses, boards.
//! - [`calibration`]: homographies, closed-form initialization, damped
//!   least-squares refinement, reprojection metrics.
//! - [`pose_space`]: pose search spaces, candidate pose sets, degeneracy
//!   filters, scoring and selection.
//! - [`synthetic`]: virtual camera, noise, the candidate-ranking experiment
//!   and a simulated operator.
//! - [`session`]: the guided-capture state machine.
//! - [`service`]: wire protocol, artifact store, session server and CLI.

pub mod calibration;
pub mod geometry;
pub mod pose_space;
pub mod seed;
pub mod service;
pub mod session;
pub mod synthetic;

pub use calibration::{CalibrationError, CalibrationResult, SolverConfig, ViewObservation};
pub use geometry::{BoardSpec, CameraIntrinsics, GeometryError, ImageSpec, Pose};
pub use pose_space::{PoseSearchSpace, PoseSet, ScoreReport};
pub use session::{SessionConfig, SessionState};
pub use synthetic::{NoiseModel, SimulatedOperator, VirtualCamera};

/// Version tag written into every persisted JSON document.
pub const SCHEMA_VERSION: u32 = 1;
