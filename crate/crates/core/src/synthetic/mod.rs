//! Virtual camera, corner noise, the candidate-ranking experiment and a
//! simulated operator for end-to-end runs without hardware.

mod experiment;
mod operator;
mod render;

pub use experiment::{
    extremal_rows, run_table1_experiment, sweep_candidates, CandidateSweep, ExperimentConfig,
    ExperimentReport, ExtremalRow, ROW_LABELS,
};
pub use operator::{drive_session, operator_tick, Frame, OperatorRun, SimulatedOperator};
pub use render::{detect_corners, render_observations, NoiseKind, NoiseModel, VirtualCamera};

use thiserror::Error;

use crate::calibration::CalibrationError;
use crate::geometry::GeometryError;
use crate::pose_space::PoseSpaceError;
use crate::session::SessionError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyntheticError {
    #[error("pose {pose_index} shows only {visible} corners")]
    InsufficientVisibility { pose_index: usize, visible: usize },
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error("invalid operator: {0}")]
    InvalidOperator(String),
    #[error(transparent)]
    PoseSpace(#[from] PoseSpaceError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Session(#[from] SessionError),
}
