//! Intrinsic calibration from planar-board corner observations.
//!
//! Pipeline: per-view normalized DLT homography, zero-skew closed-form
//! intrinsics, pose recovery from each homography, then joint damped
//! least-squares refinement of intrinsics and poses on the pixel residuals.

mod closed_form;
mod homography;
pub mod jacobian;
mod observation;
mod solver;

pub use closed_form::{closed_form_intrinsics, pose_from_homography};
pub use homography::{estimate_homography, homography_from_points, Homography};
pub use jacobian::{residual_jacobian, residuals, ResidualJacobian};
pub use observation::{
    read_observations, write_observations, CaptureMeta, Corner, ObservationSource, ViewObservation,
};
pub use solver::{refine, CalibrationResult, SolverConfig, SolverDiagnostics, Termination};

use thiserror::Error;

use crate::geometry::{project_point, CameraIntrinsics, GeometryError, Pose};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("need at least {needed} views, got {got}")]
    TooFewViews { needed: usize, got: usize },
    #[error("normal equations are singular even under maximal damping")]
    SingularNormalEquations,
    #[error("solver did not converge after {iterations} iterations (mre {mre} px)")]
    DidNotConverge { iterations: usize, mre: f64 },
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Mean Euclidean reprojection error over every observed corner, pixels.
pub fn mre(
    views: &[ViewObservation],
    intrinsics: &CameraIntrinsics,
    poses: &[Pose],
) -> Result<f64, CalibrationError> {
    if views.len() != poses.len() {
        return Err(CalibrationError::InvalidObservation(format!(
            "{} views but {} poses",
            views.len(),
            poses.len()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (view, pose) in views.iter().zip(poses) {
        for c in &view.corners {
            let p = project_point(&view.board.point(c.index), pose, intrinsics)?;
            total += (p - c.pixel).norm();
            count += 1;
        }
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok(total / count as f64)
}

/// Euclidean distance between two intrinsic vectors in `C` order. Pixel and
/// dimensionless entries are mixed without weighting.
pub fn param_error(estimate: &CameraIntrinsics, reference: &CameraIntrinsics) -> f64 {
    estimate
        .to_vector()
        .iter()
        .zip(reference.to_vector())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Refinement starting points as `(focal multiplier, k1)` applied to the
/// closed-form estimate.
pub const REFINEMENT_STARTS: [(f64, f64); 3] = [(1.0, 0.0), (1.4, -0.1), (2.0, -0.2)];

/// Full calibration of a set of views: closed-form initialization, then
/// [`refine`] from each of the [`REFINEMENT_STARTS`]; the lowest final cost
/// wins.
pub fn calibrate(
    views: &[ViewObservation],
    config: &SolverConfig,
) -> Result<CalibrationResult, CalibrationError> {
    if views.len() < 3 {
        return Err(CalibrationError::TooFewViews {
            needed: 3,
            got: views.len(),
        });
    }
    let homographies = views
        .iter()
        .map(|v| estimate_homography(v).map(|h| h.matrix))
        .collect::<Result<Vec<_>, _>>()?;
    let init = closed_form_intrinsics(&homographies)?;
    let mut best: Option<CalibrationResult> = None;
    for (scale, k1) in REFINEMENT_STARTS {
        let mut start = init;
        start.fx *= scale;
        start.fy *= scale;
        start.k1 = k1;
        let poses = homographies
            .iter()
            .map(|h| pose_from_homography(&start, h))
            .collect::<Result<Vec<_>, _>>()?;
        let result = refine(views, &start, &poses, config)?;
        let better = best
            .as_ref()
            .is_none_or(|b| result.diagnostics.final_cost < b.diagnostics.final_cost);
        if better {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one start"))
}
