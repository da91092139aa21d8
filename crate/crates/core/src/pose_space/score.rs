use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::degeneracy::{degeneracy_filters, DegeneracyConfig, DegeneracyFlag};
use super::{PoseSearchSpace, PoseSet, PoseSpaceError};
use crate::calibration::{
    calibrate, param_error, CalibrationResult, SolverConfig, ViewObservation,
};
use crate::geometry::CameraIntrinsics;
use crate::synthetic::{render_observations, NoiseModel, SyntheticError, VirtualCamera};

/// Weights and solver settings for candidate scoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    /// Weight of the mean reprojection error.
    pub alpha: f64,
    /// Weight of the intrinsic parameter error.
    pub beta: f64,
    pub degeneracy: DegeneracyConfig,
    pub solver: SolverConfig,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            degeneracy: DegeneracyConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl ScoringConfig {
    pub fn with_weights(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    /// `1 / (alpha * mre + beta * param_err)`, or 0 for flagged sets.
    pub score: f64,
    /// Mean reprojection error of the calibration, pixels; absent when
    /// calibration failed.
    pub mre: Option<f64>,
    /// `|C_hat - C|` against the reference intrinsics.
    pub param_err: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub degenerate_flags: Vec<DegeneracyFlag>,
    /// Estimated intrinsics, when calibration succeeded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<CameraIntrinsics>,
}

impl ScoreReport {
    pub fn is_flagged(&self) -> bool {
        !self.degenerate_flags.is_empty()
    }

    pub fn flag_names(&self) -> Vec<&'static str> {
        self.degenerate_flags.iter().map(|f| f.name()).collect()
    }
}

/// Reciprocal of the weighted cost. Saturates at `f64::MAX` for a zero cost.
pub fn score_value(mre: f64, param_err: f64, alpha: f64, beta: f64) -> f64 {
    let denom = alpha * mre + beta * param_err;
    let s = 1.0 / denom;
    if s.is_finite() {
        s
    } else if denom >= 0.0 {
        f64::MAX
    } else {
        0.0
    }
}

/// Renders `set` through a virtual camera with the `reference` intrinsics,
/// calibrates, and scores the result.
///
/// The noise stream of a candidate is derived from `noise.seed` and the
/// set's own seed, so scores do not depend on evaluation order. Calibration
/// failures are reported as flags, never as errors.
pub fn score_pose_set(
    set: &PoseSet,
    space: &PoseSearchSpace,
    reference: &CameraIntrinsics,
    noise: &NoiseModel,
    config: &ScoringConfig,
) -> ScoreReport {
    score_with_result(set, space, reference, noise, config).0
}

pub(crate) fn score_with_result(
    set: &PoseSet,
    space: &PoseSearchSpace,
    reference: &CameraIntrinsics,
    noise: &NoiseModel,
    config: &ScoringConfig,
) -> (
    ScoreReport,
    Option<(CalibrationResult, Vec<ViewObservation>)>,
) {
    let mut flags = degeneracy_filters(set, space, reference, &config.degeneracy);
    let camera = VirtualCamera {
        truth: *reference,
        image: space.image,
    };
    let mut report = ScoreReport {
        score: 0.0,
        mre: None,
        param_err: None,
        alpha: config.alpha,
        beta: config.beta,
        degenerate_flags: Vec::new(),
        estimate: None,
    };
    let views =
        match render_observations(&camera, &set.poses, &space.board, &noise.reseeded(set.seed)) {
            Ok(v) => v,
            Err(SyntheticError::InsufficientVisibility { .. }) => {
                flags.push(DegeneracyFlag::InsufficientVisibility);
                report.degenerate_flags = flags;
                return (report, None);
            }
            Err(_) => {
                flags.push(DegeneracyFlag::DegenerateCalibration);
                report.degenerate_flags = flags;
                return (report, None);
            }
        };
    let outcome = match calibrate(&views, &config.solver) {
        Ok(result) => {
            if !result.converged {
                flags.push(DegeneracyFlag::DidNotConverge);
            }
            let err = param_error(&result.intrinsics, reference);
            report.mre = Some(result.mre);
            report.param_err = Some(err);
            report.estimate = Some(result.intrinsics);
            Some((result, views))
        }
        Err(_) => {
            flags.push(DegeneracyFlag::DegenerateCalibration);
            None
        }
    };
    flags.sort_unstable();
    flags.dedup();
    if flags.is_empty() {
        if let (Some(m), Some(e)) = (report.mre, report.param_err) {
            report.score = score_value(m, e, config.alpha, config.beta);
        }
    }
    report.degenerate_flags = flags;
    (report, outcome)
}

/// Total order used for selection: higher score first, then lower MRE, then
/// lower seed, then pose content.
pub fn compare_candidates(a: (&PoseSet, &ScoreReport), b: (&PoseSet, &ScoreReport)) -> Ordering {
    let mre_a = a.1.mre.unwrap_or(f64::INFINITY);
    let mre_b = b.1.mre.unwrap_or(f64::INFINITY);
    b.1.score
        .total_cmp(&a.1.score)
        .then(mre_a.total_cmp(&mre_b))
        .then(a.0.seed.cmp(&b.0.seed))
        .then_with(|| pose_content_order(a.0, b.0))
}

fn pose_content_order(a: &PoseSet, b: &PoseSet) -> Ordering {
    let flat = |s: &PoseSet| -> Vec<f64> {
        s.poses
            .iter()
            .flat_map(|p| {
                p.rotation()
                    .iter()
                    .chain(p.translation().iter())
                    .copied()
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    let (fa, fb) = (flat(a), flat(b));
    for (x, y) in fa.iter().zip(&fb) {
        let o = x.total_cmp(y);
        if o != Ordering::Equal {
            return o;
        }
    }
    fa.len().cmp(&fb.len())
}

/// Scores every candidate (in parallel; results are in input order).
pub fn score_candidates(
    candidates: &[PoseSet],
    space: &PoseSearchSpace,
    reference: &CameraIntrinsics,
    noise: &NoiseModel,
    config: &ScoringConfig,
) -> Vec<ScoreReport> {
    candidates
        .par_iter()
        .map(|set| score_pose_set(set, space, reference, noise, config))
        .collect()
}

/// The candidate with the highest score.
pub fn select_optimal(
    candidates: &[PoseSet],
    space: &PoseSearchSpace,
    reference: &CameraIntrinsics,
    noise: &NoiseModel,
    config: &ScoringConfig,
) -> Result<(PoseSet, ScoreReport), PoseSpaceError> {
    let reports = score_candidates(candidates, space, reference, noise, config);
    let (set, report) = select_from_scored(candidates, &reports)?;
    Ok((set.clone(), report.clone()))
}

/// Argmax over already scored candidates.
pub fn select_from_scored<'a>(
    candidates: &'a [PoseSet],
    reports: &'a [ScoreReport],
) -> Result<(&'a PoseSet, &'a ScoreReport), PoseSpaceError> {
    if candidates.is_empty() {
        return Err(PoseSpaceError::InvalidArgument("no candidates".into()));
    }
    candidates
        .iter()
        .zip(reports)
        .filter(|(_, r)| !r.is_flagged())
        .min_by(|a, b| compare_candidates(*a, *b))
        .ok_or(PoseSpaceError::AllDegenerate {
            candidates: candidates.len(),
        })
}
