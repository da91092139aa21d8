//! Iterative improvement of a pose set: find the image region that the
//! current set calibrates worst, propose poses that land there and keep a
//! swap only when it raises the score.

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::degeneracy::{quadrant_coverage, quadrant_of};
use super::score::{compare_candidates, score_with_result, ScoreReport, ScoringConfig};
use super::{PoseSearchSpace, PoseSet, PoseSpaceError};
use crate::calibration::{CalibrationResult, ViewObservation};
use crate::geometry::{project_point, CameraIntrinsics, Pose};
use crate::seed;
use crate::synthetic::NoiseModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinementConfig {
    /// Replacement poses proposed per round.
    pub proposals_per_round: usize,
    /// How many of the most redundant poses each proposal may replace.
    pub replace_candidates: usize,
    /// Sampling attempts per round when looking for proposals.
    pub proposal_attempts: usize,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            proposals_per_round: 8,
            replace_candidates: 3,
            proposal_attempts: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Swap {
    pub round: usize,
    pub quadrant: usize,
    pub replaced_index: usize,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementOutcome {
    pub set: PoseSet,
    pub report: ScoreReport,
    /// Score after each round, starting with the initial score.
    pub score_history: Vec<f64>,
    pub swaps: Vec<Swap>,
}

#[allow(clippy::too_many_arguments)]
pub fn iterative_refine_set(
    initial: &PoseSet,
    space: &PoseSearchSpace,
    reference: &CameraIntrinsics,
    noise: &NoiseModel,
    scoring: &ScoringConfig,
    refinement: &RefinementConfig,
    rounds: usize,
    seed: u64,
) -> Result<RefinementOutcome, PoseSpaceError> {
    space.validate()?;
    if initial.is_empty() {
        return Err(PoseSpaceError::InvalidPoseSet("empty pose set".into()));
    }
    let (mut report, mut fit) = score_with_result(initial, space, reference, noise, scoring);
    let mut set = initial.clone();
    let mut history = vec![report.score];
    let mut swaps = Vec::new();

    for round in 0..rounds {
        let quadrant = weakest_quadrant(&set, space, reference, scoring, fit.as_ref());
        let proposals = propose(
            space,
            reference,
            quadrant,
            refinement,
            seed::derive(seed, round as u64),
        );
        let replace = most_redundant(&set.poses, space, refinement.replace_candidates);

        let trials: Vec<(usize, Pose)> = proposals
            .iter()
            .flat_map(|p| replace.iter().map(move |&i| (i, *p)))
            .collect();
        let scored: Vec<_> = trials
            .par_iter()
            .map(|(i, pose)| {
                let mut poses = set.poses.clone();
                poses[*i] = *pose;
                let cand = PoseSet::candidate(poses, set.seed, set.space_id.clone());
                let (r, f) = score_with_result(&cand, space, reference, noise, scoring);
                (cand, r, f)
            })
            .collect();

        let best = scored
            .iter()
            .enumerate()
            .filter(|(_, (_, r, _))| !r.is_flagged())
            .min_by(|(_, a), (_, b)| compare_candidates((&a.0, &a.1), (&b.0, &b.1)));
        if let Some((k, (cand, r, f))) = best {
            if r.score > report.score {
                swaps.push(Swap {
                    round,
                    quadrant,
                    replaced_index: trials[k].0,
                    pose: trials[k].1,
                });
                set = cand.clone();
                report = r.clone();
                fit = f.clone();
            }
        }
        history.push(report.score);
    }
    Ok(RefinementOutcome {
        set,
        report,
        score_history: history,
        swaps,
    })
}

/// Least covered quadrant if any falls below the coverage floor; otherwise
/// the quadrant with the highest mean residual under the current estimate.
fn weakest_quadrant(
    set: &PoseSet,
    space: &PoseSearchSpace,
    reference: &CameraIntrinsics,
    scoring: &ScoringConfig,
    fit: Option<&(CalibrationResult, Vec<ViewObservation>)>,
) -> usize {
    let coverage = quadrant_coverage(
        &set.poses,
        space,
        reference,
        scoring.degeneracy.coverage_grid,
    );
    let least_covered = argmin(&coverage);
    if coverage[least_covered] < scoring.degeneracy.min_quadrant_coverage {
        return least_covered;
    }
    let Some((result, views)) = fit else {
        return least_covered;
    };
    let mut sum = [0.0f64; 4];
    let mut count = [0usize; 4];
    for (view, pose) in views.iter().zip(&result.per_view_poses) {
        for c in &view.corners {
            if let Ok(p) = project_point(&view.board.point(c.index), pose, &result.intrinsics) {
                let q = quadrant_of(&space.image, &c.pixel);
                sum[q] += (p - c.pixel).norm();
                count[q] += 1;
            }
        }
    }
    let mut worst = 0;
    let mut worst_value = f64::NEG_INFINITY;
    for q in 0..4 {
        let mean = if count[q] == 0 {
            f64::INFINITY
        } else {
            sum[q] / count[q] as f64
        };
        if mean > worst_value {
            worst_value = mean;
            worst = q;
        }
    }
    worst
}

fn argmin(v: &[f64; 4]) -> usize {
    let mut best = 0;
    for q in 1..4 {
        if v[q] < v[best] {
            best = q;
        }
    }
    best
}

/// Admissible poses whose board center projects into `quadrant`.
fn propose(
    space: &PoseSearchSpace,
    reference: &CameraIntrinsics,
    quadrant: usize,
    config: &RefinementConfig,
    seed: u64,
) -> Vec<Pose> {
    let mut rng = seed::rng(seed);
    let mut out = Vec::with_capacity(config.proposals_per_round);
    for _ in 0..config.proposal_attempts {
        if out.len() == config.proposals_per_round {
            break;
        }
        let pose = space.pose_at(&space.sample_coordinates(&mut rng));
        let Ok(center) = project_point(&space.board.center(), &pose, reference) else {
            continue;
        };
        if quadrant_of(&space.image, &Vector2::new(center.x, center.y)) == quadrant
            && space.is_admissible(&pose, reference)
        {
            out.push(pose);
        }
    }
    out
}

/// Indices of the `k` poses closest to their nearest neighbor in the set.
fn most_redundant(poses: &[Pose], space: &PoseSearchSpace, k: usize) -> Vec<usize> {
    let scale = space
        .board
        .width()
        .hypot(space.board.height())
        .max(f64::EPSILON);
    let mut nearest: Vec<(f64, usize)> = (0..poses.len())
        .map(|i| {
            let d = (0..poses.len())
                .filter(|&j| j != i)
                .map(|j| {
                    poses[i].rotation_distance(&poses[j])
                        + poses[i].translation_distance(&poses[j]) / scale
                })
                .fold(f64::INFINITY, f64::min);
            (d, i)
        })
        .collect();
    nearest.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    nearest.into_iter().take(k).map(|(_, i)| i).collect()
}
