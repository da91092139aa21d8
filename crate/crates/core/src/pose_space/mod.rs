//! Candidate pose sets: sampling inside an application search space,
//! degeneracy screening, scoring by `1 / (alpha * MRE + beta * |C_hat - C|)`
//! and argmax selection.

mod degeneracy;
mod refine;
mod score;
mod set;
mod space;

pub use degeneracy::{
    board_hulls, convex_hull, degeneracy_filters, hull_union_coverage, max_pairwise_rotation,
    quadrant_coverage, quadrant_of, DegeneracyConfig, DegeneracyFlag, QUADRANT_NAMES,
};
pub use refine::{iterative_refine_set, RefinementConfig, RefinementOutcome, Swap};
pub use score::{
    compare_candidates, score_candidates, score_pose_set, score_value, select_from_scored,
    select_optimal, ScoreReport, ScoringConfig,
};
pub use set::{
    draw_candidate_sets, find_duplicate, PoseSet, DUPLICATE_ROTATION_TOLERANCE,
    DUPLICATE_TRANSLATION_TOLERANCE,
};
pub use space::{sample_space, Interval, PoseCoordinates, PoseSearchSpace};

use thiserror::Error;

use crate::geometry::GeometryError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoseSpaceError {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("invalid pose set: {0}")]
    InvalidPoseSet(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(
        "search space too restrictive: found {found} of {requested} poses in {attempts} attempts"
    )]
    SpaceTooRestrictive {
        requested: usize,
        found: usize,
        attempts: usize,
    },
    #[error("all {candidates} candidate sets are degenerate")]
    AllDegenerate { candidates: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
