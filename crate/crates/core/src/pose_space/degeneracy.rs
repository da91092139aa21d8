use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::set::find_duplicate;
use super::{PoseSearchSpace, PoseSet};
use crate::geometry::{project_board, CameraIntrinsics, ImageSpec, Pose};

/// Reasons a candidate set is excluded from selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegeneracyFlag {
    /// Two poses coincide within the duplication tolerances.
    NearDuplicate,
    /// Every pair of boards is within the parallelism threshold.
    AllParallel,
    /// Some image quadrant is left mostly uncovered by projected boards.
    CoverageGap,
    /// A pose does not keep enough corners visible to be rendered.
    InsufficientVisibility,
    /// Calibration of the rendered views failed (singular system).
    DegenerateCalibration,
    /// Calibration ran out of iterations.
    DidNotConverge,
}

impl DegeneracyFlag {
    pub fn name(&self) -> &'static str {
        match self {
            Self::NearDuplicate => "near_duplicate",
            Self::AllParallel => "all_parallel",
            Self::CoverageGap => "coverage_gap",
            Self::InsufficientVisibility => "insufficient_visibility",
            Self::DegenerateCalibration => "degenerate_calibration",
            Self::DidNotConverge => "did_not_converge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DegeneracyConfig {
    pub duplicate_rotation_tolerance: f64,
    pub duplicate_translation_tolerance: f64,
    /// Boards are "all parallel" when the largest pairwise geodesic rotation
    /// distance is below this, radians.
    pub parallel_threshold: f64,
    /// Minimum covered fraction of every image quadrant.
    pub min_quadrant_coverage: f64,
    /// Raster samples per quadrant side for the coverage estimate.
    pub coverage_grid: usize,
}

impl Default for DegeneracyConfig {
    fn default() -> Self {
        Self {
            duplicate_rotation_tolerance: super::set::DUPLICATE_ROTATION_TOLERANCE,
            duplicate_translation_tolerance: super::set::DUPLICATE_TRANSLATION_TOLERANCE,
            parallel_threshold: 0.1,
            min_quadrant_coverage: 0.05,
            coverage_grid: 40,
        }
    }
}

/// Applies the geometric filters and returns every one that triggers.
pub fn degeneracy_filters(
    set: &PoseSet,
    space: &PoseSearchSpace,
    reference: &CameraIntrinsics,
    config: &DegeneracyConfig,
) -> Vec<DegeneracyFlag> {
    let mut flags = Vec::new();
    if find_duplicate(
        &set.poses,
        config.duplicate_rotation_tolerance,
        config.duplicate_translation_tolerance,
    )
    .is_some()
    {
        flags.push(DegeneracyFlag::NearDuplicate);
    }
    if max_pairwise_rotation(&set.poses) < config.parallel_threshold {
        flags.push(DegeneracyFlag::AllParallel);
    }
    let coverage = quadrant_coverage(&set.poses, space, reference, config.coverage_grid);
    if coverage.iter().any(|&c| c < config.min_quadrant_coverage) {
        flags.push(DegeneracyFlag::CoverageGap);
    }
    flags
}

pub fn max_pairwise_rotation(poses: &[Pose]) -> f64 {
    let rotations: Vec<_> = poses.iter().map(|p| p.rotation_matrix()).collect();
    let mut max = 0.0f64;
    for i in 0..rotations.len() {
        for j in (i + 1)..rotations.len() {
            let rel = rotations[i].transpose() * rotations[j];
            // geodesic angle from the trace
            let cos = ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
            max = max.max(cos.acos());
        }
    }
    max
}

/// Image quadrants in the order top-left, top-right, bottom-left, bottom-right.
pub const QUADRANT_NAMES: [&str; 4] = ["top_left", "top_right", "bottom_left", "bottom_right"];

/// Quadrant index of a pixel.
pub fn quadrant_of(image: &ImageSpec, p: &Vector2<f64>) -> usize {
    let c = image.center();
    let right = (p.x >= c.x) as usize;
    let bottom = (p.y >= c.y) as usize;
    2 * bottom + right
}

/// Convex hull of the visible projected corners of each pose.
pub fn board_hulls(
    poses: &[Pose],
    space: &PoseSearchSpace,
    reference: &CameraIntrinsics,
) -> Vec<Vec<Vector2<f64>>> {
    poses
        .iter()
        .map(|pose| {
            let pts: Vec<Vector2<f64>> = project_board(&space.board, pose, reference, &space.image)
                .into_iter()
                .filter_map(|c| c.pixel)
                .collect();
            convex_hull(&pts)
        })
        .filter(|h| h.len() >= 3)
        .collect()
}

/// Fraction of each quadrant covered by the union of the board hulls,
/// estimated on a `grid x grid` raster per quadrant.
pub fn quadrant_coverage(
    poses: &[Pose],
    space: &PoseSearchSpace,
    reference: &CameraIntrinsics,
    grid: usize,
) -> [f64; 4] {
    let hulls = board_hulls(poses, space, reference);
    hull_union_coverage(&hulls, &space.image, grid)
}

pub fn hull_union_coverage(
    hulls: &[Vec<Vector2<f64>>],
    image: &ImageSpec,
    grid: usize,
) -> [f64; 4] {
    let grid = grid.max(1);
    let (gw, gh) = (2 * grid, 2 * grid);
    let (w, h) = (image.width as f64, image.height as f64);
    let (dx, dy) = (w / gw as f64, h / gh as f64);
    let mut covered = vec![false; gw * gh];
    for hull in hulls {
        let (mut lo, mut hi) = (hull[0], hull[0]);
        for p in hull {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        // cell centers (i + 0.5) * dx inside [lo.x, hi.x]
        let i0 = (((lo.x / dx) - 0.5).ceil().max(0.0)) as usize;
        let i1 = (((hi.x / dx) - 0.5).floor().min(gw as f64 - 1.0)) as isize;
        let j0 = (((lo.y / dy) - 0.5).ceil().max(0.0)) as usize;
        let j1 = (((hi.y / dy) - 0.5).floor().min(gh as f64 - 1.0)) as isize;
        if i1 < 0 || j1 < 0 {
            continue;
        }
        for j in j0..=(j1 as usize) {
            for i in i0..=(i1 as usize) {
                let cell = &mut covered[j * gw + i];
                if !*cell {
                    let p = Vector2::new((i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy);
                    *cell = inside_convex(hull, &p);
                }
            }
        }
    }
    let mut counts = [0usize; 4];
    for j in 0..gh {
        for i in 0..gw {
            if covered[j * gw + i] {
                let q = 2 * (j >= grid) as usize + (i >= grid) as usize;
                counts[q] += 1;
            }
        }
    }
    let per_quadrant = (grid * grid) as f64;
    counts.map(|c| c as f64 / per_quadrant)
}

/// Andrew's monotone chain; counter-clockwise in a y-up frame, collinear
/// points dropped.
pub fn convex_hull(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut pts: Vec<Vector2<f64>> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| {
        (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
    };
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(2 * pts.len());
    for p in &pts {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    let lower = hull.len() + 1;
    for p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();
    hull
}

fn inside_convex(hull: &[Vector2<f64>], p: &Vector2<f64>) -> bool {
    let n = hull.len();
    for k in 0..n {
        let a = hull[k];
        let b = hull[(k + 1) % n];
        if (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) < 0.0 {
            return false;
        }
    }
    true
}
