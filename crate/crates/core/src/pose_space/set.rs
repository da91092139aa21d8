use serde::{Deserialize, Serialize};

use super::PoseSpaceError;
use crate::geometry::Pose;
use crate::seed;

pub const DUPLICATE_ROTATION_TOLERANCE: f64 = 1e-6;
pub const DUPLICATE_TRANSLATION_TOLERANCE: f64 = 1e-6;

/// A candidate collection of calibration views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSet {
    pub poses: Vec<Pose>,
    /// Seed this set was drawn with.
    pub seed: u64,
    /// [`PoseSearchSpace::id`](super::PoseSearchSpace::id) of the generating space.
    pub space_id: String,
}

impl PoseSet {
    /// Validated constructor: at least three poses and no near-duplicates.
    pub fn new(
        poses: Vec<Pose>,
        seed: u64,
        space_id: impl Into<String>,
    ) -> Result<Self, PoseSpaceError> {
        let set = Self::candidate(poses, seed, space_id);
        set.validate()?;
        Ok(set)
    }

    /// Unvalidated constructor for sets that are about to be screened by the
    /// degeneracy filters.
    pub fn candidate(poses: Vec<Pose>, seed: u64, space_id: impl Into<String>) -> Self {
        Self {
            poses,
            seed,
            space_id: space_id.into(),
        }
    }

    pub fn validate(&self) -> Result<(), PoseSpaceError> {
        if self.poses.len() < 3 {
            return Err(PoseSpaceError::InvalidPoseSet(format!(
                "a pose set needs at least 3 poses, got {}",
                self.poses.len()
            )));
        }
        if let Some((i, j)) = find_duplicate(
            &self.poses,
            DUPLICATE_ROTATION_TOLERANCE,
            DUPLICATE_TRANSLATION_TOLERANCE,
        ) {
            return Err(PoseSpaceError::InvalidPoseSet(format!(
                "poses {i} and {j} are identical within tolerance"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// First pair `(i, j)` closer than both tolerances at once.
pub fn find_duplicate(poses: &[Pose], rot_tol: f64, trans_tol: f64) -> Option<(usize, usize)> {
    for i in 0..poses.len() {
        for j in (i + 1)..poses.len() {
            if poses[i].translation_distance(&poses[j]) < trans_tol
                && poses[i].rotation_distance(&poses[j]) < rot_tol
            {
                return Some((i, j));
            }
        }
    }
    None
}

/// Draws `k_sets` subsets of `n` distinct pool members each.
///
/// Set `j` uses seed `derive(seed, j)`, which is also recorded as its
/// [`PoseSet::seed`]. Members keep their pool order.
pub fn draw_candidate_sets(
    pool: &[Pose],
    n: usize,
    k_sets: usize,
    seed: u64,
    space_id: &str,
) -> Result<Vec<PoseSet>, PoseSpaceError> {
    if n == 0 || n > pool.len() {
        return Err(PoseSpaceError::InvalidArgument(format!(
            "set size {n} must be in 1..={}",
            pool.len()
        )));
    }
    Ok((0..k_sets)
        .map(|j| {
            let set_seed = seed::derive(seed, j as u64);
            let mut rng = seed::rng(set_seed);
            let mut idx = rand::seq::index::sample(&mut rng, pool.len(), n).into_vec();
            idx.sort_unstable();
            PoseSet::candidate(
                idx.into_iter().map(|i| pool[i]).collect(),
                set_seed,
                space_id,
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn pool(n: usize) -> Vec<Pose> {
        (0..n)
            .map(|i| {
                Pose::new(
                    Vector3::new(0.001 * i as f64, 0.0, 0.0),
                    Vector3::new(0.0, 0.0, 0.5 + 0.001 * i as f64),
                )
            })
            .collect()
    }

    #[test]
    fn draws_requested_shape() {
        let sets = draw_candidate_sets(&pool(200), 20, 50, 1, "s").unwrap();
        assert_eq!(sets.len(), 50);
        for s in &sets {
            assert_eq!(s.len(), 20);
            assert!(s.validate().is_ok());
        }
    }

    #[test]
    fn full_draw_equals_pool() {
        let p = pool(20);
        for s in draw_candidate_sets(&p, 20, 5, 3, "s").unwrap() {
            assert_eq!(s.poses, p);
        }
    }

    #[test]
    fn different_seeds_give_different_sets() {
        let p = pool(200);
        let a = draw_candidate_sets(&p, 20, 50, 1, "s").unwrap();
        let b = draw_candidate_sets(&p, 20, 50, 2, "s").unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_ne!(x.poses, y.poses);
        }
        let c = draw_candidate_sets(&p, 20, 50, 1, "s").unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn oversized_draw_is_rejected() {
        assert!(draw_candidate_sets(&pool(5), 6, 1, 0, "s").is_err());
    }

    #[test]
    fn duplicates_and_small_sets_are_invalid() {
        let p = pool(3);
        assert!(PoseSet::new(p.clone(), 0, "s").is_ok());
        assert!(PoseSet::new(p[..2].to_vec(), 0, "s").is_err());
        assert!(PoseSet::new(vec![p[0], p[1], p[0]], 0, "s").is_err());
    }
}
