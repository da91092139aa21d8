use nalgebra::{Rotation3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PoseSpaceError;
use crate::geometry::{project_board, visible_count, BoardSpec, CameraIntrinsics, ImageSpec, Pose};
use crate::seed;

/// Closed interval `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn symmetric(half_width: f64) -> Self {
        Self::new(-half_width, half_width)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn is_collapsed(&self) -> bool {
        self.min == self.max
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.is_collapsed() {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.min, i.max]
    }
}

/// Region of admissible board poses for an application.
///
/// A pose is parameterized by the camera-frame position of the board center
/// (`x`, `y` from `lateral_range`, `z` from `distance_range`) and three
/// rotation angles about the camera axes applied around that center
/// (`angle_range[0]` about X, `[1]` about Y, `[2]` about Z; composed as
/// `Rz * Ry * Rx`). The zero-angle pose is fronto-parallel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSearchSpace {
    /// Board-center depth along the optical axis, meters.
    pub distance_range: Interval,
    /// Board-center X and Y offset, meters.
    pub lateral_range: Interval,
    /// Rotation limits per camera axis, radians.
    pub angle_range: [Interval; 3],
    pub image: ImageSpec,
    pub board: BoardSpec,
    /// Require every board corner to be visible; otherwise four suffice.
    #[serde(default = "default_true")]
    pub full_board_visible: bool,
}

fn default_true() -> bool {
    true
}

/// Angles drawn for one sampled pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseCoordinates {
    pub center: Vector3<f64>,
    pub angles: Vector3<f64>,
}

impl PoseSearchSpace {
    /// Driver-monitoring camera: boards held between 0.3 and 2 m.
    pub fn dms(image: ImageSpec, board: BoardSpec) -> Self {
        Self {
            distance_range: Interval::new(0.3, 2.0),
            lateral_range: Interval::symmetric(0.4),
            angle_range: [
                Interval::symmetric(0.6),
                Interval::symmetric(0.6),
                Interval::symmetric(0.3),
            ],
            image,
            board,
            full_board_visible: true,
        }
    }

    /// Handheld front camera: boards between 0.1 and 0.8 m.
    pub fn smartphone(image: ImageSpec, board: BoardSpec) -> Self {
        Self {
            distance_range: Interval::new(0.1, 0.8),
            lateral_range: Interval::symmetric(0.2),
            angle_range: [
                Interval::symmetric(0.6),
                Interval::symmetric(0.6),
                Interval::symmetric(0.3),
            ],
            image,
            board,
            full_board_visible: true,
        }
    }

    /// Desk-side working volume sized for the default 9x6 board.
    pub fn desk(image: ImageSpec, board: BoardSpec) -> Self {
        Self {
            distance_range: Interval::new(0.3, 0.9),
            lateral_range: Interval::symmetric(0.25),
            angle_range: [
                Interval::symmetric(0.7),
                Interval::symmetric(0.7),
                Interval::symmetric(0.4),
            ],
            image,
            board,
            full_board_visible: true,
        }
    }

    /// Rejects inverted ranges. Collapsed ranges (`min == max`) are allowed
    /// and sample a constant.
    pub fn validate(&self) -> Result<(), PoseSpaceError> {
        self.image.validate()?;
        self.board.validate()?;
        let named = [
            ("distance_range", self.distance_range),
            ("lateral_range", self.lateral_range),
            ("angle_range[0]", self.angle_range[0]),
            ("angle_range[1]", self.angle_range[1]),
            ("angle_range[2]", self.angle_range[2]),
        ];
        for (name, r) in named {
            if !(r.min.is_finite() && r.max.is_finite()) || r.min > r.max {
                return Err(PoseSpaceError::InvalidSpace(format!(
                    "{name} must satisfy min <= max, got [{}, {}]",
                    r.min, r.max
                )));
            }
        }
        if self.distance_range.min <= 0.0 {
            return Err(PoseSpaceError::InvalidSpace(
                "distance_range must be in front of the camera".into(),
            ));
        }
        Ok(())
    }

    /// Short content hash identifying this space.
    pub fn id(&self) -> String {
        let json = serde_json::to_vec(self).expect("space serializes");
        let digest = Sha256::digest(&json);
        hex::encode(&digest[..8])
    }

    /// Builds the pose for given center/angle coordinates.
    pub fn pose_at(&self, coords: &PoseCoordinates) -> Pose {
        let a = coords.angles;
        let r = Rotation3::from_axis_angle(&Vector3::z_axis(), a.z)
            * Rotation3::from_axis_angle(&Vector3::y_axis(), a.y)
            * Rotation3::from_axis_angle(&Vector3::x_axis(), a.x);
        let t = coords.center - r * self.board.center();
        Pose::new(r.scaled_axis(), t)
    }

    pub fn sample_coordinates<R: Rng>(&self, rng: &mut R) -> PoseCoordinates {
        let center = Vector3::new(
            self.lateral_range.sample(rng),
            self.lateral_range.sample(rng),
            self.distance_range.sample(rng),
        );
        let angles = Vector3::new(
            self.angle_range[0].sample(rng),
            self.angle_range[1].sample(rng),
            self.angle_range[2].sample(rng),
        );
        PoseCoordinates { center, angles }
    }

    /// Whether `pose` keeps enough of the board visible under `camera`.
    pub fn is_admissible(&self, pose: &Pose, camera: &CameraIntrinsics) -> bool {
        let corners = project_board(&self.board, pose, camera, &self.image);
        let visible = visible_count(&corners);
        if self.full_board_visible {
            visible == self.board.corner_count()
        } else {
            visible >= 4
        }
    }
}

/// Draws `m` admissible poses, independently uniform per coordinate.
///
/// Gives up with [`PoseSpaceError::SpaceTooRestrictive`] after `100 * m`
/// attempts.
pub fn sample_space(
    space: &PoseSearchSpace,
    reference: &CameraIntrinsics,
    m: usize,
    seed: u64,
) -> Result<Vec<Pose>, PoseSpaceError> {
    space.validate()?;
    if m == 0 {
        return Err(PoseSpaceError::InvalidArgument(
            "m must be at least 1".into(),
        ));
    }
    let mut rng = seed::rng(seed);
    let mut poses = Vec::with_capacity(m);
    let budget = 100 * m;
    for _ in 0..budget {
        let pose = space.pose_at(&space.sample_coordinates(&mut rng));
        if space.is_admissible(&pose, reference) {
            poses.push(pose);
            if poses.len() == m {
                return Ok(poses);
            }
        }
    }
    Err(PoseSpaceError::SpaceTooRestrictive {
        requested: m,
        found: poses.len(),
        attempts: budget,
    })
}
