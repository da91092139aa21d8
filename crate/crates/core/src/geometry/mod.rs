//! Camera model, distortion operator and rigid-pose arithmetic.
//!
//! A board point `M` is mapped to a pixel by transforming it into the camera
//! frame with the board pose, dividing by depth, distorting the normalized
//! coordinate and finally applying the zero-skew `K` matrix.

mod board;
mod camera;
mod pose;

pub use board::BoardSpec;
pub use camera::{
    distort, distort_jacobian, CameraIntrinsics, DistortionJacobian, ImageSpec, INTRINSIC_DIM,
};
pub use pose::{exp_so3, log_so3, rotate_point_jacobian, skew, Pose};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("rotation block is not orthonormal (deviation {deviation:e})")]
    NonOrthonormal { deviation: f64 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid board: {0}")]
    InvalidBoard(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
}

/// Projects a camera-frame point to pixels.
pub fn project_camera_point(
    p: &Vector3<f64>,
    intrinsics: &CameraIntrinsics,
) -> Result<Vector2<f64>, GeometryError> {
    if p.z <= 0.0 {
        return Err(GeometryError::BehindCamera { z: p.z });
    }
    let normalized = Vector2::new(p.x / p.z, p.y / p.z);
    Ok(intrinsics.to_pixel(&distort(&normalized, intrinsics)))
}

/// Projects a board-frame point through `pose` and `intrinsics`.
pub fn project_point(
    world: &Vector3<f64>,
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
) -> Result<Vector2<f64>, GeometryError> {
    project_camera_point(&pose.transform_point(world), intrinsics)
}

/// One projected board corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedCorner {
    pub index: usize,
    /// `None` when the corner is behind the camera.
    pub pixel: Option<Vector2<f64>>,
    pub visible: bool,
}

/// Projects every model point of `board`, in row-major order.
///
/// A corner is visible iff it is in front of the camera and lands inside
/// the image.
pub fn project_board(
    board: &BoardSpec,
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
    image: &ImageSpec,
) -> Vec<ProjectedCorner> {
    let r = pose.rotation_matrix();
    (0..board.corner_count())
        .map(|index| {
            let cam = r * board.point(index) + pose.translation();
            match project_camera_point(&cam, intrinsics) {
                Ok(px) => ProjectedCorner {
                    index,
                    pixel: Some(px),
                    visible: image.contains(&px),
                },
                Err(_) => ProjectedCorner {
                    index,
                    pixel: None,
                    visible: false,
                },
            }
        })
        .collect()
}

pub fn visible_count(corners: &[ProjectedCorner]) -> usize {
    corners.iter().filter(|c| c.visible).count()
}
