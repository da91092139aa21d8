use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SyntheticError;
use crate::calibration::{Corner, ObservationSource, ViewObservation};
use crate::geometry::{project_board, BoardSpec, CameraIntrinsics, ImageSpec, Pose};
use crate::seed;

/// Camera with known ground-truth intrinsics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualCamera {
    pub truth: CameraIntrinsics,
    pub image: ImageSpec,
}

impl VirtualCamera {
    pub fn new(truth: CameraIntrinsics, image: ImageSpec) -> Result<Self, SyntheticError> {
        truth.validate_for(&image)?;
        Ok(Self { truth, image })
    }

    /// 1280x800 sensor with an 80x60 degree field of view and moderate barrel
    /// distortion.
    pub fn lens1() -> Self {
        let image = ImageSpec::new(1280, 800);
        let truth = CameraIntrinsics::from_fov(image, 80.0, 60.0)
            .with_distortion(-0.28, 0.07, 0.0, 0.0005, -0.0003);
        Self { truth, image }
    }

    /// 1920x1208 sensor with a 120x100 degree field of view.
    pub fn lens2() -> Self {
        let image = ImageSpec::new(1920, 1208);
        let truth = CameraIntrinsics::from_fov(image, 120.0, 100.0)
            .with_distortion(-0.2, 0.03, 0.0, 0.0, 0.0);
        Self { truth, image }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    Gaussian,
}

/// Additive i.i.d. corner noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// Per-coordinate standard deviation, pixels.
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            sigma: 0.0,
            seed: 0,
        }
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            sigma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(SyntheticError::InvalidNoise(format!(
                "sigma must be non-negative, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Same model on an independent stream.
    pub fn reseeded(&self, stream: u64) -> Self {
        Self {
            seed: seed::derive(self.seed, stream),
            ..*self
        }
    }

    fn is_active(&self) -> bool {
        self.kind == NoiseKind::Gaussian && self.sigma > 0.0
    }
}

/// Visible corners of `board` under `pose`, perturbed by `noise`.
pub fn detect_corners(
    camera: &VirtualCamera,
    pose: &Pose,
    board: &BoardSpec,
    noise: &NoiseModel,
) -> Vec<Corner> {
    let mut corners: Vec<Corner> = project_board(board, pose, &camera.truth, &camera.image)
        .into_iter()
        .filter(|c| c.visible)
        .map(|c| Corner {
            index: c.index,
            pixel: c.pixel.expect("visible corners have pixels"),
        })
        .collect();
    if noise.is_active() {
        let normal = Normal::new(0.0, noise.sigma).expect("validated sigma");
        let mut rng = seed::rng(noise.seed);
        for c in &mut corners {
            c.pixel.x += normal.sample(&mut rng);
            c.pixel.y += normal.sample(&mut rng);
        }
    }
    corners
}

/// One observation per pose. View `i` draws its noise from stream `i` of
/// `noise.seed`, so a view's noise does not depend on the other poses.
pub fn render_observations(
    camera: &VirtualCamera,
    poses: &[Pose],
    board: &BoardSpec,
    noise: &NoiseModel,
) -> Result<Vec<ViewObservation>, SyntheticError> {
    noise.validate()?;
    board.validate()?;
    poses
        .iter()
        .enumerate()
        .map(|(i, pose)| {
            let corners = detect_corners(camera, pose, board, &noise.reseeded(i as u64));
            if corners.len() < 4 {
                return Err(SyntheticError::InsufficientVisibility {
                    pose_index: i,
                    visible: corners.len(),
                });
            }
            Ok(ViewObservation::new(
                *board,
                corners,
                ObservationSource::Synthetic,
            ))
        })
        .collect()
}
