#![allow(dead_code)]

use nalgebra::Vector3;
use poseguide::calibration::{calibrate, CalibrationResult, SolverConfig, ViewObservation};
use poseguide::geometry::{BoardSpec, Pose};
use poseguide::pose_space::{sample_space, PoseSearchSpace, PoseSet};
use poseguide::session::{begin_session, CaptureMode, SessionConfig};
use poseguide::synthetic::{
    drive_session, render_observations, NoiseModel, OperatorRun, SimulatedOperator, VirtualCamera,
};

pub fn lens1() -> VirtualCamera {
    VirtualCamera::lens1()
}

pub fn dms(camera: &VirtualCamera) -> PoseSearchSpace {
    PoseSearchSpace::dms(camera.image, BoardSpec::default())
}

/// `n` admissible poses from the DMS space.
pub fn sampled_poses(camera: &VirtualCamera, n: usize, seed: u64) -> Vec<Pose> {
    sample_space(&dms(camera), &camera.truth, n, seed).expect("sampling")
}

pub fn views(camera: &VirtualCamera, poses: &[Pose], noise: &NoiseModel) -> Vec<ViewObservation> {
    render_observations(camera, poses, &BoardSpec::default(), noise).expect("rendering")
}

pub fn calibrated(views: &[ViewObservation]) -> CalibrationResult {
    calibrate(views, &SolverConfig::default()).expect("calibration")
}

/// Tilted poses spread over the image; every corner visible under lens1.
pub fn diverse_poses() -> Vec<Pose> {
    let board = BoardSpec::default();
    let c = board.center();
    [
        (0.3, 0.0, 0.0, -0.15, -0.1, 0.7),
        (-0.3, 0.0, 0.0, 0.1, -0.1, 0.7),
        (0.0, 0.35, 0.0, -0.15, 0.08, 0.75),
        (0.0, -0.35, 0.1, 0.1, 0.08, 0.75),
        (0.25, 0.25, -0.1, 0.0, 0.0, 0.9),
        (-0.2, 0.3, 0.05, -0.05, 0.05, 1.1),
    ]
    .iter()
    .map(|&(rx, ry, rz, x, y, z)| {
        let r = Vector3::new(rx, ry, rz);
        let rot = nalgebra::Rotation3::new(r);
        // place the board center at (x, y, z)
        let t = Vector3::new(x, y, z) - rot * c;
        Pose::new(r, t)
    })
    .collect()
}

pub fn session_config(
    camera: &VirtualCamera,
    poses: Vec<Pose>,
    mode: CaptureMode,
) -> SessionConfig {
    let set = PoseSet::new(poses, 0, "fixture").expect("pose set");
    let mut config = SessionConfig::new(set, BoardSpec::default(), camera.image, camera.truth);
    config.capture_mode = mode;
    config
}

/// Fronto-parallel board at the mean target depth.
pub fn start_pose(config: &SessionConfig) -> Pose {
    let c = config.board.center();
    let depth = config
        .pose_set
        .poses
        .iter()
        .map(|p| p.transform_point(&c).z)
        .sum::<f64>()
        / config.pose_set.poses.len() as f64;
    Pose::new(Vector3::zeros(), Vector3::new(0.0, 0.0, depth) - c)
}

/// Simulated operator run: step 0.3, 1 px jitter, detector noise `sigma`.
pub fn rehearsal(
    camera: &VirtualCamera,
    config: SessionConfig,
    sigma: f64,
    seed: u64,
) -> OperatorRun {
    let start = start_pose(&config);
    let state = begin_session(config).expect("session");
    let mut operator = SimulatedOperator::new(0.3, 1.0, seed).expect("operator");
    let noise = NoiseModel::gaussian(sigma, seed + 1);
    drive_session(state, &mut operator, camera, &noise, start, 20_000).expect("run")
}

/// A board whose center projects into the top-left quadrant.
pub fn top_left_pose() -> Pose {
    Pose::new(Vector3::new(0.1, 0.2, 0.0), Vector3::new(-0.45, -0.3, 1.0))
}

pub fn duplicates() -> PoseSet {
    PoseSet::candidate(vec![top_left_pose(); 20], 1, "fixture")
}

/// Fronto-parallel boards centered on the optical axis at increasing depth.
pub fn parallel_at_varied_distances() -> PoseSet {
    let board = BoardSpec::default();
    let c = board.center();
    let poses = (0..20)
        .map(|i| {
            Pose::new(
                Vector3::zeros(),
                Vector3::new(-c.x, -c.y, 0.3 + 0.02 * i as f64),
            )
        })
        .collect();
    PoseSet::candidate(poses, 2, "fixture")
}
