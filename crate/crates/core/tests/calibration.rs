mod common;

use common::*;
use poseguide::calibration::{
    closed_form_intrinsics, estimate_homography, mre, param_error, refine, residual_jacobian,
    residuals, CalibrationError, SolverConfig,
};
use poseguide::geometry::{CameraIntrinsics, ImageSpec, INTRINSIC_DIM};
use poseguide::synthetic::{NoiseModel, VirtualCamera};
use proptest::prelude::*;

#[test]
fn closed_form_recovers_focal_lengths_from_five_views() {
    let image = ImageSpec::new(1280, 800);
    let camera = VirtualCamera::new(CameraIntrinsics::from_fov(image, 80.0, 60.0), image).unwrap();
    let poses = diverse_poses();
    let obs = views(&camera, &poses[..5], &NoiseModel::none());
    let hs: Vec<_> = obs
        .iter()
        .map(|v| estimate_homography(v).unwrap().matrix)
        .collect();
    let est = closed_form_intrinsics(&hs).unwrap();
    for (e, t) in [(est.fx, camera.truth.fx), (est.fy, camera.truth.fy)] {
        assert!((e - t).abs() / t < 1e-6, "{e} vs {t}");
    }
    assert_eq!([est.k1, est.k2, est.k3, est.p1, est.p2], [0.0; 5]);
}

#[test]
fn noiseless_twenty_views_recover_truth() {
    let camera = lens1();
    for seed in [3, 17] {
        let obs = views(
            &camera,
            &sampled_poses(&camera, 20, seed),
            &NoiseModel::none(),
        );
        let result = calibrated(&obs);
        let err = param_error(&result.intrinsics, &camera.truth);
        assert!(err < 1e-4, "seed {seed}: {err}");
        assert!(result.converged);
    }
}

#[test]
fn refinement_at_the_optimum_stops_immediately() {
    let camera = lens1();
    let poses = sampled_poses(&camera, 20, 5);
    let obs = views(&camera, &poses, &NoiseModel::none());
    let result = refine(&obs, &camera.truth, &poses, &SolverConfig::default()).unwrap();
    assert!(result.iterations <= 2, "{} iterations", result.iterations);
    assert!(result.diagnostics.final_cost <= result.diagnostics.initial_cost);
    assert!(result.diagnostics.initial_cost < 1e-18);
    assert_eq!(result.intrinsics, camera.truth);
}

#[test]
fn subpixel_noise_gives_subpixel_mre() {
    let camera = lens1();
    for seed in 0..3 {
        let obs = views(
            &camera,
            &sampled_poses(&camera, 20, seed),
            &NoiseModel::gaussian(0.1, seed),
        );
        let result = calibrated(&obs);
        assert!(
            (0.05..=0.2).contains(&result.mre),
            "seed {seed}: mre {}",
            result.mre
        );
    }
}

#[test]
fn reported_mre_matches_returned_parameters() {
    let camera = lens1();
    let obs = views(
        &camera,
        &sampled_poses(&camera, 12, 9),
        &NoiseModel::gaussian(0.3, 9),
    );
    let r = calibrated(&obs);
    let recomputed = mre(&obs, &r.intrinsics, &r.per_view_poses).unwrap();
    assert!((recomputed - r.mre).abs() < 1e-12);
}

#[test]
fn accepted_steps_never_increase_cost() {
    let camera = lens1();
    let poses = sampled_poses(&camera, 10, 21);
    let obs = views(&camera, &poses, &NoiseModel::gaussian(0.2, 21));
    let mut start = camera.truth;
    start.fx *= 1.05;
    start.cy += 8.0;
    start.k1 = 0.0;
    let mut last = f64::INFINITY;
    for max_iterations in 1..=12 {
        let config = SolverConfig {
            max_iterations,
            ..SolverConfig::default()
        };
        let r = refine(&obs, &start, &poses, &config).unwrap();
        assert!(r.diagnostics.final_cost <= r.diagnostics.initial_cost);
        assert!(r.diagnostics.final_cost <= last);
        last = r.diagnostics.final_cost;
    }
}

#[test]
fn iteration_cap_reports_non_convergence() {
    let camera = lens1();
    let poses = sampled_poses(&camera, 10, 2);
    let obs = views(&camera, &poses, &NoiseModel::gaussian(0.1, 2));
    let mut start = camera.truth;
    start.fx *= 1.2;
    start.k1 = 0.0;
    let config = SolverConfig {
        max_iterations: 1,
        ..SolverConfig::default()
    };
    let r = refine(&obs, &start, &poses, &config).unwrap();
    assert!(!r.converged);
    assert!(matches!(
        r.into_converged(),
        Err(CalibrationError::DidNotConverge { .. })
    ));
}

#[test]
fn all_parallel_views_are_degenerate_for_the_closed_form() {
    let camera = lens1();
    let poses: Vec<_> = diverse_poses()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            poseguide::geometry::Pose::new(
                nalgebra::Vector3::zeros(),
                p.translation() + nalgebra::Vector3::new(0.0, 0.0, 0.1 * i as f64),
            )
        })
        .collect();
    let obs = views(&camera, &poses, &NoiseModel::none());
    let hs: Vec<_> = obs
        .iter()
        .map(|v| estimate_homography(v).unwrap().matrix)
        .collect();
    assert!(matches!(
        closed_form_intrinsics(&hs),
        Err(CalibrationError::DegenerateConfiguration(_))
    ));
}

#[test]
fn residual_count_matches_jacobian_rows() {
    let camera = lens1();
    let poses = sampled_poses(&camera, 4, 8);
    let obs = views(&camera, &poses, &NoiseModel::none());
    let r = residuals(&obs, &camera.truth, &poses).unwrap();
    let j = residual_jacobian(&obs, &camera.truth, &poses).unwrap();
    assert_eq!(r.len(), j.num_residuals());
    assert_eq!(j.num_params(), INTRINSIC_DIM + 6 * poses.len());
    assert!(r.iter().all(|v| v.abs() < 1e-9));
}

fn intrinsics_strategy() -> impl Strategy<Value = CameraIntrinsics> {
    prop::array::uniform9(-1000.0f64..1000.0).prop_map(|v| CameraIntrinsics::from_vector(&v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn param_error_is_a_metric(a in intrinsics_strategy(), b in intrinsics_strategy(), c in intrinsics_strategy()) {
        prop_assert_eq!(param_error(&a, &a), 0.0);
        prop_assert_eq!(param_error(&a, &b), param_error(&b, &a));
        prop_assert!(param_error(&a, &b) >= 0.0);
        let slack = 1e-9 * (1.0 + param_error(&a, &c));
        prop_assert!(param_error(&a, &c) <= param_error(&a, &b) + param_error(&b, &c) + slack);
    }

    #[test]
    fn mre_ignores_view_and_corner_order(seed in 0u64..1000, rotate in 1usize..5) {
        let camera = lens1();
        let poses = sampled_poses(&camera, 5, seed);
        let obs = views(&camera, &poses, &NoiseModel::gaussian(0.5, seed));
        let base = mre(&obs, &camera.truth, &poses).unwrap();

        let mut obs2 = obs.clone();
        let mut poses2 = poses.clone();
        obs2.rotate_left(rotate);
        poses2.rotate_left(rotate);
        for v in &mut obs2 {
            v.corners.reverse();
        }
        let shuffled = mre(&obs2, &camera.truth, &poses2).unwrap();
        prop_assert!((base - shuffled).abs() <= 1e-12 * base.max(1.0));
    }
}
