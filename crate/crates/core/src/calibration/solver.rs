use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::jacobian::{corner_term, POSE_DIM};
use super::{mre, CalibrationError, ViewObservation};
use crate::geometry::{CameraIntrinsics, Pose, INTRINSIC_DIM};

type Mat9 = SMatrix<f64, INTRINSIC_DIM, INTRINSIC_DIM>;
type Mat9x6 = SMatrix<f64, INTRINSIC_DIM, POSE_DIM>;
type Mat6 = SMatrix<f64, POSE_DIM, POSE_DIM>;
type Vec9 = SVector<f64, INTRINSIC_DIM>;
type Vec6 = SVector<f64, POSE_DIM>;

const MAX_DAMPING: f64 = 1e16;
const MIN_DAMPING: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub cost_rel_tolerance: f64,
    /// Stop once the max-norm of the gradient falls below this value.
    pub gradient_tolerance: f64,
    /// Initial Marquardt damping, relative to the normal-matrix diagonal.
    pub damping_init: f64,
    /// Keep `k3` at its initial value.
    pub fix_k3: bool,
    /// Keep `p1` and `p2` at their initial values.
    pub fix_tangential: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            cost_rel_tolerance: 1e-10,
            gradient_tolerance: 1e-8,
            damping_init: 1e-3,
            fix_k3: true,
            fix_tangential: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.max_iterations == 0 {
            return Err(CalibrationError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        for (name, v) in [
            ("cost_rel_tolerance", self.cost_rel_tolerance),
            ("gradient_tolerance", self.gradient_tolerance),
            ("damping_init", self.damping_init),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CalibrationError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Which of the nine intrinsics are optimized.
    pub fn active_mask(&self) -> [bool; INTRINSIC_DIM] {
        let mut mask = [true; INTRINSIC_DIM];
        if self.fix_k3 {
            mask[6] = false;
        }
        if self.fix_tangential {
            mask[7] = false;
            mask[8] = false;
        }
        mask
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Relative cost decrease (actual or predicted) fell below tolerance.
    CostTolerance,
    GradientTolerance,
    /// Damping saturated without finding a decrease: stationary to machine precision.
    NoFurtherProgress,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub intrinsics: CameraIntrinsics,
    pub per_view_poses: Vec<Pose>,
    /// Mean reprojection error, pixels.
    pub mre: f64,
    pub converged: bool,
    pub iterations: usize,
    pub diagnostics: SolverDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    /// Sum of squared residuals before the first step, pixels squared.
    pub initial_cost: f64,
    pub final_cost: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub final_damping: f64,
    /// Relative cost decrease of the last accepted step.
    pub last_relative_decrease: f64,
    pub termination: Termination,
}

impl CalibrationResult {
    /// Turns a non-converged result into [`CalibrationError::DidNotConverge`].
    pub fn into_converged(self) -> Result<Self, CalibrationError> {
        if self.converged {
            Ok(self)
        } else {
            Err(CalibrationError::DidNotConverge {
                iterations: self.iterations,
                mre: self.mre,
            })
        }
    }
}

/// Gauss-Newton normal equations in block form, plus the cost they were
/// linearized at.
struct Normal {
    u: Mat9,
    g_c: Vec9,
    blocks: Vec<ViewBlock>,
    cost: f64,
}

struct ViewBlock {
    v: Mat6,
    w: Mat9x6,
    g_p: Vec6,
}

struct Step {
    intrinsics: Vec9,
    poses: Vec<Vec6>,
    predicted: f64,
}

fn assemble(
    views: &[ViewObservation],
    intrinsics: &CameraIntrinsics,
    poses: &[Pose],
    mask: &[bool; INTRINSIC_DIM],
) -> Result<Normal, CalibrationError> {
    let mut u = Mat9::zeros();
    let mut g_c = Vec9::zeros();
    let mut blocks = Vec::with_capacity(views.len());
    let mut cost = 0.0;
    for (view, pose) in views.iter().zip(poses) {
        let rot = pose.rotation_matrix();
        let mut v = Mat6::zeros();
        let mut w = Mat9x6::zeros();
        let mut g_p = Vec6::zeros();
        for c in &view.corners {
            let mut term = corner_term(
                &view.board.point(c.index),
                &c.pixel,
                intrinsics,
                pose.rotation(),
                &rot,
                pose.translation(),
            )?;
            for (k, active) in mask.iter().enumerate() {
                if !active {
                    term.d_intrinsics.column_mut(k).fill(0.0);
                }
            }
            let jc_t = term.d_intrinsics.transpose();
            let jp_t = term.d_pose.transpose();
            u += jc_t * term.d_intrinsics;
            w += jc_t * term.d_pose;
            v += jp_t * term.d_pose;
            g_c += jc_t * term.residual;
            g_p += jp_t * term.residual;
            cost += term.residual.norm_squared();
        }
        blocks.push(ViewBlock { v, w, g_p });
    }
    for (k, active) in mask.iter().enumerate() {
        if !active {
            u[(k, k)] = 1.0;
        }
    }
    Ok(Normal {
        u,
        g_c,
        blocks,
        cost,
    })
}

impl Normal {
    fn gradient_max(&self) -> f64 {
        self.blocks
            .iter()
            .fold(self.g_c.amax(), |m, b| m.max(b.g_p.amax()))
    }

    /// Solves the damped system by eliminating the pose blocks (Schur
    /// complement on the intrinsics). `None` when a factorization fails.
    fn solve(&self, lambda: f64, mask: &[bool; INTRINSIC_DIM]) -> Option<Step> {
        let mut u_d = self.u;
        for k in 0..INTRINSIC_DIM {
            if mask[k] {
                u_d[(k, k)] *= 1.0 + lambda;
            }
        }
        let mut s = u_d;
        let mut rhs = -self.g_c;
        let mut v_invs = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let mut v_d = b.v;
            for k in 0..POSE_DIM {
                v_d[(k, k)] *= 1.0 + lambda;
            }
            let v_inv = v_d.cholesky()?.inverse();
            let y = b.w * v_inv;
            s -= y * b.w.transpose();
            rhs += y * b.g_p;
            v_invs.push(v_inv);
        }
        let d_c = s.cholesky()?.solve(&rhs);
        if d_c.iter().any(|x| !x.is_finite()) {
            return None;
        }
        let mut poses = Vec::with_capacity(self.blocks.len());
        // Predicted decrease of 0.5*|r|^2 under the damped linear model.
        let mut predicted = 0.0;
        for k in 0..INTRINSIC_DIM {
            if mask[k] {
                predicted += lambda * self.u[(k, k)] * d_c[k] * d_c[k] - d_c[k] * self.g_c[k];
            }
        }
        for (b, v_inv) in self.blocks.iter().zip(&v_invs) {
            let d_p = v_inv * (-b.g_p - b.w.transpose() * d_c);
            for k in 0..POSE_DIM {
                predicted += lambda * b.v[(k, k)] * d_p[k] * d_p[k] - d_p[k] * b.g_p[k];
            }
            poses.push(d_p);
        }
        Some(Step {
            intrinsics: d_c,
            poses,
            predicted: 0.5 * predicted,
        })
    }
}

fn apply_step(
    intrinsics: &CameraIntrinsics,
    poses: &[Pose],
    step: &Step,
    mask: &[bool; INTRINSIC_DIM],
) -> (CameraIntrinsics, Vec<Pose>) {
    let mut c = intrinsics.to_vector();
    for k in 0..INTRINSIC_DIM {
        if mask[k] {
            c[k] += step.intrinsics[k];
        }
    }
    let poses = poses
        .iter()
        .zip(&step.poses)
        .map(|(p, d)| {
            Pose::new(
                p.rotation() + d.fixed_rows::<3>(0),
                p.translation() + d.fixed_rows::<3>(3),
            )
        })
        .collect();
    (CameraIntrinsics::from_vector(&c), poses)
}

fn cost_of(
    views: &[ViewObservation],
    intrinsics: &CameraIntrinsics,
    poses: &[Pose],
) -> Option<f64> {
    if intrinsics.validate().is_err() {
        return None;
    }
    let mut cost = 0.0;
    for (view, pose) in views.iter().zip(poses) {
        let rot = pose.rotation_matrix();
        for c in &view.corners {
            let p = rot * view.board.point(c.index) + pose.translation();
            let px = crate::geometry::project_camera_point(&p, intrinsics).ok()?;
            cost += (px - c.pixel).norm_squared();
        }
    }
    cost.is_finite().then_some(cost)
}

/// Jointly refines intrinsics and per-view poses by damped least squares on
/// the pixel residuals.
///
/// The returned result may have `converged == false` when the iteration
/// budget ran out; it then carries the best iterate found.
pub fn refine(
    views: &[ViewObservation],
    init: &CameraIntrinsics,
    init_poses: &[Pose],
    config: &SolverConfig,
) -> Result<CalibrationResult, CalibrationError> {
    config.validate()?;
    init.validate()?;
    if views.len() != init_poses.len() {
        return Err(CalibrationError::InvalidObservation(format!(
            "{} views but {} initial poses",
            views.len(),
            init_poses.len()
        )));
    }
    for v in views {
        v.validate()?;
    }
    let mask = config.active_mask();
    let mut intrinsics = *init;
    let mut poses = init_poses.to_vec();
    let mut normal = assemble(views, &intrinsics, &poses, &mask)?;
    let initial_cost = normal.cost;
    let mut lambda = config.damping_init;
    let mut iterations = 0;
    let mut accepted = 0;
    let mut rejected = 0;
    let mut last_rel = f64::NAN;
    let mut termination = Termination::MaxIterations;

    while iterations < config.max_iterations {
        if normal.cost == 0.0 || normal.gradient_max() < config.gradient_tolerance {
            termination = Termination::GradientTolerance;
            break;
        }
        iterations += 1;
        let Some(step) = normal.solve(lambda, &mask) else {
            lambda *= 10.0;
            rejected += 1;
            if lambda > MAX_DAMPING {
                return Err(CalibrationError::SingularNormalEquations);
            }
            continue;
        };
        let (cand_intr, cand_poses) = apply_step(&intrinsics, &poses, &step, &mask);
        match cost_of(views, &cand_intr, &cand_poses) {
            Some(new_cost) if new_cost <= normal.cost => {
                let rel = (normal.cost - new_cost) / normal.cost;
                intrinsics = cand_intr;
                poses = cand_poses;
                normal = assemble(views, &intrinsics, &poses, &mask)?;
                lambda = (lambda / 10.0).max(MIN_DAMPING);
                accepted += 1;
                last_rel = rel;
                if rel < config.cost_rel_tolerance {
                    termination = Termination::CostTolerance;
                    break;
                }
            }
            _ => {
                lambda *= 10.0;
                rejected += 1;
                if step.predicted / (0.5 * normal.cost) < config.cost_rel_tolerance {
                    termination = Termination::CostTolerance;
                    break;
                }
                if lambda > MAX_DAMPING {
                    termination = Termination::NoFurtherProgress;
                    break;
                }
            }
        }
    }

    let mre = mre(views, &intrinsics, &poses)?;
    Ok(CalibrationResult {
        intrinsics,
        per_view_poses: poses,
        mre,
        converged: termination != Termination::MaxIterations,
        iterations,
        diagnostics: SolverDiagnostics {
            initial_cost,
            final_cost: normal.cost,
            accepted_steps: accepted,
            rejected_steps: rejected,
            final_damping: lambda,
            last_relative_decrease: last_rel,
            termination,
        },
    })
}
