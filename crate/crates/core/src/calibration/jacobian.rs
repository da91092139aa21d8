//! Analytic residuals and Jacobian of the reprojection problem.
//!
//! Parameters are ordered as the nine intrinsics `[fx, fy, cx, cy, k1, k2,
//! k3, p1, p2]` followed by six entries per view (axis-angle then
//! translation). Residuals are `projected - observed`, two rows per corner,
//! views in input order and corners in observation order.

use nalgebra::{DMatrix, DVector, Matrix2x3, SMatrix, Vector2, Vector3};

use super::{CalibrationError, ViewObservation};
use crate::geometry::{
    distort, distort_jacobian, rotate_point_jacobian, CameraIntrinsics, GeometryError, Pose,
    INTRINSIC_DIM,
};

pub const POSE_DIM: usize = 6;

pub type IntrinsicRows = SMatrix<f64, 2, INTRINSIC_DIM>;
pub type PoseRows = SMatrix<f64, 2, POSE_DIM>;

/// Residual of one corner together with its two Jacobian rows.
#[derive(Debug, Clone, Copy)]
pub struct CornerTerm {
    pub residual: Vector2<f64>,
    pub d_intrinsics: IntrinsicRows,
    pub d_pose: PoseRows,
}

/// Residual and derivatives for the model point `model` observed at `observed`.
pub fn corner_term(
    model: &Vector3<f64>,
    observed: &Vector2<f64>,
    intrinsics: &CameraIntrinsics,
    omega: &Vector3<f64>,
    rotation: &nalgebra::Matrix3<f64>,
    translation: &Vector3<f64>,
) -> Result<CornerTerm, GeometryError> {
    let p = rotation * model + translation;
    if p.z <= 0.0 {
        return Err(GeometryError::BehindCamera { z: p.z });
    }
    let inv_z = 1.0 / p.z;
    let n = Vector2::new(p.x * inv_z, p.y * inv_z);
    let d = distort(&n, intrinsics);
    let jd = distort_jacobian(&n, intrinsics);
    let residual = Vector2::new(
        intrinsics.fx * d.x + intrinsics.cx - observed.x,
        intrinsics.fy * d.y + intrinsics.cy - observed.y,
    );

    let mut d_intrinsics = IntrinsicRows::zeros();
    d_intrinsics[(0, 0)] = d.x;
    d_intrinsics[(1, 1)] = d.y;
    d_intrinsics[(0, 2)] = 1.0;
    d_intrinsics[(1, 3)] = 1.0;
    for k in 0..5 {
        d_intrinsics[(0, 4 + k)] = intrinsics.fx * jd.wrt_coeffs[(0, k)];
        d_intrinsics[(1, 4 + k)] = intrinsics.fy * jd.wrt_coeffs[(1, k)];
    }

    let dn_dp = Matrix2x3::new(inv_z, 0.0, -n.x * inv_z, 0.0, inv_z, -n.y * inv_z);
    let mut dpix_dp = jd.wrt_point * dn_dp;
    dpix_dp.row_mut(0).scale_mut(intrinsics.fx);
    dpix_dp.row_mut(1).scale_mut(intrinsics.fy);
    let d_rot = dpix_dp * rotate_point_jacobian(omega, model);
    let mut d_pose = PoseRows::zeros();
    d_pose.fixed_view_mut::<2, 3>(0, 0).copy_from(&d_rot);
    d_pose.fixed_view_mut::<2, 3>(0, 3).copy_from(&dpix_dp);

    Ok(CornerTerm {
        residual,
        d_intrinsics,
        d_pose,
    })
}

/// Block-sparse Jacobian: per view, the rows touching the shared intrinsics
/// and the rows touching that view's own pose. All other blocks are zero.
#[derive(Debug, Clone)]
pub struct ResidualJacobian {
    pub residuals: DVector<f64>,
    /// One `(2 * corners) x 9` block per view.
    pub intrinsic_blocks: Vec<DMatrix<f64>>,
    /// One `(2 * corners) x 6` block per view.
    pub pose_blocks: Vec<DMatrix<f64>>,
}

impl ResidualJacobian {
    pub fn num_residuals(&self) -> usize {
        self.residuals.len()
    }

    pub fn num_params(&self) -> usize {
        INTRINSIC_DIM + POSE_DIM * self.pose_blocks.len()
    }

    /// Dense `residuals x params` matrix, mostly for inspection and tests.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.num_residuals(), self.num_params());
        let mut row = 0;
        for (v, (ib, pb)) in self
            .intrinsic_blocks
            .iter()
            .zip(&self.pose_blocks)
            .enumerate()
        {
            let r = ib.nrows();
            j.view_mut((row, 0), (r, INTRINSIC_DIM)).copy_from(ib);
            j.view_mut((row, INTRINSIC_DIM + POSE_DIM * v), (r, POSE_DIM))
                .copy_from(pb);
            row += r;
        }
        j
    }
}

/// Residual vector of all views, same order as [`residual_jacobian`].
pub fn residuals(
    views: &[ViewObservation],
    intrinsics: &CameraIntrinsics,
    poses: &[Pose],
) -> Result<DVector<f64>, CalibrationError> {
    check_lengths(views, poses)?;
    let total: usize = views.iter().map(|v| v.corners.len()).sum();
    let mut out = DVector::zeros(2 * total);
    let mut row = 0;
    for (view, pose) in views.iter().zip(poses) {
        for c in &view.corners {
            let p = crate::geometry::project_point(&view.board.point(c.index), pose, intrinsics)?;
            out[row] = p.x - c.pixel.x;
            out[row + 1] = p.y - c.pixel.y;
            row += 2;
        }
    }
    Ok(out)
}

/// Analytic Jacobian of [`residuals`] with respect to all intrinsics and
/// every view's pose.
pub fn residual_jacobian(
    views: &[ViewObservation],
    intrinsics: &CameraIntrinsics,
    poses: &[Pose],
) -> Result<ResidualJacobian, CalibrationError> {
    check_lengths(views, poses)?;
    let total: usize = views.iter().map(|v| v.corners.len()).sum();
    let mut residuals = DVector::zeros(2 * total);
    let mut intrinsic_blocks = Vec::with_capacity(views.len());
    let mut pose_blocks = Vec::with_capacity(views.len());
    let mut row = 0;
    for (view, pose) in views.iter().zip(poses) {
        let rot = pose.rotation_matrix();
        let m = 2 * view.corners.len();
        let mut ib = DMatrix::zeros(m, INTRINSIC_DIM);
        let mut pb = DMatrix::zeros(m, POSE_DIM);
        for (k, c) in view.corners.iter().enumerate() {
            let term = corner_term(
                &view.board.point(c.index),
                &c.pixel,
                intrinsics,
                pose.rotation(),
                &rot,
                pose.translation(),
            )?;
            residuals[row] = term.residual.x;
            residuals[row + 1] = term.residual.y;
            ib.view_mut((2 * k, 0), (2, INTRINSIC_DIM))
                .copy_from(&term.d_intrinsics);
            pb.view_mut((2 * k, 0), (2, POSE_DIM))
                .copy_from(&term.d_pose);
            row += 2;
        }
        intrinsic_blocks.push(ib);
        pose_blocks.push(pb);
    }
    Ok(ResidualJacobian {
        residuals,
        intrinsic_blocks,
        pose_blocks,
    })
}

fn check_lengths(views: &[ViewObservation], poses: &[Pose]) -> Result<(), CalibrationError> {
    if views.len() != poses.len() {
        return Err(CalibrationError::InvalidObservation(format!(
            "{} views but {} poses",
            views.len(),
            poses.len()
        )));
    }
    Ok(())
}
