use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix3x4, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

const ORTHONORMAL_TOLERANCE: f64 = 1e-6;

/// Rigid transform from the board frame into the camera frame.
///
/// The rotation is stored as an axis-angle vector whose magnitude is kept in
/// `[0, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRepr")]
pub struct Pose {
    rotation: Vector3<f64>,
    translation: Vector3<f64>,
}

#[derive(Deserialize)]
struct PoseRepr {
    rotation: Vector3<f64>,
    translation: Vector3<f64>,
}

impl From<PoseRepr> for Pose {
    fn from(r: PoseRepr) -> Self {
        Pose::new(r.rotation, r.translation)
    }
}

impl Pose {
    pub fn new(rotation: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: canonical_axis_angle(&rotation),
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros())
    }

    pub fn from_rotation_matrix(
        rotation: &Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        check_orthonormal(rotation)?;
        Ok(Self {
            rotation: log_so3(rotation),
            translation,
        })
    }

    pub fn rotation(&self) -> &Vector3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation_angle(&self) -> f64 {
        self.rotation.norm()
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        exp_so3(&self.rotation)
    }

    /// `[R | t]`.
    pub fn to_matrix(&self) -> Matrix3x4<f64> {
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Inverse of [`Pose::to_matrix`]; rejects non-orthonormal rotation blocks.
    pub fn from_matrix(m: &Matrix3x4<f64>) -> Result<Self, GeometryError> {
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let t: Vector3<f64> = m.fixed_view::<3, 1>(0, 3).into_owned();
        Self::from_rotation_matrix(&r, t)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix() * p + self.translation
    }

    /// Geodesic angle between the two rotations, in radians.
    pub fn rotation_distance(&self, other: &Pose) -> f64 {
        let relative = self.rotation_matrix().transpose() * other.rotation_matrix();
        log_so3(&relative).norm()
    }

    pub fn translation_distance(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Moves `fraction` of the way toward `target`: translation is linearly
    /// interpolated, rotation follows the geodesic.
    pub fn interpolate(&self, target: &Pose, fraction: f64) -> Pose {
        let r0 = self.rotation_matrix();
        let delta = log_so3(&(r0.transpose() * target.rotation_matrix()));
        let rotation = r0 * exp_so3(&(delta * fraction));
        let translation = self.translation + (target.translation - self.translation) * fraction;
        Pose {
            rotation: log_so3(&rotation),
            translation,
        }
    }
}

/// Rodrigues' formula.
pub fn exp_so3(omega: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::new(*omega).into_inner()
}

/// Axis-angle vector of a rotation matrix, magnitude in `[0, pi]`.
///
/// Goes through the quaternion so that angles near 0 and near pi keep full
/// precision.
pub fn log_so3(r: &Matrix3<f64>) -> Vector3<f64> {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    let q = q.quaternion();
    let (mut w, mut v) = (q.w, q.imag());
    if w < 0.0 {
        w = -w;
        v = -v;
    }
    let n = v.norm();
    if n < 1e-12 {
        return v * (2.0 / w);
    }
    v * (2.0 * n.atan2(w) / n)
}

fn canonical_axis_angle(omega: &Vector3<f64>) -> Vector3<f64> {
    if omega.norm() <= PI {
        *omega
    } else {
        log_so3(&exp_so3(omega))
    }
}

fn check_orthonormal(r: &Matrix3<f64>) -> Result<(), GeometryError> {
    let gram = r.transpose() * r - Matrix3::identity();
    let deviation = gram.amax().max((r.determinant() - 1.0).abs());
    if !deviation.is_finite() || deviation > ORTHONORMAL_TOLERANCE {
        return Err(GeometryError::NonOrthonormal { deviation });
    }
    Ok(())
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Derivatives of `R(omega) * p` with respect to each component of `omega`,
/// returned as the columns of a 3x3 matrix.
pub fn rotate_point_jacobian(omega: &Vector3<f64>, p: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let r = exp_so3(omega);
    if theta2 < 1e-20 {
        // At the identity d(R p)/d omega = -[p]x
        return -skew(&(r * p));
    }
    let rp = r * p;
    let i_minus_r = Matrix3::identity() - r;
    let omega_skew = skew(omega);
    let mut jac = Matrix3::zeros();
    for i in 0..3 {
        let e = Vector3::ith(i, 1.0);
        let dr = (omega_skew * omega[i] + skew(&omega.cross(&(i_minus_r * e)))) / theta2;
        jac.set_column(i, &(dr * rp));
    }
    jac
}
