//! Closed-form initialization from plane homographies, zero-skew variant of
//! the absolute-conic method: each homography `H = [h1 h2 h3]` contributes
//! `h1' B h2 = 0` and `h1' B h1 = h2' B h2` where `B ~ K^-T K^-1`.

use nalgebra::{DMatrix, Matrix3, Vector3};

use super::CalibrationError;
use crate::geometry::{CameraIntrinsics, Pose};

/// Relative singular-value floor below which the conic system is treated as
/// having more than one null direction.
const RANK_TOLERANCE: f64 = 1e-8;

/// Estimates `fx, fy, cx, cy` from at least three homographies. Distortion
/// coefficients are returned as zero.
pub fn closed_form_intrinsics(
    homographies: &[Matrix3<f64>],
) -> Result<CameraIntrinsics, CalibrationError> {
    if homographies.len() < 3 {
        return Err(CalibrationError::TooFewViews {
            needed: 3,
            got: homographies.len(),
        });
    }
    // Rescale pixels to O(1) so the conic entries are comparable in magnitude.
    let scale = pixel_scale(homographies);
    let t = Matrix3::new(1.0 / scale, 0.0, 0.0, 0.0, 1.0 / scale, 0.0, 0.0, 0.0, 1.0);

    let mut v = DMatrix::<f64>::zeros(2 * homographies.len(), 5);
    for (k, h) in homographies.iter().enumerate() {
        let hn = t * h;
        let norm = hn.norm();
        if !norm.is_finite() || norm <= 0.0 {
            return Err(CalibrationError::DegenerateConfiguration(
                "non-finite homography".into(),
            ));
        }
        let hn = hn / norm;
        let h1 = hn.column(0).into_owned();
        let h2 = hn.column(1).into_owned();
        let v12 = conic_row(&h1, &h2);
        let v11 = conic_row(&h1, &h1);
        let v22 = conic_row(&h2, &h2);
        for c in 0..5 {
            v[(2 * k, c)] = v12[c];
            v[(2 * k + 1, c)] = v11[c] - v22[c];
        }
    }
    let svd = v.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..5).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let largest = svd.singular_values[order[4]];
    let second = svd.singular_values[order[1]];
    if second.is_nan() || second <= RANK_TOLERANCE * largest {
        return Err(CalibrationError::DegenerateConfiguration(
            "absolute-conic constraints are singular (parallel boards?)".into(),
        ));
    }
    let b = v_t.row(order[0]);
    let (b11, b22, b13, b23, b33) = (b[0], b[1], b[2], b[3], b[4]);
    let cx = -b13 / b11;
    let cy = -b23 / b22;
    let lambda = b33 - b13 * b13 / b11 - b23 * b23 / b22;
    let fx2 = lambda / b11;
    let fy2 = lambda / b22;
    if !(fx2 > 0.0 && fy2 > 0.0) || !cx.is_finite() || !cy.is_finite() {
        return Err(CalibrationError::DegenerateConfiguration(
            "recovered image of the absolute conic is not positive definite".into(),
        ));
    }
    let intrinsics = CameraIntrinsics::pinhole(
        scale * fx2.sqrt(),
        scale * fy2.sqrt(),
        scale * cx,
        scale * cy,
    );
    intrinsics.validate()?;
    Ok(intrinsics)
}

fn conic_row(hi: &Vector3<f64>, hj: &Vector3<f64>) -> [f64; 5] {
    [
        hi[0] * hj[0],
        hi[1] * hj[1],
        hi[0] * hj[2] + hi[2] * hj[0],
        hi[1] * hj[2] + hi[2] * hj[1],
        hi[2] * hj[2],
    ]
}

fn pixel_scale(homographies: &[Matrix3<f64>]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for h in homographies {
        if h[(2, 2)].abs() > 0.0 {
            let u = h[(0, 2)] / h[(2, 2)];
            let v = h[(1, 2)] / h[(2, 2)];
            let r = (u * u + v * v).sqrt();
            if r.is_finite() {
                total += r;
                n += 1;
            }
        }
    }
    if n == 0 || total <= 0.0 {
        1.0
    } else {
        total / n as f64
    }
}

/// Board pose from a homography given the camera matrix.
pub fn pose_from_homography(
    intrinsics: &CameraIntrinsics,
    h: &Matrix3<f64>,
) -> Result<Pose, CalibrationError> {
    let k_inv = intrinsics
        .k_matrix()
        .try_inverse()
        .ok_or_else(|| CalibrationError::DegenerateConfiguration("singular K".into()))?;
    let a = k_inv * h;
    let a1 = a.column(0).into_owned();
    let a2 = a.column(1).into_owned();
    let a3 = a.column(2).into_owned();
    let mut lambda = 2.0 / (a1.norm() + a2.norm());
    if !lambda.is_finite() {
        return Err(CalibrationError::DegenerateConfiguration(
            "homography has a null rotation column".into(),
        ));
    }
    if a3.z * lambda < 0.0 {
        lambda = -lambda;
    }
    let r1 = a1 * lambda;
    let r2 = a2 * lambda;
    let t = a3 * lambda;
    let r3 = r1.cross(&r2);
    let approx = Matrix3::from_columns(&[r1, r2, r3]);
    let svd = approx.svd(true, true);
    let (u, v_t) = (svd.u.expect("U"), svd.v_t.expect("V^T"));
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    Ok(Pose::from_rotation_matrix(&r, t)?)
}
