use nalgebra::{DMatrix, Matrix2, Matrix3, SymmetricEigen, Vector2, Vector3};

use super::{CalibrationError, ViewObservation};

/// Plane-to-image homography of one view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    /// Maps board-plane `(X, Y, 1)` to homogeneous pixels; normalized so that
    /// `matrix[(2, 2)] == 1` whenever that entry is non-zero.
    pub matrix: Matrix3<f64>,
    /// Smallest singular value of the normalized DLT system.
    pub algebraic_residual: f64,
}

impl Homography {
    pub fn apply(&self, p: &Vector2<f64>) -> Vector2<f64> {
        let h = self.matrix * Vector3::new(p.x, p.y, 1.0);
        Vector2::new(h.x / h.z, h.y / h.z)
    }
}

/// Normalized DLT homography from the board plane to the view's pixels.
pub fn estimate_homography(view: &ViewObservation) -> Result<Homography, CalibrationError> {
    view.validate()?;
    let (plane, image): (Vec<_>, Vec<_>) = view
        .corners
        .iter()
        .map(|c| {
            let m = view.board.point(c.index);
            (Vector2::new(m.x, m.y), c.pixel)
        })
        .unzip();
    homography_from_points(&plane, &image)
}

/// Normalized DLT on explicit correspondences.
pub fn homography_from_points(
    plane: &[Vector2<f64>],
    image: &[Vector2<f64>],
) -> Result<Homography, CalibrationError> {
    if plane.len() != image.len() || plane.len() < 4 {
        return Err(CalibrationError::InvalidObservation(format!(
            "homography needs at least 4 paired points, got {} / {}",
            plane.len(),
            image.len()
        )));
    }
    let (t_plane, plane_n) = normalize(plane)?;
    let (t_image, image_n) = normalize(image)?;

    let n = plane.len();
    // Pad to at least 9 rows so the SVD exposes the full right null space.
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, (p, q)) in plane_n.iter().zip(&image_n).enumerate() {
        let (x, y) = (p.x, p.y);
        let (u, v) = (q.x, q.y);
        let r = 2 * k;
        a.row_mut(r)
            .copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let smallest = svd.singular_values[order[0]];
    let second = svd.singular_values[order[1]];
    let largest = svd.singular_values[order[8]];
    if second.is_nan() || second <= 1e-10 * largest {
        return Err(CalibrationError::DegenerateConfiguration(
            "homography system is rank deficient".into(),
        ));
    }
    let h = v_t.row(order[0]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_image_inv = t_image
        .try_inverse()
        .expect("normalization transform is invertible");
    let mut matrix = t_image_inv * hn * t_plane;
    if matrix[(2, 2)].abs() > f64::EPSILON * matrix.amax() {
        matrix /= matrix[(2, 2)];
    } else {
        matrix /= matrix.norm();
    }
    Ok(Homography {
        matrix,
        algebraic_residual: smallest,
    })
}

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
/// Fails when the points are collinear or coincident.
fn normalize(
    points: &[Vector2<f64>],
) -> Result<(Matrix3<f64>, Vec<Vector2<f64>>), CalibrationError> {
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector2::zeros(), |acc, p| acc + p) / n;
    let mean_dist = points.iter().map(|p| (p - centroid).norm()).sum::<f64>() / n;
    if !mean_dist.is_finite() || mean_dist <= 0.0 {
        return Err(CalibrationError::DegenerateConfiguration(
            "coincident correspondences".into(),
        ));
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    let out: Vec<Vector2<f64>> = points.iter().map(|p| (p - centroid) * s).collect();

    let scatter = out.iter().fold(Matrix2::zeros(), |acc: Matrix2<f64>, p| {
        acc + p * p.transpose()
    });
    let eig = SymmetricEigen::new(scatter);
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if lo.is_nan() || lo <= 1e-12 * hi {
        return Err(CalibrationError::DegenerateConfiguration(
            "collinear correspondences".into(),
        ));
    }
    let t = Matrix3::new(
        s,
        0.0,
        -s * centroid.x,
        0.0,
        s,
        -s * centroid.y,
        0.0,
        0.0,
        1.0,
    );
    Ok((t, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{Corner, ObservationSource};
    use crate::geometry::{project_board, BoardSpec, CameraIntrinsics, ImageSpec, Pose};

    #[test]
    fn noiseless_view_is_reproduced_exactly() {
        let board = BoardSpec::default();
        let cam = CameraIntrinsics::pinhole(900.0, 880.0, 640.0, 400.0);
        let pose = Pose::new(
            nalgebra::Vector3::new(0.3, -0.4, 0.1),
            nalgebra::Vector3::new(-0.1, -0.05, 0.6),
        );
        let corners: Vec<Corner> = project_board(&board, &pose, &cam, &ImageSpec::new(1280, 800))
            .into_iter()
            .map(|c| Corner {
                index: c.index,
                pixel: c.pixel.unwrap(),
            })
            .collect();
        let view = ViewObservation::new(board, corners.clone(), ObservationSource::Synthetic);
        let h = estimate_homography(&view).unwrap();
        for c in &corners {
            let m = board.point(c.index);
            let p = h.apply(&Vector2::new(m.x, m.y));
            assert!((p - c.pixel).norm() < 1e-8, "{}", (p - c.pixel).norm());
        }
    }

    #[test]
    fn square_to_square_is_identity() {
        let pts = vec![
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(0.0, 1.0),
            Vector2::new(1.0, 1.0),
        ];
        let h = homography_from_points(&pts, &pts).unwrap();
        assert!((h.matrix - Matrix3::identity()).amax() < 1e-12);
    }

    #[test]
    fn collinear_corners_are_degenerate() {
        let board = BoardSpec::default();
        let corners = (0..9)
            .map(|i| Corner::new(i, 10.0 * i as f64, 5.0))
            .collect();
        let view = ViewObservation::new(board, corners, ObservationSource::Synthetic);
        assert!(matches!(
            estimate_homography(&view),
            Err(CalibrationError::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn collapsed_image_is_degenerate() {
        let plane = vec![
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(0.0, 1.0),
            Vector2::new(1.0, 1.0),
        ];
        let image = vec![Vector2::new(3.0, 3.0); 4];
        assert!(homography_from_points(&plane, &image).is_err());
    }
}
