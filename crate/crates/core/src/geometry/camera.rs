use nalgebra::{Matrix2, Matrix2x5, Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Number of entries in the intrinsic parameter vector.
pub const INTRINSIC_DIM: usize = 9;

/// Pinhole intrinsics with radial-tangential distortion.
///
/// On the wire this is the flat vector `[fx, fy, cx, cy, k1, k2, k3, p1, p2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 9]", try_from = "[f64; 9]")]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub p1: f64,
    pub p2: f64,
}

impl CameraIntrinsics {
    /// Distortion-free pinhole camera.
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            k1: 0.0,
            k2: 0.0,
            k3: 0.0,
            p1: 0.0,
            p2: 0.0,
        }
    }

    /// Pinhole camera whose principal point sits at the image center and whose
    /// focal lengths reproduce the given horizontal and vertical fields of view.
    pub fn from_fov(image: ImageSpec, hfov_deg: f64, vfov_deg: f64) -> Self {
        let w = image.width as f64;
        let h = image.height as f64;
        let fx = 0.5 * w / (0.5 * hfov_deg.to_radians()).tan();
        let fy = 0.5 * h / (0.5 * vfov_deg.to_radians()).tan();
        Self::pinhole(fx, fy, 0.5 * w, 0.5 * h)
    }

    pub fn with_distortion(mut self, k1: f64, k2: f64, k3: f64, p1: f64, p2: f64) -> Self {
        self.k1 = k1;
        self.k2 = k2;
        self.k3 = k3;
        self.p1 = p1;
        self.p2 = p2;
        self
    }

    pub fn to_vector(&self) -> [f64; INTRINSIC_DIM] {
        [
            self.fx, self.fy, self.cx, self.cy, self.k1, self.k2, self.k3, self.p1, self.p2,
        ]
    }

    /// Builds intrinsics from a `C` vector without validating it.
    pub fn from_vector(c: &[f64; INTRINSIC_DIM]) -> Self {
        Self {
            fx: c[0],
            fy: c[1],
            cx: c[2],
            cy: c[3],
            k1: c[4],
            k2: c[5],
            k3: c[6],
            p1: c[7],
            p2: c[8],
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.to_vector().iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics(
                "all parameters must be finite".into(),
            ));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        Ok(())
    }

    /// Validates the intrinsics and additionally requires the principal point
    /// to lie inside `image`.
    pub fn validate_for(&self, image: &ImageSpec) -> Result<(), GeometryError> {
        self.validate()?;
        image.validate()?;
        if !image.contains(&Vector2::new(self.cx, self.cy)) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, image.width, image.height
            )));
        }
        Ok(())
    }

    pub fn has_distortion(&self) -> bool {
        self.k1 != 0.0 || self.k2 != 0.0 || self.k3 != 0.0 || self.p1 != 0.0 || self.p2 != 0.0
    }

    /// The zero-skew `K` matrix.
    pub fn k_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Maps a distorted normalized coordinate to pixels.
    pub fn to_pixel(&self, distorted: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(
            self.fx * distorted.x + self.cx,
            self.fy * distorted.y + self.cy,
        )
    }
}

impl From<CameraIntrinsics> for [f64; INTRINSIC_DIM] {
    fn from(c: CameraIntrinsics) -> Self {
        c.to_vector()
    }
}

impl TryFrom<[f64; INTRINSIC_DIM]> for CameraIntrinsics {
    type Error = GeometryError;

    fn try_from(c: [f64; INTRINSIC_DIM]) -> Result<Self, Self::Error> {
        let intrinsics = Self::from_vector(&c);
        intrinsics.validate()?;
        Ok(intrinsics)
    }
}

/// Image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSpec {
    pub width: u32,
    pub height: u32,
}

impl ImageSpec {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidImage(format!(
                "image must be non-empty, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// True iff the pixel lies in `[0, width) x [0, height)`.
    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x < self.width as f64
            && pixel.y < self.height as f64
    }

    pub fn center(&self) -> Vector2<f64> {
        Vector2::new(0.5 * self.width as f64, 0.5 * self.height as f64)
    }

    pub fn area(&self) -> f64 {
        self.width as f64 * self.height as f64
    }
}

/// Applies the radial-tangential distortion operator to a normalized
/// image-plane point `(X/Z, Y/Z)`.
pub fn distort(normalized: &Vector2<f64>, c: &CameraIntrinsics) -> Vector2<f64> {
    let (x, y) = (normalized.x, normalized.y);
    let r2 = x * x + y * y;
    let radial = 1.0 + r2 * (c.k1 + r2 * (c.k2 + r2 * c.k3));
    let xy = x * y;
    Vector2::new(
        x * radial + 2.0 * c.p1 * xy + c.p2 * (r2 + 2.0 * x * x),
        y * radial + c.p1 * (r2 + 2.0 * y * y) + 2.0 * c.p2 * xy,
    )
}

/// Partial derivatives of [`distort`].
#[derive(Debug, Clone, Copy)]
pub struct DistortionJacobian {
    /// d(x_d, y_d) / d(x, y)
    pub wrt_point: Matrix2<f64>,
    /// d(x_d, y_d) / d(k1, k2, k3, p1, p2)
    pub wrt_coeffs: Matrix2x5<f64>,
}

pub fn distort_jacobian(normalized: &Vector2<f64>, c: &CameraIntrinsics) -> DistortionJacobian {
    let (x, y) = (normalized.x, normalized.y);
    let r2 = x * x + y * y;
    let r4 = r2 * r2;
    let radial = 1.0 + r2 * (c.k1 + r2 * (c.k2 + r2 * c.k3));
    // d radial / d r2
    let dr = c.k1 + 2.0 * c.k2 * r2 + 3.0 * c.k3 * r4;
    let xy = x * y;

    let wrt_point = Matrix2::new(
        radial + 2.0 * x * x * dr + 2.0 * c.p1 * y + 6.0 * c.p2 * x,
        2.0 * xy * dr + 2.0 * c.p1 * x + 2.0 * c.p2 * y,
        2.0 * xy * dr + 2.0 * c.p1 * x + 2.0 * c.p2 * y,
        radial + 2.0 * y * y * dr + 6.0 * c.p1 * y + 2.0 * c.p2 * x,
    );
    let wrt_coeffs = Matrix2x5::new(
        x * r2,
        x * r4,
        x * r4 * r2,
        2.0 * xy,
        r2 + 2.0 * x * x,
        y * r2,
        y * r4,
        y * r4 * r2,
        r2 + 2.0 * y * y,
        2.0 * xy,
    );
    DistortionJacobian {
        wrt_point,
        wrt_coeffs,
    }
}
