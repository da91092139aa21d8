use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Planar chessboard described by its interior-corner grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoardSpec {
    pub cols: usize,
    pub rows: usize,
    /// Edge length of one square, meters.
    pub square_size: f64,
}

impl Default for BoardSpec {
    fn default() -> Self {
        Self {
            cols: 9,
            rows: 6,
            square_size: 0.025,
        }
    }
}

impl BoardSpec {
    pub fn new(cols: usize, rows: usize, square_size: f64) -> Result<Self, GeometryError> {
        let board = Self {
            cols,
            rows,
            square_size,
        };
        board.validate()?;
        Ok(board)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.cols < 2 || self.rows < 2 {
            return Err(GeometryError::InvalidBoard(format!(
                "need at least 2x2 interior corners, got {}x{}",
                self.cols, self.rows
            )));
        }
        if !(self.square_size > 0.0 && self.square_size.is_finite()) {
            return Err(GeometryError::InvalidBoard(format!(
                "square size must be positive, got {}",
                self.square_size
            )));
        }
        Ok(())
    }

    pub fn corner_count(&self) -> usize {
        self.cols * self.rows
    }

    pub fn contains_index(&self, index: usize) -> bool {
        index < self.corner_count()
    }

    /// Model point of corner `index` (row-major), on the board's Z=0 plane.
    pub fn point(&self, index: usize) -> Vector3<f64> {
        let (i, j) = (index / self.cols, index % self.cols);
        Vector3::new(
            j as f64 * self.square_size,
            i as f64 * self.square_size,
            0.0,
        )
    }

    pub fn model_points(&self) -> Vec<Vector3<f64>> {
        (0..self.corner_count()).map(|i| self.point(i)).collect()
    }

    /// Row-major indices of the four extreme corners: top-left, top-right,
    /// bottom-left, bottom-right.
    pub fn outer_four(&self) -> [usize; 4] {
        let n = self.corner_count();
        [0, self.cols - 1, self.cols * (self.rows - 1), n - 1]
    }

    /// Center of the corner grid in the board frame.
    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(
            0.5 * (self.cols - 1) as f64 * self.square_size,
            0.5 * (self.rows - 1) as f64 * self.square_size,
            0.0,
        )
    }

    pub fn width(&self) -> f64 {
        (self.cols - 1) as f64 * self.square_size
    }

    pub fn height(&self) -> f64 {
        (self.rows - 1) as f64 * self.square_size
    }
}
