//! Shared domain types.
//!
//! Row `i` of every per-point table refers to input sample `i`; no stage
//! reorders samples.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RowMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(RowMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        RowMatrix {
            rows,
            cols,
            data: alloc::vec![0.0; rows * cols],
        }
    }

    /// Builds from nested rows; all rows must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(RowMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(m[(i, j)]);
            }
        }
        RowMatrix { rows, cols, data }
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Column `j` copied out.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// First `cols` columns.
    pub fn leading_columns(&self, cols: usize) -> RowMatrix {
        let cols = cols.min(self.cols);
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[..cols]);
        }
        RowMatrix {
            rows: self.rows,
            cols,
            data,
        }
    }

    /// Rows picked by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> RowMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        RowMatrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Location of the first non-finite entry.
    pub fn find_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|p| (p / self.cols.max(1), p % self.cols.max(1)))
    }
}

/// `N` samples in `R^m`; finite, `N >= 2`, `m >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: RowMatrix,
}

impl PointCloud {
    pub fn new(points: RowMatrix) -> Result<Self> {
        if points.rows() == 0 || points.cols() == 0 {
            return Err(Error::Shape(format!(
                "point cloud needs at least one row and one column, got {}x{}",
                points.rows(),
                points.cols()
            )));
        }
        if let Some((row, col)) = points.find_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        if points.rows() < 2 {
            return Err(Error::DegenerateGeometry(
                "a point cloud needs at least two samples".into(),
            ));
        }
        Ok(PointCloud { points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(RowMatrix::from_rows(rows)?)
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    pub fn matrix(&self) -> &RowMatrix {
        &self.points
    }

    pub fn into_matrix(self) -> RowMatrix {
        self.points
    }
}

/// Feature values `y_i = H(x_i)`, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    values: RowMatrix,
}

impl FeatureSet {
    pub fn new(values: RowMatrix) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::Shape(format!(
                "feature set needs at least one row and one column, got {}x{}",
                values.rows(),
                values.cols()
            )));
        }
        if let Some((row, col)) = values.find_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        Ok(FeatureSet { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(RowMatrix::from_rows(rows)?)
    }

    /// Features equal to the coordinates themselves.
    pub fn from_cloud(cloud: &PointCloud) -> Self {
        FeatureSet {
            values: cloud.matrix().clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn value(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn matrix(&self) -> &RowMatrix {
        &self.values
    }

    pub(crate) fn check_aligned(&self, cloud: &PointCloud) -> Result<()> {
        if self.len() != cloud.len() {
            return Err(Error::Shape(format!(
                "{} feature rows for {} samples",
                self.len(),
                cloud.len()
            )));
        }
        Ok(())
    }
}

/// Ordered k-NN lists. Entry 0 of every list is the point itself at
/// distance 0; distances are nondecreasing along each list.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    pub(crate) n: usize,
    pub(crate) k: usize,
    pub(crate) indices: Vec<usize>,
    pub(crate) distances: Vec<f64>,
}

impl NeighborGraph {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn indices(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }

    /// Distance from `i` to its farthest listed neighbor.
    pub fn radius(&self, i: usize) -> f64 {
        self.distances(i)[self.k - 1]
    }
}

/// Coordinates `x^(l)` after `iteration` passes (0 is the raw data).
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionEmbedding {
    pub coords: RowMatrix,
    pub iteration: usize,
    /// Diffusion time; 0 for the raw data.
    pub s: f64,
    /// Per-point dimension used in the rescaling prefactor.
    pub local_dims: Vec<f64>,
}

impl DiffusionEmbedding {
    /// Wraps raw data as iteration 0.
    pub fn raw(cloud: &PointCloud) -> Self {
        DiffusionEmbedding {
            coords: cloud.matrix().clone(),
            iteration: 0,
            s: 0.0,
            local_dims: Vec::new(),
        }
    }

    pub fn to_cloud(&self) -> Result<PointCloud> {
        PointCloud::new(self.coords.clone())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((row, col)) = self.coords.find_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        if !self.local_dims.is_empty() && self.local_dims.len() != self.coords.rows() {
            return Err(Error::Shape(format!(
                "{} local dimensions for {} rows",
                self.local_dims.len(),
                self.coords.rows()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nan_with_location() {
        let m = RowMatrix::new(2, 2, alloc::vec![0.0, 1.0, f64::NAN, 2.0]).unwrap();
        assert_eq!(PointCloud::new(m), Err(Error::NonFinite { row: 1, col: 0 }));
    }

    #[test]
    fn ragged_rows_are_shape_errors() {
        let rows = alloc::vec![alloc::vec![0.0, 1.0], alloc::vec![2.0]];
        assert!(matches!(PointCloud::from_rows(&rows), Err(Error::Shape(_))));
    }

    #[test]
    fn single_sample_is_degenerate() {
        let rows = alloc::vec![alloc::vec![0.0, 1.0]];
        assert!(matches!(
            PointCloud::from_rows(&rows),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn dmatrix_round_trip() {
        let m = RowMatrix::new(2, 3, alloc::vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let d = m.to_dmatrix();
        assert_eq!(d[(1, 0)], 4.0);
        assert_eq!(RowMatrix::from_dmatrix(&d), m);
    }
}
