//! Dense row-major rasters and normalized convolution kernels.

use crate::error::{Error, Result};
use std::ops::{Index, IndexMut};

/// Dense 2D raster of real values in row-major order.
///
/// Used for photon-count frames as well as unit-mass probability maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Grid2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "grid dimensions must be positive");
        Self { rows, cols, values: vec![value; rows * cols] }
    }

    /// Builds a grid from row-major values, checking length and finiteness.
    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("grid must be non-empty, got {rows}x{cols}")));
        }
        if values.len() != rows * cols {
            return Err(Error::Shape(format!("{} values for a {rows}x{cols} grid", values.len())));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grid value at index {pos}")));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "grid dimensions must be positive");
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(r, c));
            }
        }
        Self { rows, cols, values }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.cols + col] = value;
    }

    /// Sum in row-major order; the order is fixed so results are reproducible.
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Row and column of the largest value (first occurrence).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self { rows: self.rows, cols: self.cols, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_shape(other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    /// Returns a copy rescaled to unit sum. Fails when the sum is zero.
    pub fn normalized(&self) -> Result<Self> {
        let total = self.sum();
        if total == 0.0 || !total.is_finite() {
            return Err(Error::Degenerate(format!("cannot normalize grid with sum {total}")));
        }
        Ok(self.scale(1.0 / total))
    }

    pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!("{}x{} vs {}x{}", self.rows, self.cols, other.rows, other.cols)));
        }
        Ok(())
    }

    /// Copies the rectangle starting at (`row0`, `col0`).
    pub fn crop(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Result<Self> {
        if row0 + rows > self.rows || col0 + cols > self.cols || rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "crop {rows}x{cols} at ({row0},{col0}) outside {}x{}",
                self.rows, self.cols
            )));
        }
        Ok(Self::from_fn(rows, cols, |r, c| self.get(row0 + r, col0 + c)))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for Grid2D {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.values[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Grid2D {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.values[r * self.cols + c]
    }
}

/// Odd-sized, non-negative, unit-sum convolution kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel(Grid2D);

impl Kernel {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    /// Wraps an already-normalized grid.
    pub fn new(grid: Grid2D) -> Result<Self> {
        Self::check_odd(&grid)?;
        if grid.values().iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument("kernel values must be non-negative".into()));
        }
        let total = grid.sum();
        if (total - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!("kernel sums to {total}, expected 1")));
        }
        Ok(Self(grid))
    }

    /// Normalizes `grid` to unit sum and wraps it.
    pub fn normalize(grid: Grid2D) -> Result<Self> {
        Self::check_odd(&grid)?;
        if grid.values().iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument("kernel values must be non-negative".into()));
        }
        Ok(Self(grid.normalized()?))
    }

    fn check_odd(grid: &Grid2D) -> Result<()> {
        if grid.rows().is_multiple_of(2) || grid.cols().is_multiple_of(2) {
            return Err(Error::Shape(format!("kernel must be odd-sized, got {}x{}", grid.rows(), grid.cols())));
        }
        Ok(())
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.0
    }

    pub fn into_grid(self) -> Grid2D {
        self.0
    }

    /// Center index (row, col).
    #[inline]
    pub fn center(&self) -> (usize, usize) {
        ((self.0.rows() - 1) / 2, (self.0.cols() - 1) / 2)
    }
}
