//! Attenuation images: row-major 2-D grids with optional z-slices.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Attenuation image in mm^-1, stored row-major as
/// `data[(slice * n_rows + row) * n_cols + col]`.
///
/// The z-dimension exists for volume IO; the projector itself is 2-D and
/// operates on single-slice images.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageVolume {
    n_rows: usize,
    n_cols: usize,
    n_slices: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageError {
    EmptyDims,
    LengthMismatch { expected: usize, got: usize },
}

impl fmt::Display for ImageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageError::EmptyDims => write!(f, "image dimensions must all be >= 1"),
            ImageError::LengthMismatch { expected, got } => {
                write!(f, "image data length {got} does not match dims ({expected})")
            }
        }
    }
}

impl core::error::Error for ImageError {}

impl ImageVolume {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self::uniform(n_rows, n_cols, 0.0)
    }

    pub fn uniform(n_rows: usize, n_cols: usize, value: f64) -> Self {
        assert!(n_rows >= 1 && n_cols >= 1, "image dimensions must be >= 1");
        ImageVolume {
            n_rows,
            n_cols,
            n_slices: 1,
            data: vec![value; n_rows * n_cols],
        }
    }

    pub fn from_vec(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        Self::from_vec_3d(n_rows, n_cols, 1, data)
    }

    pub fn from_vec_3d(
        n_rows: usize,
        n_cols: usize,
        n_slices: usize,
        data: Vec<f64>,
    ) -> Result<Self, ImageError> {
        if n_rows == 0 || n_cols == 0 || n_slices == 0 {
            return Err(ImageError::EmptyDims);
        }
        let expected = n_rows * n_cols * n_slices;
        if data.len() != expected {
            return Err(ImageError::LengthMismatch {
                expected,
                got: data.len(),
            });
        }
        Ok(ImageVolume {
            n_rows,
            n_cols,
            n_slices,
            data,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_slices(&self) -> usize {
        self.n_slices
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Value at (row, col) of slice 0.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.n_cols + col] = value;
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.data {
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(ImageVolume::from_vec(2, 3, vec![0.0; 6]).is_ok());
        assert_eq!(
            ImageVolume::from_vec(2, 3, vec![0.0; 5]),
            Err(ImageError::LengthMismatch {
                expected: 6,
                got: 5
            })
        );
        assert_eq!(
            ImageVolume::from_vec_3d(0, 3, 1, vec![]),
            Err(ImageError::EmptyDims)
        );
    }

    #[test]
    fn indexing_is_row_major() {
        let mut img = ImageVolume::zeros(2, 3);
        img.set(1, 2, 5.0);
        assert_eq!(img.data()[5], 5.0);
        assert_eq!(img.get(1, 2), 5.0);
        assert_eq!(img.min_max(), (0.0, 5.0));
    }
}
