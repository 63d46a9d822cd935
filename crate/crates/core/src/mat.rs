//! Minimal dense row-major matrix used by the forecaster, classifiers, and PCA.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {} has {} entries, expected {}",
                    i,
                    r.len(),
                    cols
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Mat {
            rows: n,
            cols,
            data,
        })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Mat> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Mat { rows, cols, data })
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
    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * other`, standard matrix product.
    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    *out.at_mut(i, j) += a * other.at(k, j);
                }
            }
        }
        Ok(out)
    }
}

/// `y[j] = sum_i x[i] * m[i][j]` — row vector times matrix, accumulated into `out`.
pub fn vec_mat_accum(x: &[f64], m: &Mat, out: &mut [f64]) {
    debug_assert_eq!(x.len(), m.rows());
    debug_assert_eq!(out.len(), m.cols());
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = m.row(i);
        for (o, &w) in out.iter_mut().zip(row) {
            *o += xi * w;
        }
    }
}

/// `y[i] = sum_j d[j] * m[i][j]` — matrix times column vector, accumulated into `out`.
pub fn mat_vec_t_accum(d: &[f64], m: &Mat, out: &mut [f64]) {
    debug_assert_eq!(d.len(), m.cols());
    debug_assert_eq!(out.len(), m.rows());
    for (i, o) in out.iter_mut().enumerate() {
        let row = m.row(i);
        let mut acc = 0.0;
        for (dj, w) in d.iter().zip(row) {
            acc += dj * w;
        }
        *o += acc;
    }
}

/// Rank-one accumulation `m[i][j] += x[i] * d[j]`.
pub fn outer_accum(x: &[f64], d: &[f64], m: &mut Mat) {
    debug_assert_eq!(x.len(), m.rows());
    debug_assert_eq!(d.len(), m.cols());
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let cols = m.cols();
        let row = &mut m.data_mut()[i * cols..(i + 1) * cols];
        for (w, &dj) in row.iter_mut().zip(d) {
            *w += xi * dj;
        }
    }
}
