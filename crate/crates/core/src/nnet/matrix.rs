use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err!("{} values for a {rows}x{cols} matrix", data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(shape_err!("ragged matrix rows"));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
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

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Index of the largest entry in each row (first on ties).
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|i| {
                let r = self.row(i);
                let mut best = 0;
                for (j, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `x (n x in) * w^T (in x out) + bias`, where `w` is stored `out x in`.
pub(crate) fn affine(x: &Matrix, w: &Matrix, bias: &[f64]) -> Matrix {
    let wt = w.transpose();
    let mut y = Matrix::zeros(x.rows, w.rows);
    for i in 0..x.rows {
        let yr = y.row_mut(i);
        yr.copy_from_slice(bias);
        for (k, &xv) in x.row(i).iter().enumerate() {
            if xv != 0.0 {
                axpy(yr, xv, wt.row(k));
            }
        }
    }
    y
}

/// Gradients of [`affine`]: returns `(d_input, d_weights, d_bias)`.
pub(crate) fn affine_backward(x: &Matrix, w: &Matrix, grad: &Matrix) -> (Matrix, Matrix, Vec<f64>) {
    let mut dx = Matrix::zeros(x.rows, x.cols);
    let mut dw = Matrix::zeros(w.rows, w.cols);
    let mut db = vec![0.0; w.rows];
    for i in 0..x.rows {
        let g = grad.row(i);
        let xr = x.row(i);
        let dxr = &mut dx.data[i * x.cols..(i + 1) * x.cols];
        for (o, &go) in g.iter().enumerate() {
            if go != 0.0 {
                db[o] += go;
                axpy(&mut dw.data[o * w.cols..(o + 1) * w.cols], go, xr);
                axpy(dxr, go, w.row(o));
            }
        }
    }
    (dx, dw, db)
}
