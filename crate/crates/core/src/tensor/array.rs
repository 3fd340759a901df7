//! Dense row-major 2-D arrays of 64-bit floats.
//!
//! Everything in the engine is a matrix: row vectors are `[1 x d]`, column
//! vectors `[n x 1]`, scalars `[1 x 1]`. Training runs in f64 throughout so
//! finite-difference gradient checks are meaningful at tight tolerances.

use serde::{Deserialize, Serialize};

/// A dense 2-D array of f64, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Array {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Array {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Array {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Array {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    /// Build from a flat row-major buffer. Panics if the length does not
    /// match `rows * cols`; shapes are internal invariants, not user input.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "buffer length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        Array { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Array {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    /// Row vector `[1 x d]`.
    pub fn row(values: &[f64]) -> Self {
        Array::from_vec(1, values.len(), values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_slice_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Value of a `[1 x 1]` array.
    pub fn scalar_value(&self) -> f64 {
        debug_assert_eq!(self.numel(), 1);
        self.data[0]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Euclidean norm of the whole buffer.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Array {
        Array {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Raw matrix product with optional transposes, accumulating into `out`.
///
/// `a` is `[m x k]` (or `[k x m]` when `ta`), `b` is `[k x n]` (or `[n x k]`
/// when `tb`), `out` is `[m x n]`. Loop orders keep the inner stride 1 so the
/// compiler can vectorize; summation order is fixed for reproducibility.
#[allow(clippy::too_many_arguments)]
pub fn matmul_into(
    out: &mut [f64],
    a: &[f64],
    b: &[f64],
    m: usize,
    k: usize,
    n: usize,
    ta: bool,
    tb: bool,
) {
    match (ta, tb) {
        (false, false) => {
            for i in 0..m {
                let out_row = &mut out[i * n..(i + 1) * n];
                for p in 0..k {
                    let aip = a[i * k + p];
                    if aip == 0.0 {
                        continue;
                    }
                    let b_row = &b[p * n..(p + 1) * n];
                    for j in 0..n {
                        out_row[j] += aip * b_row[j];
                    }
                }
            }
        }
        (true, false) => {
            // a stored [k x m]
            for p in 0..k {
                let a_row = &a[p * m..(p + 1) * m];
                let b_row = &b[p * n..(p + 1) * n];
                for i in 0..m {
                    let aip = a_row[i];
                    if aip == 0.0 {
                        continue;
                    }
                    let out_row = &mut out[i * n..(i + 1) * n];
                    for j in 0..n {
                        out_row[j] += aip * b_row[j];
                    }
                }
            }
        }
        (false, true) => {
            // b stored [n x k]; each output entry is a dot of contiguous rows
            for i in 0..m {
                let a_row = &a[i * k..(i + 1) * k];
                let out_row = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    let b_row = &b[j * k..(j + 1) * k];
                    let mut s = 0.0;
                    for p in 0..k {
                        s += a_row[p] * b_row[p];
                    }
                    out_row[j] += s;
                }
            }
        }
        (true, true) => {
            for i in 0..m {
                for j in 0..n {
                    let mut s = 0.0;
                    for p in 0..k {
                        s += a[p * m + i] * b[j * k + p];
                    }
                    out[i * n + j] += s;
                }
            }
        }
    }
}
