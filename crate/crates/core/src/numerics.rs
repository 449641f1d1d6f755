//! Small deterministic vector/matrix kernel.
//!
//! Every reduction sums left to right over storage order so that results are
//! bit-reproducible across runs. Variance is the population variance
//! (divide by `n`).

use serde::{Deserialize, Serialize};

use crate::error::{MsthError, Result};

/// Population statistics of a vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub mean: f64,
    pub var: f64,
    pub std: f64,
    pub max_abs: f64,
    pub mean_abs: f64,
}

pub fn stats(v: &[f64]) -> Result<StatSummary> {
    if v.is_empty() {
        return Err(MsthError::EmptyInput);
    }
    let n = v.len() as f64;
    let mut sum = 0.0;
    let mut sum_abs = 0.0;
    let mut max_abs: f64 = 0.0;
    for &x in v {
        sum += x;
        sum_abs += x.abs();
        max_abs = max_abs.max(x.abs());
    }
    let mean = sum / n;
    let mut sq = 0.0;
    for &x in v {
        let d = x - mean;
        sq += d * d;
    }
    let var = sq / n;
    Ok(StatSummary {
        mean,
        var,
        std: var.sqrt(),
        max_abs,
        mean_abs: sum_abs / n,
    })
}

/// Mean of `|x|`; zero for an empty slice.
pub fn mean_abs(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Logistic function, evaluated on the side that cannot overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(MsthError::EmptyInput);
        }
        if data.len() != rows * cols {
            return Err(MsthError::shape(
                format!("{} elements for {rows}x{cols}", rows * cols),
                data.len(),
            ));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|row| row.len() != c) {
            return Err(MsthError::shape(
                format!("rows of length {c}"),
                "ragged rows",
            ));
        }
        Mat::from_vec(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · x`, one dot product per row.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(MsthError::shape(self.cols, x.len()));
        }
        Ok((0..self.rows)
            .map(|r| {
                let mut acc = 0.0;
                for (w, xi) in self.row(r).iter().zip(x) {
                    acc += w * xi;
                }
                acc
            })
            .collect())
    }

    pub fn scaled(&self, factor: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|w| w * factor).collect(),
        }
    }

    pub fn scale_in_place(&mut self, factor: f64) {
        for w in &mut self.data {
            *w *= factor;
        }
    }

    pub fn stats(&self) -> StatSummary {
        // Construction guarantees at least one element.
        stats(&self.data).expect("matrix is never empty")
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.data)
    }
}

/// Square root of the sum of squared entries.
pub fn frobenius_norm(w: &Mat) -> f64 {
    let mut acc = 0.0;
    for x in w.as_slice() {
        acc += x * x;
    }
    acc.sqrt()
}
