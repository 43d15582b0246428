//! Core data containers: a minimal dense row-major matrix and the
//! train/calibration/test dataset split.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("row {row} has length {got}, expected {expected}")]
    RaggedRow {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("negative target at row {row}, column {col}")]
    NegativeTarget { row: usize, col: usize },
    #[error("split indices must be disjoint and cover all {n} rows exactly once")]
    BadSplit { n: usize },
    #[error("dataset is empty")]
    Empty,
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Matrix {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DataError> {
        if rows.is_empty() {
            return Ok(Matrix {
                n_rows: 0,
                n_cols: 0,
                data: Vec::new(),
            });
        }
        let n_cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_cols {
                return Err(DataError::RaggedRow {
                    row: i,
                    got: r.len(),
                    expected: n_cols,
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            n_rows: rows.len(),
            n_cols,
            data,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_cols + j] = v;
    }

    /// Copy of the listed rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            n_rows: idx.len(),
            n_cols: self.n_cols,
            data,
        }
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols.max(1))
    }
}

/// Disjoint row-index sets: proper training, calibration, held-out test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub calibration: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    /// Contiguous split by counts: first `n_train` rows train, next
    /// `n_cal` calibrate, remainder test.
    pub fn contiguous(n: usize, n_train: usize, n_cal: usize) -> Result<Self, DataError> {
        if n_train + n_cal > n {
            return Err(DataError::BadSplit { n });
        }
        Ok(SplitIndices {
            train: (0..n_train).collect(),
            calibration: (n_train..n_train + n_cal).collect(),
            test: (n_train + n_cal..n).collect(),
        })
    }

    fn covers_exactly(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.calibration).chain(&self.test) {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.iter().all(|&s| s)
    }
}

/// Paired covariate vectors and d-dimensional targets with a
/// train/calibration/test split.
///
/// Targets are day-ahead PV profiles in kW (one column per hour), so they
/// must be finite and nonnegative.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Matrix,
    pub targets: Matrix,
    pub splits: SplitIndices,
}

impl Dataset {
    pub fn new(features: Matrix, targets: Matrix, splits: SplitIndices) -> Result<Self, DataError> {
        let n = features.n_rows();
        if n == 0 {
            return Err(DataError::Empty);
        }
        if targets.n_rows() != n {
            return Err(DataError::RaggedRow {
                row: 0,
                got: targets.n_rows(),
                expected: n,
            });
        }
        for i in 0..n {
            for (j, &v) in features.row(i).iter().enumerate() {
                if !v.is_finite() {
                    return Err(DataError::NonFinite { row: i, col: j });
                }
            }
            for (j, &v) in targets.row(i).iter().enumerate() {
                if !v.is_finite() {
                    return Err(DataError::NonFinite { row: i, col: j });
                }
                if v < 0.0 {
                    return Err(DataError::NegativeTarget { row: i, col: j });
                }
            }
        }
        if !splits.covers_exactly(n) {
            return Err(DataError::BadSplit { n });
        }
        Ok(Dataset {
            features,
            targets,
            splits,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.features.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.n_cols()
    }

    /// Training view: only the rows in the proper training split. Training
    /// code receives this view, never the full dataset.
    pub fn train_view(&self) -> (Matrix, Matrix) {
        (
            self.features.select_rows(&self.splits.train),
            self.targets.select_rows(&self.splits.train),
        )
    }

    pub fn calibration_view(&self) -> (Matrix, Matrix) {
        (
            self.features.select_rows(&self.splits.calibration),
            self.targets.select_rows(&self.splits.calibration),
        )
    }

    pub fn test_view(&self) -> (Matrix, Matrix) {
        (
            self.features.select_rows(&self.splits.test),
            self.targets.select_rows(&self.splits.test),
        )
    }
}
