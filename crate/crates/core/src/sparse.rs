//! Minimal column-oriented sparse matrix kernel.
//!
//! Exactly the operations the coordinate-descent solver needs: construction
//! from triplets, matrix-vector products, and per-column weighted inner
//! products. Columns are immutable after construction; all reductions run in
//! fixed per-column order so results are deterministic.

use crate::error::{Error, Result};

/// Compressed sparse column storage. Row indices within a column are strictly
/// increasing and stored values are nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseColumnMatrix {
    n_rows: usize,
    n_cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseColumnMatrix {
    /// Builds from (row, col, value) triplets. Duplicate (row, col) pairs and
    /// out-of-range indices are rejected; zero values are dropped.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<SparseColumnMatrix> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (row, col, value) in triplets {
            if row >= n_rows || col >= n_cols {
                return Err(Error::Invalid(format!(
                    "triplet ({row}, {col}) out of range for {n_rows}x{n_cols} matrix"
                )));
            }
            if value != 0.0 {
                entries.push((col, row, value));
            }
        }
        entries.sort_unstable_by_key(|&(c, r, _)| (c, r));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::Invalid(format!(
                    "duplicate entry at (row {}, col {})",
                    w[0].1, w[0].0
                )));
            }
        }

        let mut col_ptr = vec![0usize; n_cols + 1];
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for &(col, row, value) in &entries {
            col_ptr[col + 1] += 1;
            row_idx.push(row);
            values.push(value);
        }
        for c in 0..n_cols {
            col_ptr[c + 1] += col_ptr[c];
        }
        Ok(SparseColumnMatrix {
            n_rows,
            n_cols,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_nnz(&self, col: usize) -> usize {
        self.col_ptr[col + 1] - self.col_ptr[col]
    }

    /// Row indices of column `col`, strictly increasing.
    pub fn col_rows(&self, col: usize) -> &[usize] {
        &self.row_idx[self.col_ptr[col]..self.col_ptr[col + 1]]
    }

    /// Values of column `col`, aligned with [`col_rows`](Self::col_rows).
    pub fn col_values(&self, col: usize) -> &[f64] {
        &self.values[self.col_ptr[col]..self.col_ptr[col + 1]]
    }

    /// Exact sparse matrix-vector product `M * coef`.
    pub fn apply(&self, coef: &[f64]) -> Result<Vec<f64>> {
        if coef.len() != self.n_cols {
            return Err(Error::Dimension(format!(
                "coefficient length {} != {} columns",
                coef.len(),
                self.n_cols
            )));
        }
        let mut out = vec![0.0; self.n_rows];
        for (col, &c) in coef.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (&row, &v) in self.col_rows(col).iter().zip(self.col_values(col)) {
                out[row] += v * c;
            }
        }
        Ok(out)
    }

    /// Adds `delta * column(col)` into `out` in place.
    pub fn axpy_col(&self, col: usize, delta: f64, out: &mut [f64]) {
        for (&row, &v) in self.col_rows(col).iter().zip(self.col_values(col)) {
            out[row] += v * delta;
        }
    }

    /// Returns `(sum_i w_i r_i X_ij, sum_i w_i X_ij^2)` over the stored
    /// entries of column `j`, accumulated in row order.
    pub fn column_weighted_inner(&self, col: usize, r: &[f64], w: &[f64]) -> Result<(f64, f64)> {
        if r.len() != self.n_rows || w.len() != self.n_rows {
            return Err(Error::Dimension(format!(
                "vector lengths ({}, {}) != {} rows",
                r.len(),
                w.len(),
                self.n_rows
            )));
        }
        let mut dot = 0.0;
        let mut sq = 0.0;
        for (&row, &v) in self.col_rows(col).iter().zip(self.col_values(col)) {
            dot += w[row] * r[row] * v;
            sq += w[row] * v * v;
        }
        Ok((dot, sq))
    }

    /// New matrix keeping only `rows` (in the given order), renumbered 0..len.
    pub fn select_rows(&self, rows: &[usize]) -> Result<SparseColumnMatrix> {
        let mut new_index = vec![usize::MAX; self.n_rows];
        for (new_row, &old_row) in rows.iter().enumerate() {
            if old_row >= self.n_rows {
                return Err(Error::Invalid(format!("row {old_row} out of range")));
            }
            if new_index[old_row] != usize::MAX {
                return Err(Error::Invalid(format!("row {old_row} selected twice")));
            }
            new_index[old_row] = new_row;
        }
        let mut triplets = Vec::new();
        for col in 0..self.n_cols {
            for (&row, &v) in self.col_rows(col).iter().zip(self.col_values(col)) {
                if new_index[row] != usize::MAX {
                    triplets.push((new_index[row], col, v));
                }
            }
        }
        SparseColumnMatrix::from_triplets(rows.len(), self.n_cols, triplets)
    }

    /// Dense reconstruction, row-major. Test and audit helper.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n_cols]; self.n_rows];
        for col in 0..self.n_cols {
            for (&row, &v) in self.col_rows(col).iter().zip(self.col_values(col)) {
                dense[row][col] = v;
            }
        }
        dense
    }
}
