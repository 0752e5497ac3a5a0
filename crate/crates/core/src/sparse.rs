//! Compressed sparse row matrices and the few products the pipeline needs.
//!
//! This is deliberately not a general sparse-algebra library: the only
//! consumers are the graph kernel, the Laplacian blocks and the network's
//! sparse feature path, so the API stops at CSR construction, sparse-dense
//! products and densification.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::{Error, Result};

/// Real matrix in compressed sparse row form.
///
/// Invariants (checked by [`SparseMatrix::new`]):
/// - `row_offsets` has `n_rows + 1` non-decreasing entries ending at the
///   number of stored values,
/// - column indices are strictly increasing within a row and `< n_cols`,
/// - stored values are finite and non-zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::InvalidCsr("row_offsets must have n_rows + 1 entries"));
        }
        if row_offsets[0] != 0 || *row_offsets.last().expect("non-empty") != values.len() {
            return Err(Error::InvalidCsr("row_offsets must start at 0 and end at nnz"));
        }
        if col_indices.len() != values.len() {
            return Err(Error::InvalidCsr("col_indices and values must have equal length"));
        }
        for w in row_offsets.windows(2) {
            if w[0] > w[1] {
                return Err(Error::InvalidCsr("row_offsets must be non-decreasing"));
            }
        }
        for r in 0..n_rows {
            let row = &col_indices[row_offsets[r]..row_offsets[r + 1]];
            for (k, &c) in row.iter().enumerate() {
                if c >= n_cols {
                    return Err(Error::InvalidCsr("column index out of range"));
                }
                if k > 0 && row[k - 1] >= c {
                    return Err(Error::InvalidCsr("column indices must be strictly increasing per row"));
                }
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sparse matrix values"));
        }
        if values.iter().any(|&v| v == 0.0) {
            return Err(Error::InvalidCsr("explicit zeros are not stored"));
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds from (row, col, value) triplets; duplicate coordinates are
    /// summed and resulting zeros dropped.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (r, c, v) in triplets {
            if r >= n_rows {
                return Err(Error::NodeOutOfRange { index: r, n: n_rows });
            }
            if c >= n_cols {
                return Err(Error::NodeOutOfRange { index: c, n: n_cols });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite("triplet value"));
            }
            entries.push((r, c, v));
        }
        entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut i = 0;
        while i < entries.len() {
            let (r, c, mut v) = entries[i];
            i += 1;
            while i < entries.len() && entries[i].0 == r && entries[i].1 == c {
                v += entries[i].2;
                i += 1;
            }
            if v != 0.0 {
                col_indices.push(c);
                values.push(v);
                row_offsets[r + 1] += 1;
            }
        }
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Self::new(n_rows, n_cols, row_offsets, col_indices, values)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// All-zero matrix (no stored entries).
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        (&self.col_indices[range.clone()], &self.values[range])
    }

    /// Iterates all stored entries as `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    /// Main diagonal as a dense vector (zeros where no entry is stored).
    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_rows.min(self.n_cols)];
        for r in 0..d.len() {
            let (cols, vals) = self.row(r);
            if let Ok(k) = cols.binary_search(&r) {
                d[r] = vals[k];
            }
        }
        d
    }

    /// Sparse-dense product `S * M`.
    ///
    /// Deterministic: entries of each row are accumulated in storage order,
    /// one output column at a time.
    pub fn mul_dense(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.mul_dense_with(&self.values, m)
    }

    /// `S * M` with the stored values replaced by `values` (same sparsity
    /// pattern, zeros permitted). Used for dropout-masked feature matrices.
    pub fn mul_dense_with(&self, values: &[f64], m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if values.len() != self.nnz() {
            return Err(Error::DimMismatch {
                context: "substituted values",
                expected: self.nnz(),
                found: values.len(),
            });
        }
        if m.nrows() != self.n_cols {
            return Err(Error::DimMismatch {
                context: "sparse * dense",
                expected: self.n_cols,
                found: m.nrows(),
            });
        }
        let mut out = DMatrix::zeros(self.n_rows, m.ncols());
        for col in 0..m.ncols() {
            let m_col = m.column(col);
            let mut out_col = out.column_mut(col);
            for r in 0..self.n_rows {
                let range = self.row_offsets[r]..self.row_offsets[r + 1];
                let mut acc = 0.0;
                for k in range {
                    acc += values[k] * m_col[self.col_indices[k]];
                }
                out_col[r] = acc;
            }
        }
        Ok(out)
    }

    /// Transposed sparse-dense product `S^T * M`.
    pub fn tr_mul_dense(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.tr_mul_dense_with(&self.values, m)
    }

    /// `S^T * M` with substituted values (see [`Self::mul_dense_with`]).
    pub fn tr_mul_dense_with(&self, values: &[f64], m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if values.len() != self.nnz() {
            return Err(Error::DimMismatch {
                context: "substituted values",
                expected: self.nnz(),
                found: values.len(),
            });
        }
        if m.nrows() != self.n_rows {
            return Err(Error::DimMismatch {
                context: "sparse^T * dense",
                expected: self.n_rows,
                found: m.nrows(),
            });
        }
        let mut out = DMatrix::zeros(self.n_cols, m.ncols());
        for col in 0..m.ncols() {
            let m_col = m.column(col);
            let mut out_col = out.column_mut(col);
            for r in 0..self.n_rows {
                let range = self.row_offsets[r]..self.row_offsets[r + 1];
                let x = m_col[r];
                if x != 0.0 {
                    for k in range {
                        out_col[self.col_indices[k]] += values[k] * x;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product into a caller-provided buffer.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(out.len(), self.n_rows);
        for r in 0..self.n_rows {
            let range = self.row_offsets[r]..self.row_offsets[r + 1];
            let mut acc = 0.0;
            for k in range {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            out[r] = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.iter() {
            d[(r, c)] = v;
        }
        d
    }
}
