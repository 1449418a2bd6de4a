//! Compressed sparse row matrices and the handful of kernels the solvers need.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Marker for "no local index" in global-to-local maps.
pub const UNMAPPED: usize = usize::MAX;

/// Real sparse matrix in CSR layout with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

/// Accumulates `(row, col, value)` entries; duplicates are summed on `build`.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, capacity: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(capacity),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn build(self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.nrows, self.ncols, self.entries)
    }
}

impl CsrMatrix {
    /// Builds a matrix from unsorted triplets, summing duplicates. Explicit zeros
    /// produced by summation are kept so the pattern stays structural.
    pub fn from_triplets(nrows: usize, ncols: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
            symmetric: false,
        }
    }

    /// Assembles directly from raw CSR arrays. Column indices must be sorted per row.
    pub fn from_raw(
        nrows: usize,
        ncols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != nrows + 1 || indices.len() != values.len() || indptr[nrows] != indices.len() {
            return Err(Error::DimensionMismatch("inconsistent CSR arrays".into()));
        }
        for r in 0..nrows {
            let row = &indices[indptr[r]..indptr[r + 1]];
            if row.windows(2).any(|w| w[0] >= w[1]) || row.iter().any(|&c| c >= ncols) {
                return Err(Error::DimensionMismatch(format!("row {r} has unsorted or out-of-range columns")));
            }
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
            symmetric: false,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
            symmetric: true,
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut b = TripletBuilder::new(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    b.push(i, j, m[(i, j)]);
                }
            }
        }
        b.build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_symmetric_flagged(&self) -> bool {
        self.symmetric
    }

    /// Sets the symmetry flag. Callers vouch for the structure; `check_symmetry` verifies it.
    pub fn with_symmetry_flag(mut self, symmetric: bool) -> Self {
        self.symmetric = symmetric;
        self
    }

    /// Iterates `(col, value)` over row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.indptr[i]..self.indptr[i + 1];
        match self.indices[range.clone()].binary_search(&j) {
            Ok(p) => self.values[range.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in self.indptr[i]..self.indptr[i + 1] {
                acc += self.values[p] * x[self.indices[p]];
            }
            *yi = acc;
        }
    }

    /// Returns `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nrows);
        let mut acc = 0.0;
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for p in self.indptr[i]..self.indptr[i + 1] {
                row += self.values[p] * y[self.indices[p]];
            }
            acc += xi * row;
        }
        acc
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[p];
                let dst = next[c];
                indices[dst] = r;
                values[dst] = self.values[p];
                next[c] += 1;
            }
        }
        CsrMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr: counts,
            indices,
            values,
            symmetric: self.symmetric,
        }
    }

    /// Extracts `A[rows, cols]`; both index lists are in the caller's order.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut col_map = vec![UNMAPPED; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k;
        }
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for &r in rows {
            scratch.clear();
            for (c, v) in self.row(r) {
                let lc = col_map[c];
                if lc != UNMAPPED {
                    scratch.push((lc, v));
                }
            }
            scratch.sort_unstable_by_key(|e| e.0);
            for &(c, v) in &scratch {
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows: rows.len(),
            ncols: cols.len(),
            indptr,
            indices,
            values,
            symmetric: self.symmetric && rows == cols,
        }
    }

    /// `D_left A D_right` for diagonal scalings given as vectors.
    pub fn scale_rows_cols(&self, left: &[f64], right: &[f64]) -> CsrMatrix {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for p in out.indptr[i]..out.indptr[i + 1] {
                out.values[p] *= left[i] * right[out.indices[p]];
            }
        }
        out.symmetric = self.symmetric && left == right;
        out
    }

    /// `self + alpha * other`, union of both patterns.
    pub fn add_scaled(&self, other: &CsrMatrix, alpha: f64) -> Result<CsrMatrix> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} + {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        indptr.push(0);
        let mut indices = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(self.nnz().max(other.nnz()));
        for i in 0..self.nrows {
            let (mut p, pe) = (self.indptr[i], self.indptr[i + 1]);
            let (mut q, qe) = (other.indptr[i], other.indptr[i + 1]);
            while p < pe || q < qe {
                let cp = if p < pe { self.indices[p] } else { usize::MAX };
                let cq = if q < qe { other.indices[q] } else { usize::MAX };
                if cp == cq {
                    indices.push(cp);
                    values.push(self.values[p] + alpha * other.values[q]);
                    p += 1;
                    q += 1;
                } else if cp < cq {
                    indices.push(cp);
                    values.push(self.values[p]);
                    p += 1;
                } else {
                    indices.push(cq);
                    values.push(alpha * other.values[q]);
                    q += 1;
                }
            }
            indptr.push(indices.len());
        }
        Ok(CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            values,
            symmetric: self.symmetric && other.symmetric,
        })
    }

    /// Largest `|a_ij - a_ji|` relative to `max |a|`.
    pub fn symmetry_defect(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// Writes MatrixMarket coordinate format with 1-based indices.
    pub fn write_matrix_market(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                writeln!(w, "{} {} {:.16e}", i + 1, j + 1, v)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Writes one value per line with 17 significant digits.
pub fn write_vector_csv(path: impl AsRef<Path>, v: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for x in v {
        writeln!(w, "{x:.16e}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CsrMatrix {
        CsrMatrix::from_triplets(
            3,
            3,
            vec![(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (1, 2, -1.0), (2, 1, -1.0), (2, 2, 2.0), (2, 2, 1.0)],
        )
    }

    #[test]
    fn duplicates_are_summed() {
        let a = small();
        assert_eq!(a.nnz(), 7);
        assert_eq!(a.get(2, 2), 3.0);
        assert_eq!(a.get(0, 2), 0.0);
    }

    #[test]
    fn matvec_and_bilinear_agree_with_dense() {
        let a = small();
        let d = a.to_dense();
        let x = [1.0, -2.0, 0.5];
        let y = a.mul_vec(&x);
        let yd = &d * nalgebra::DVector::from_column_slice(&x);
        for i in 0..3 {
            assert!((y[i] - yd[i]).abs() < 1e-15);
        }
        assert!((a.bilinear(&x, &x) - dot(&x, &y)).abs() < 1e-14);
    }

    #[test]
    fn submatrix_and_transpose() {
        let a = small();
        let s = a.submatrix(&[2, 0], &[0, 2]);
        assert_eq!(s.to_dense(), DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 2.0, 0.0]));
        assert_eq!(a.transpose().to_dense(), a.to_dense().transpose());
        assert!(a.symmetry_defect() < 1e-15);
    }

    #[test]
    fn add_scaled_merges_patterns() {
        let a = small();
        let b = CsrMatrix::identity(3);
        let c = a.add_scaled(&b, -0.5).unwrap();
        assert_eq!(c.get(0, 0), 1.5);
        assert_eq!(c.get(1, 2), -1.0);
    }

    #[test]
    fn matrix_market_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.mtx");
        small().write_matrix_market(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "%%MatrixMarket matrix coordinate real general");
        assert_eq!(lines.next().unwrap(), "3 3 7");
        assert!(lines.next().unwrap().starts_with("1 1 2.0000000000000000e0"));
    }
}
