//! Compressed sparse row matrices with canonical (row, column) ordering.

use alloc::vec;
use alloc::vec::Vec;

use crate::dense::DenseMatrix;
use crate::error::{check_dim, Error, Result};

/// Sparse matrix in compressed row form. Entries within a row are sorted by
/// column and unique, so iteration yields triplets in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, row_ptr: vec![0; rows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut t = Vec::with_capacity(n);
        for (i, v) in d.iter().enumerate() {
            t.push((i, i, *v));
        }
        Self::from_triplets(n, n, t).expect("diagonal entries are in range")
    }

    /// Builds a matrix from unordered triplets; duplicates are summed and
    /// entries that sum to exactly zero are dropped.
    pub fn from_triplets(rows: usize, cols: usize, mut t: Vec<(usize, usize, f64)>) -> Result<Self> {
        if cols > u32::MAX as usize {
            return Err(Error::TooLarge { size: cols, limit: u32::MAX as usize, what: "sparse column count" });
        }
        for &(i, j, _) in &t {
            if i >= rows || j >= cols {
                return Err(Error::DimensionMismatch {
                    expected: if i >= rows { rows } else { cols },
                    found: if i >= rows { i } else { j },
                    context: "SparseMatrix::from_triplets index",
                });
            }
        }
        t.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(t.len());
        let mut values = Vec::with_capacity(t.len());
        let mut k = 0;
        while k < t.len() {
            let (i, j, mut v) = t[k];
            k += 1;
            while k < t.len() && t[k].0 == i && t[k].1 == j {
                v += t[k].2;
                k += 1;
            }
            if v != 0.0 {
                row_ptr[i + 1] += 1;
                col_idx.push(j as u32);
                values.push(v);
            }
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self { rows, cols, row_ptr, col_idx, values })
    }

    /// Assembles a matrix row by row from already sorted, unique column lists.
    pub fn from_sorted_rows<I>(rows: usize, cols: usize, iter: I) -> Result<Self>
    where
        I: IntoIterator<Item = Vec<(u32, f64)>>,
    {
        let mut row_ptr = Vec::with_capacity(rows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in iter {
            let mut last: Option<u32> = None;
            for (j, v) in r {
                if (j as usize) >= cols || last.is_some_and(|l| l >= j) {
                    return Err(Error::Network("row entries must be sorted, unique and in range".into()));
                }
                last = Some(j);
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        check_dim(rows, row_ptr.len() - 1, "SparseMatrix::from_sorted_rows")?;
        Ok(Self { rows, cols, row_ptr, col_idx, values })
    }

    /// Raw constructor used by deserializers; validates structure.
    pub fn from_csr(rows: usize, cols: usize, row_ptr: Vec<usize>, col_idx: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        check_dim(rows + 1, row_ptr.len(), "SparseMatrix::from_csr row_ptr")?;
        check_dim(col_idx.len(), values.len(), "SparseMatrix::from_csr values")?;
        if row_ptr[0] != 0 || row_ptr[rows] != col_idx.len() {
            return Err(Error::Network("malformed row pointer".into()));
        }
        for i in 0..rows {
            if row_ptr[i] > row_ptr[i + 1] {
                return Err(Error::Network("row pointer not monotone".into()));
            }
            let r = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if r.windows(2).any(|w| w[0] >= w[1]) || r.iter().any(|&j| j as usize >= cols) {
                return Err(Error::Network("row columns not sorted or out of range".into()));
            }
        }
        Ok(Self { rows, cols, row_ptr, col_idx, values })
    }

    pub fn from_dense(a: &DenseMatrix, drop_tol: f64) -> Self {
        let mut t = Vec::new();
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                let v = a.get(i, j);
                if crate::dense::abs(v) > drop_tol {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(a.rows(), a.cols(), t).expect("indices from a dense matrix are in range")
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of stored entries (all nonzero by construction unless built raw).
    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Number of stored entries that are nonzero.
    pub fn count_nonzero(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        match c.binary_search(&(j as u32)) {
            Ok(k) => v[k],
            Err(_) => 0.0,
        }
    }

    /// Triplets in canonical row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(j, x)| (i, *j as usize, *x))
        })
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.triplets() {
            d.set(i, j, v);
        }
        d
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.cols, x.len(), "SparseMatrix::matvec")?;
        let mut y = vec![0.0; self.rows];
        self.matvec_into(x, &mut y);
        Ok(y)
    }

    /// `y = A x` without shape checks beyond debug assertions.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut s = 0.0;
            for k in a..b {
                s += self.values[k] * x[self.col_idx[k] as usize];
            }
            *yi = s;
        }
    }

    /// `y = Aᵀ x`.
    pub fn transpose_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.rows, x.len(), "SparseMatrix::transpose_matvec")?;
        let mut y = vec![0.0; self.cols];
        for (i, xi) in x.iter().enumerate() {
            let (c, v) = self.row(i);
            for (j, a) in c.iter().zip(v) {
                y[*j as usize] += a * xi;
            }
        }
        Ok(y)
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &j in &self.col_idx {
            counts[j as usize + 1] += 1;
        }
        for j in 0..self.cols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0u32; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.rows {
            let (c, v) = self.row(i);
            for (j, x) in c.iter().zip(v) {
                let p = next[*j as usize];
                col_idx[p] = i as u32;
                values[p] = *x;
                next[*j as usize] += 1;
            }
        }
        Self { rows: self.cols, cols: self.rows, row_ptr, col_idx, values }
    }

    /// Sparse product `self * other`; exact zeros produced by cancellation are dropped.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        check_dim(self.cols, other.rows, "SparseMatrix::matmul")?;
        let mut acc = vec![0.0f64; other.cols];
        let mut mark = vec![usize::MAX; other.cols];
        let mut touched: Vec<u32> = Vec::new();
        let mut row_ptr = Vec::with_capacity(self.rows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..self.rows {
            touched.clear();
            let (ca, va) = self.row(i);
            for (k, a) in ca.iter().zip(va) {
                let (cb, vb) = other.row(*k as usize);
                for (j, b) in cb.iter().zip(vb) {
                    let ju = *j as usize;
                    if mark[ju] != i {
                        mark[ju] = i;
                        acc[ju] = 0.0;
                        touched.push(*j);
                    }
                    acc[ju] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                let v = acc[j as usize];
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { rows: self.rows, cols: other.cols, row_ptr, col_idx, values })
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for v in &mut self.values {
            *v *= s;
        }
        self
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dim(self.rows, other.rows, "SparseMatrix::add rows")?;
        check_dim(self.cols, other.cols, "SparseMatrix::add cols")?;
        let t: Vec<_> = self.triplets().chain(other.triplets()).collect();
        Self::from_triplets(self.rows, self.cols, t)
    }

    /// Block-diagonal stacking.
    pub fn block_diag(blocks: &[&Self]) -> Result<Self> {
        let rows: usize = blocks.iter().map(|b| b.rows).sum();
        let cols: usize = blocks.iter().map(|b| b.cols).sum();
        if cols > u32::MAX as usize {
            return Err(Error::TooLarge { size: cols, limit: u32::MAX as usize, what: "block-diagonal columns" });
        }
        let nnz: usize = blocks.iter().map(|b| b.nnz()).sum();
        let mut row_ptr = Vec::with_capacity(rows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        let mut off = 0u32;
        for b in blocks {
            for i in 0..b.rows {
                let (c, v) = b.row(i);
                col_idx.extend(c.iter().map(|j| j + off));
                values.extend_from_slice(v);
                row_ptr.push(col_idx.len());
            }
            off += b.cols as u32;
        }
        Ok(Self { rows, cols, row_ptr, col_idx, values })
    }

    /// Vertical stacking of matrices with equal column counts.
    pub fn vstack(blocks: &[&Self]) -> Result<Self> {
        let cols = blocks.first().map_or(0, |b| b.cols);
        for b in blocks {
            check_dim(cols, b.cols, "SparseMatrix::vstack")?;
        }
        let rows: usize = blocks.iter().map(|b| b.rows).sum();
        let mut row_ptr = Vec::with_capacity(rows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for b in blocks {
            for i in 0..b.rows {
                let (c, v) = b.row(i);
                col_idx.extend_from_slice(c);
                values.extend_from_slice(v);
                row_ptr.push(col_idx.len());
            }
        }
        Ok(Self { rows, cols, row_ptr, col_idx, values })
    }

    /// Horizontal stacking of matrices with equal row counts.
    pub fn hstack(blocks: &[&Self]) -> Result<Self> {
        let rows = blocks.first().map_or(0, |b| b.rows);
        for b in blocks {
            check_dim(rows, b.rows, "SparseMatrix::hstack")?;
        }
        let cols: usize = blocks.iter().map(|b| b.cols).sum();
        let mut row_ptr = Vec::with_capacity(rows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..rows {
            let mut off = 0u32;
            for b in blocks {
                let (c, v) = b.row(i);
                col_idx.extend(c.iter().map(|j| j + off));
                values.extend_from_slice(v);
                off += b.cols as u32;
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { rows, cols, row_ptr, col_idx, values })
    }

    /// Submatrix with the given rows and columns (in the given order).
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Result<Self> {
        let mut map = vec![u32::MAX; self.cols];
        for (k, &j) in cols.iter().enumerate() {
            if j >= self.cols {
                return Err(Error::DimensionMismatch { expected: self.cols, found: j, context: "SparseMatrix::select" });
            }
            map[j] = k as u32;
        }
        let mut t = Vec::new();
        for (r, &i) in rows.iter().enumerate() {
            if i >= self.rows {
                return Err(Error::DimensionMismatch { expected: self.rows, found: i, context: "SparseMatrix::select" });
            }
            let (c, v) = self.row(i);
            for (j, x) in c.iter().zip(v) {
                let m = map[*j as usize];
                if m != u32::MAX {
                    t.push((r, m as usize, *x));
                }
            }
        }
        Self::from_triplets(rows.len(), cols.len(), t)
    }

    /// Maximum absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| if crate::dense::abs(*v) > m { crate::dense::abs(*v) } else { m })
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let t = self.transpose();
        let d = self.add(&t.scaled(-1.0)).expect("same shape");
        d.max_abs() <= tol * self.max_abs().max(f64::MIN_POSITIVE)
    }

    /// Spectral norm by power iteration on `AᵀA`.
    pub fn spectral_norm(&self) -> f64 {
        if self.rows == 0 || self.cols == 0 || self.nnz() == 0 {
            return 0.0;
        }
        let lam = crate::dense::power_iteration(self.cols, 1e-12, 20_000, |x| {
            let y = self.matvec(x).expect("shape");
            self.transpose_matvec(&y).expect("shape")
        });
        crate::dense::sqrt(lam.max(0.0))
    }
}
