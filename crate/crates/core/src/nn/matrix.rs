//! Column-wise flattening of matrices and the transpose permutation.

use alloc::vec::Vec;

use crate::dense::DenseMatrix;
use crate::error::{check_dim, Result};
use crate::sparse::SparseMatrix;

/// Column-wise flattening.
pub fn vec(m: &DenseMatrix) -> Vec<f64> {
    m.vec()
}

/// Inverse of [`vec`].
pub fn mat(v: &[f64], rows: usize, cols: usize) -> Result<DenseMatrix> {
    check_dim(rows * cols, v.len(), "mat")?;
    DenseMatrix::from_col_major(rows, cols, v)
}

/// Permutation `Q` with `Q vec(M) = vec(Mᵀ)` for `M` of shape `rows × cols`.
pub fn transpose_permutation(rows: usize, cols: usize) -> SparseMatrix {
    let n = rows * cols;
    let mut t = Vec::with_capacity(n);
    for i in 0..rows {
        for j in 0..cols {
            t.push((j + i * cols, i + j * rows, 1.0));
        }
    }
    SparseMatrix::from_triplets(n, n, t).expect("permutation indices are in range")
}

/// Index of the upper-triangular entry `(i, j)`, `i ≤ j`, in column-packed storage.
pub fn packed_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i + j * (j + 1) / 2
}

/// Length of the packed upper triangle of an `n × n` matrix.
pub fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}
