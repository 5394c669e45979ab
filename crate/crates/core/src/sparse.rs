//! Compressed sparse row matrices used for propagation, assignment, and
//! coarsening operators.

use std::sync::OnceLock;

use ndarray::{Array2, ArrayView2};

use crate::Scalar;

/// Row-major sparse matrix with sorted column indices per row.
#[derive(Debug)]
pub struct CsrMatrix<S> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<S>,
    transposed: OnceLock<Box<CsrMatrix<S>>>,
}

impl<S: Clone> Clone for CsrMatrix<S> {
    fn clone(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self.values.clone(),
            transposed: OnceLock::new(),
        }
    }
}

impl<S: Scalar> CsrMatrix<S> {
    /// Builds from raw CSR arrays. Column indices in each row must be sorted
    /// and unique; this is checked in debug builds only.
    pub fn from_raw(rows: usize, cols: usize, indptr: Vec<usize>, indices: Vec<usize>, values: Vec<S>) -> Self {
        assert_eq!(indptr.len(), rows + 1);
        assert_eq!(indices.len(), values.len());
        debug_assert!(indptr.windows(2).all(|w| w[0] <= w[1]));
        debug_assert!((0..rows).all(|r| {
            let row = &indices[indptr[r]..indptr[r + 1]];
            row.windows(2).all(|w| w[0] < w[1]) && row.iter().all(|&c| c < cols)
        }));
        Self {
            rows,
            cols,
            indptr,
            indices,
            values,
            transposed: OnceLock::new(),
        }
    }

    /// Builds from (row, col, value) triplets; duplicates are summed.
    /// Explicit zeros produced by summation are kept.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, S)>) -> Self {
        triplets.sort_unstable_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<S> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet ({r},{c}) outside {rows}x{cols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indptr[r + 1] += 1;
                indices.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Self::from_raw(rows, cols, indptr, indices, values)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_raw(n, n, (0..=n).collect(), (0..n).collect(), vec![S::one(); n])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    /// Iterates `(col, value)` over row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, S)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// Entry lookup by binary search; zero when absent.
    pub fn get(&self, r: usize, c: usize) -> S {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => S::zero(),
        }
    }

    pub fn matvec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// Sparse-dense product `self · x`.
    pub fn spmm(&self, x: ArrayView2<'_, S>) -> Array2<S> {
        assert_eq!(x.nrows(), self.cols, "spmm inner dimension");
        let mut out = Array2::zeros((self.rows, x.ncols()));
        for (r, mut out_row) in out.rows_mut().into_iter().enumerate() {
            for (c, v) in self.row(r) {
                out_row.scaled_add(v, &x.row(c));
            }
        }
        out
    }

    /// Transpose, computed once and cached.
    pub fn transpose(&self) -> &CsrMatrix<S> {
        self.transposed.get_or_init(|| {
            let mut counts = vec![0usize; self.cols + 1];
            for &c in &self.indices {
                counts[c + 1] += 1;
            }
            for c in 0..self.cols {
                counts[c + 1] += counts[c];
            }
            let indptr = counts.clone();
            let mut cursor = counts;
            let mut indices = vec![0usize; self.nnz()];
            let mut values = vec![S::zero(); self.nnz()];
            for r in 0..self.rows {
                for (c, v) in self.row(r) {
                    let slot = cursor[c];
                    indices[slot] = r;
                    values[slot] = v;
                    cursor[c] += 1;
                }
            }
            Box::new(CsrMatrix::from_raw(self.cols, self.rows, indptr, indices, values))
        })
    }

    pub fn to_dense(&self) -> Array2<S> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out[[r, c]] += v;
            }
        }
        out
    }

    /// Sum of all stored values.
    pub fn sum(&self) -> S {
        self.values.iter().copied().sum()
    }

    /// Returns a copy with every value multiplied by `factor`.
    pub fn scaled(&self, factor: S) -> Self {
        Self::from_raw(
            self.rows,
            self.cols,
            self.indptr.clone(),
            self.indices.clone(),
            self.values.iter().map(|&v| v * factor).collect(),
        )
    }

    /// Drops the diagonal and any explicit zeros.
    pub fn without_diagonal(&self) -> Self {
        let mut indptr = Vec::with_capacity(self.rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                if c != r && v != S::zero() {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self::from_raw(self.rows, self.cols, indptr, indices, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let m = CsrMatrix::from_triplets(2, 3, vec![(1, 2, 1.0), (0, 1, 2.0), (1, 2, 3.0), (1, 0, 1.0)]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.to_dense(), array![[0.0, 2.0, 0.0], [1.0, 0.0, 4.0]]);
    }

    #[test]
    fn transpose_matches_dense() {
        let m = CsrMatrix::from_triplets(2, 3, vec![(0, 2, 1.5), (1, 0, -2.0), (1, 1, 3.0)]);
        assert_eq!(m.transpose().to_dense(), m.to_dense().t().to_owned());
    }

    #[test]
    fn spmm_matches_dense_product() {
        let m = CsrMatrix::from_triplets(2, 3, vec![(0, 0, 1.0), (0, 2, 2.0), (1, 1, -1.0)]);
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        assert_eq!(m.spmm(x.view()), m.to_dense().dot(&x));
        assert_eq!(m.matvec(&[1.0, 1.0, 1.0]), vec![3.0, -1.0]);
    }
}
