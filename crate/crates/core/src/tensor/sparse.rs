use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use super::Real;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Build from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut sorted: Vec<(usize, usize, T)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<T> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) outside {nrows}x{ncols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c as u32);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n as u32).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn transpose(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                triplets.push((j, i, v));
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, &triplets)
    }

    pub fn to_dense(&self) -> Array2<T> {
        let mut out = Array2::zeros((self.nrows, self.ncols));
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                out[[i, j]] += v;
            }
        }
        out
    }

    pub fn cast<U: Real>(&self) -> CsrMatrix<U> {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    /// `self · x`. Rows are independent, so the parallel split does not
    /// change the result.
    pub fn mul_dense(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        assert_eq!(
            self.ncols,
            x.nrows(),
            "spmm shape mismatch: sparse {}x{} vs dense {:?}",
            self.nrows,
            self.ncols,
            x.dim()
        );
        let m = x.ncols();
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let mut out = vec![T::zero(); self.nrows * m];
        if m > 0 {
            out.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
                for (j, v) in self.row(i) {
                    let src = &xs[j * m..(j + 1) * m];
                    for (o, &s) in row.iter_mut().zip(src) {
                        *o += v * s;
                    }
                }
            });
        }
        Array2::from_shape_vec((self.nrows, m), out).expect("shape")
    }
}

/// A sparse matrix with its transpose precomputed for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator<T> {
    pub forward: CsrMatrix<T>,
    pub transpose: CsrMatrix<T>,
}

impl<T: Real> SparseOperator<T> {
    pub fn new(forward: CsrMatrix<T>) -> Self {
        let transpose = forward.transpose();
        SparseOperator { forward, transpose }
    }

    pub fn cast<U: Real>(&self) -> SparseOperator<U> {
        SparseOperator {
            forward: self.forward.cast(),
            transpose: self.transpose.cast(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_times_x_is_x() {
        let x = array![[1.0f64, 2.0], [3.0, 4.0], [5.0, 6.0]];
        assert_eq!(CsrMatrix::identity(3).mul_dense(x.view()), x);
    }

    #[test]
    fn matches_dense_product() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 2, 2.0f64), (1, 0, -1.0), (0, 0, 0.5), (0, 2, 1.0)]);
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        assert_eq!(a.mul_dense(x.view()), a.to_dense().dot(&x));
        assert_eq!(a.transpose().to_dense(), a.to_dense().t().to_owned());
        assert_eq!(a.to_dense()[[0, 2]], 3.0);
    }
}
