//! Compressed sparse row storage for superoperators.
//!
//! Liouvillians of the tripartite system have `total_dim²` rows (2500 at the
//! default truncation) but only a few dozen nonzeros per row, so they are kept
//! in CSR form and handed to a sparse LU when a linear solve is needed.

use faer::sparse::{SparseColMat, Triplet};
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
}

impl CsrMatrix {
    /// Assembles from unsorted triplets; duplicate entries are summed.
    /// Entries that sum to exactly zero are dropped.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, Complex64)>,
    ) -> Self {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<Complex64> = Vec::with_capacity(triplets.len());
        let mut rows: Vec<usize> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            debug_assert!(r < nrows && c < ncols);
            match (rows.last(), col_idx.last()) {
                (Some(&lr), Some(&lc)) if lr == r && lc == c => {
                    *values.last_mut().unwrap() += v;
                }
                _ => {
                    rows.push(r);
                    col_idx.push(c);
                    values.push(v);
                }
            }
        }
        let mut keep_cols = Vec::with_capacity(col_idx.len());
        let mut keep_vals = Vec::with_capacity(values.len());
        for ((r, c), v) in rows.into_iter().zip(col_idx).zip(values) {
            if v != Complex64::new(0.0, 0.0) {
                row_ptr[r + 1] += 1;
                keep_cols.push(c);
                keep_vals.push(v);
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx: keep_cols,
            values: keep_vals,
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, Vec::new())
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

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    /// `y = A x`
    pub fn mul_vec_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| {
                self.values[self.row_ptr[r]..self.row_ptr[r + 1]]
                    .iter()
                    .map(|v| v.norm())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn add(&self, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.nrows,
                got: other.nrows,
            });
        }
        let trip = self.triplets().chain(other.triplets()).collect();
        Ok(CsrMatrix::from_triplets(self.nrows, self.ncols, trip))
    }

    pub fn scale(&self, factor: Complex64) -> CsrMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    pub(crate) fn to_faer(&self) -> Result<SparseColMat<usize, faer::c64>> {
        let trip: Vec<Triplet<usize, usize, faer::c64>> = self
            .triplets()
            .map(|(r, c, v)| Triplet::new(r, c, faer::c64::new(v.re, v.im)))
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trip)
            .map_err(|e| Error::LinearSolver(format!("{e:?}")))
    }
}

/// Appends `scale * kron(a, b)` to `out`, skipping zero entries.
pub(crate) fn kron_into(
    a: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
    scale: Complex64,
    out: &mut Vec<(usize, usize, Complex64)>,
) {
    let (bn, bm) = b.shape();
    let b_nz: Vec<(usize, usize, Complex64)> = (0..bm)
        .flat_map(|j| (0..bn).map(move |i| (i, j)))
        .filter_map(|(i, j)| {
            let v = b[(i, j)];
            (v != Complex64::new(0.0, 0.0)).then_some((i, j, v))
        })
        .collect();
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let av = a[(i, j)];
            if av == Complex64::new(0.0, 0.0) {
                continue;
            }
            let f = scale * av;
            for &(bi, bj, bv) in &b_nz {
                out.push((i * bn + bi, j * bm + bj, f * bv));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn duplicates_are_summed_and_zeros_dropped() {
        let m = CsrMatrix::from_triplets(
            2,
            2,
            vec![(0, 1, c(1.0)), (0, 1, c(2.0)), (1, 0, c(1.0)), (1, 0, c(-1.0))],
        );
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.to_dense()[(0, 1)], c(3.0));
    }

    #[test]
    fn kron_matches_nalgebra() {
        let a = DMatrix::from_fn(2, 3, |i, j| Complex64::new(i as f64 + 1.0, j as f64));
        let b = DMatrix::from_fn(3, 2, |i, j| Complex64::new(j as f64 - i as f64, 0.5));
        let mut trip = Vec::new();
        kron_into(&a, &b, c(2.0), &mut trip);
        let m = CsrMatrix::from_triplets(6, 6, trip).to_dense();
        let expected = a.kronecker(&b) * c(2.0);
        assert!((m - expected).camax() < 1e-14);
    }

    #[test]
    fn matvec_matches_dense() {
        let d = DMatrix::from_fn(4, 4, |i, j| {
            if (i + j) % 3 == 0 {
                Complex64::new(i as f64, j as f64)
            } else {
                c(0.0)
            }
        });
        let trip = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, d[(i, j)]))
            .collect();
        let m = CsrMatrix::from_triplets(4, 4, trip);
        let x: Vec<Complex64> = (0..4).map(|k| Complex64::new(1.0, k as f64)).collect();
        let y = m.mul_vec(&x);
        let yd = &d * nalgebra::DVector::from_vec(x);
        for k in 0..4 {
            assert!((y[k] - yd[k]).norm() < 1e-14);
        }
    }
}
