//! Compressed-row complex matrices.
//!
//! Hamiltonians here are star-shaped (each cavity couples to every fibre
//! mode) so they carry `O(N)` nonzeros in a `(2N + 9)`-dimensional space.
//! Propagation multiplies these against vectors and dense density matrices.

use nalgebra::{DMatrix, DVector};

use crate::hilbert::check_dim;
use crate::{Result, C64};

/// `(row, column, value)`.
pub type Triplet = (usize, usize, C64);

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<C64>,
}

impl SparseMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, row_ptr: vec![0; dim + 1], cols: Vec::new(), values: Vec::new() }
    }

    /// Builds from `(row, col, value)` entries; duplicates are summed and
    /// entries that end up exactly zero are dropped.
    pub fn from_triplets(dim: usize, mut entries: Vec<Triplet>) -> Self {
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<Triplet> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            assert!(r < dim && c < dim, "entry ({r}, {c}) outside {dim}x{dim}");
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|&(_, _, v)| v != C64::default());

        let mut row_ptr = vec![0; dim + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        let cols = merged.iter().map(|e| e.1).collect();
        let values = merged.iter().map(|e| e.2).collect();
        Self { dim, row_ptr, cols, values }
    }

    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        let mut entries = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != C64::default() {
                    entries.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.cols[range.clone()].binary_search(&col) {
            Ok(k) => self.values[range.start + k],
            Err(_) => C64::default(),
        }
    }

    /// Iterates over stored `(row, col, value)` entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.values[k]))
        })
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.cols[k], self.values[k]))
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.iter() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.dim, self.iter().map(|(r, c, v)| (c, r, v.conj())).collect())
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self::from_triplets(self.dim, self.iter().map(|(r, c, v)| (r, c, v * factor)).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self::from_triplets(self.dim, self.iter().chain(other.iter()).collect())
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut entries = Vec::new();
        for (r, k, a) in self.iter() {
            for (c, b) in other.row(k) {
                entries.push((r, c, a * b));
            }
        }
        Self::from_triplets(self.dim, entries)
    }

    /// Restriction to the square block `range x range`, reindexed from zero.
    pub fn block(&self, range: std::ops::Range<usize>) -> Self {
        let entries = self
            .iter()
            .filter(|(r, c, _)| range.contains(r) && range.contains(c))
            .map(|(r, c, v)| (r - range.start, c - range.start, v))
            .collect();
        Self::from_triplets(range.len(), entries)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.iter().all(|(r, c, v)| (v - self.get(c, r).conj()).norm() <= tol)
            && self.adjoint().iter().all(|(r, c, v)| (v - self.get(r, c)).norm() <= tol)
    }

    /// `y = factor * self * x`, overwriting `y`.
    #[inline]
    pub fn apply_scaled(&self, factor: C64, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = C64::default();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.cols[k]];
            }
            *out = factor * acc;
        }
    }

    pub fn mul_vec(&self, x: &DVector<C64>) -> Result<DVector<C64>> {
        check_dim("sparse matrix-vector product", self.dim, x.len())?;
        let mut y = DVector::zeros(self.dim);
        self.apply_scaled(C64::new(1.0, 0.0), x.as_slice(), y.as_mut_slice());
        Ok(y)
    }

    /// `out += factor * self * m` for a column-major dense `m` of the same
    /// dimension.
    pub(crate) fn left_mul_acc(&self, factor: C64, m: &[C64], out: &mut [C64]) {
        let d = self.dim;
        for col in 0..d {
            let src = &m[col * d..(col + 1) * d];
            let dst = &mut out[col * d..(col + 1) * d];
            for (r, o) in dst.iter_mut().enumerate() {
                let mut acc = C64::default();
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += self.values[k] * src[self.cols[k]];
                }
                *o += factor * acc;
            }
        }
    }

    /// `out += factor * m * self` for a column-major dense `m`.
    pub(crate) fn right_mul_acc(&self, factor: C64, m: &[C64], out: &mut [C64]) {
        let d = self.dim;
        for (k, c, v) in self.iter() {
            // column c of the result picks up v times column k of m
            let f = factor * v;
            let (src, dst) = (k * d, c * d);
            for i in 0..d {
                out[dst + i] += f * m[src + i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseMatrix {
        SparseMatrix::from_triplets(
            3,
            vec![
                (0, 1, C64::new(1.0, 2.0)),
                (2, 0, C64::new(-1.0, 0.5)),
                (1, 1, C64::new(3.0, 0.0)),
                (0, 1, C64::new(1.0, 0.0)),
                (2, 2, C64::new(0.0, 0.0)),
            ],
        )
    }

    #[test]
    fn duplicates_are_summed_and_zeros_dropped() {
        let m = sample();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 1), C64::new(2.0, 2.0));
        assert_eq!(m.get(2, 2), C64::default());
    }

    #[test]
    fn products_match_dense() {
        let m = sample();
        let dense = m.to_dense();
        let x = DVector::from_vec(vec![C64::new(1.0, -1.0), C64::new(0.5, 0.0), C64::new(0.0, 2.0)]);
        assert!((m.mul_vec(&x).unwrap() - &dense * &x).norm() < 1e-15);

        let rho = DMatrix::from_fn(3, 3, |i, j| C64::new(i as f64 - j as f64, (i * j) as f64));
        let mut left = vec![C64::default(); 9];
        m.left_mul_acc(C64::new(0.0, -1.0), rho.as_slice(), &mut left);
        let expected = &dense * &rho * C64::new(0.0, -1.0);
        assert!((DMatrix::from_column_slice(3, 3, &left) - expected).norm() < 1e-14);

        let mut right = vec![C64::default(); 9];
        m.right_mul_acc(C64::new(2.0, 0.0), rho.as_slice(), &mut right);
        let expected = &rho * &dense * C64::new(2.0, 0.0);
        assert!((DMatrix::from_column_slice(3, 3, &right) - expected).norm() < 1e-14);

        assert!((m.matmul(&m.adjoint()).to_dense() - &dense * dense.adjoint()).norm() < 1e-14);
    }

    #[test]
    fn blocks_and_hermiticity() {
        let m = sample();
        let h = m.add(&m.adjoint());
        assert!(h.is_hermitian(0.0));
        assert!(!m.is_hermitian(1e-12));
        let b = h.block(1..3);
        assert_eq!(b.dim(), 2);
        assert_eq!(b.get(0, 0), C64::new(6.0, 0.0));
        assert_eq!(b.get(1, 1), C64::default());
    }
}
