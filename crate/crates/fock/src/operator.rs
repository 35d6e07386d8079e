//! Compressed-row sparse operators on the truncated Fock space.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{OracleError, Result};

/// Tolerance for the hermitian flag, relative to the largest entry.
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
    hermitian: bool,
}

impl SparseOperator {
    /// Sums duplicate `(row, col, value)` entries; exact zeros are dropped.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "entry ({r}, {c}) outside dimension {dim}");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut op = Self {
            dim,
            row_ptr,
            cols,
            vals,
            hermitian: false,
        };
        op.drop_zeros();
        op
    }

    fn drop_zeros(&mut self) {
        let zero = C64::new(0.0, 0.0);
        if self.vals.iter().all(|v| *v != zero) {
            return;
        }
        let mut row_ptr = vec![0usize; self.dim + 1];
        let mut cols = Vec::with_capacity(self.cols.len());
        let mut vals = Vec::with_capacity(self.vals.len());
        for r in 0..self.dim {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.vals[p] != zero {
                    cols.push(self.cols[p]);
                    vals.push(self.vals[p]);
                }
            }
            row_ptr[r + 1] = cols.len();
        }
        self.row_ptr = row_ptr;
        self.cols = cols;
        self.vals = vals;
    }

    /// Sets the hermitian flag after checking `O = O^*` entrywise.
    pub fn into_hermitian(mut self) -> Result<Self> {
        let res = self.adjoint_residual();
        let scale = self.max_abs().max(1.0);
        if res > HERMITIAN_TOLERANCE * scale {
            return Err(OracleError::InvalidParameter(format!(
                "operator is not hermitian: residual {res:.3e}"
            )));
        }
        self.hermitian = true;
        Ok(self)
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.cols[range.clone()].binary_search(&col) {
            Ok(p) => self.vals[range.start + p],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    /// `max |O_rc - conj(O_cr)|`.
    pub fn adjoint_residual(&self) -> f64 {
        let mut r: f64 = 0.0;
        for row in 0..self.dim {
            for p in self.row_ptr[row]..self.row_ptr[row + 1] {
                let col = self.cols[p];
                r = r.max((self.vals[p] - self.get(col, row).conj()).norm());
            }
        }
        r
    }

    /// Bound on the spectral radius from the largest absolute row sum.
    pub fn row_sum_bound(&self) -> f64 {
        (0..self.dim)
            .map(|r| {
                self.vals[self.row_ptr[r]..self.row_ptr[r + 1]]
                    .iter()
                    .map(|v| v.norm())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn apply_into(&self, x: &[C64], out: &mut [C64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(out.len(), self.dim);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[p] * x[self.cols[p]];
            }
            *o = acc;
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.dim];
        self.apply_into(x, &mut out);
        out
    }

    /// `<x, O x>`.
    pub fn expectation(&self, x: &[C64]) -> C64 {
        let ox = self.apply(x);
        x.iter().zip(&ox).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn to_dense(&self) -> Array2<C64> {
        let mut m = Array2::zeros((self.dim, self.dim));
        for r in 0..self.dim {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[[r, self.cols[p]]] += self.vals[p];
            }
        }
        m
    }
}
