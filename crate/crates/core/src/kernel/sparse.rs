use crate::error::{Error, Result};
use crate::scalar::Real;

/// Truncated kernel stored as row-sorted triples with a column view of the same entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseKernel<T> {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
    col_ptr: Vec<usize>,
    csc_row: Vec<usize>,
    csc_values: Vec<T>,
}

impl<T: Real> SparseKernel<T> {
    /// Builds from unsorted, duplicate-free triples. Values must be positive and finite.
    pub fn from_triples(rows: usize, cols: usize, mut triples: Vec<(usize, usize, T)>) -> Result<Self> {
        for &(r, c, v) in &triples {
            if r >= rows || c >= cols {
                return Err(Error::InvalidInput(format!("triple ({r}, {c}) outside {rows}x{cols}")));
            }
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::Numerical(format!("kernel entry ({r}, {c}) = {v} is not positive and finite")));
            }
        }
        triples.sort_unstable_by_key(|&(r, c, _)| (r, c));
        if triples.windows(2).any(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1) {
            return Err(Error::InvalidInput("duplicate kernel entry".into()));
        }
        let mut row_ptr = vec![0; rows + 1];
        for &(r, _, _) in &triples {
            row_ptr[r + 1] += 1;
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let col_idx: Vec<usize> = triples.iter().map(|t| t.1).collect();
        let values: Vec<T> = triples.iter().map(|t| t.2).collect();

        let mut col_ptr = vec![0; cols + 1];
        for &c in &col_idx {
            col_ptr[c + 1] += 1;
        }
        for c in 0..cols {
            col_ptr[c + 1] += col_ptr[c];
        }
        let mut fill = col_ptr.clone();
        let mut csc_row = vec![0; values.len()];
        let mut csc_values = vec![T::zero(); values.len()];
        for r in 0..rows {
            for p in row_ptr[r]..row_ptr[r + 1] {
                let c = col_idx[p];
                csc_row[fill[c]] = r;
                csc_values[fill[c]] = values[p];
                fill[c] += 1;
            }
        }
        Ok(SparseKernel { rows, cols, row_ptr, col_idx, values, col_ptr, csc_row, csc_values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn col(&self, c: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.col_ptr[c], self.col_ptr[c + 1]);
        (&self.csc_row[a..b], &self.csc_values[a..b])
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    pub fn col_nnz(&self, c: usize) -> usize {
        self.col_ptr[c + 1] - self.col_ptr[c]
    }

    pub fn mean_row_nnz(&self) -> f64 {
        self.nnz() as f64 / self.rows.max(1) as f64
    }

    /// Row-major sorted triples.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (cs, vs) = self.row(r);
            cs.iter().zip(vs).map(move |(&c, &v)| (r, c, v))
        })
    }

    /// K v; rows without entries give 0.
    pub fn apply(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols, "apply: vector length");
        let mut out = vec![T::zero(); self.rows];
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = T::zero();
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc = acc + self.values[p] * v[self.col_idx[p]];
            }
            *o = acc;
        }
        out
    }

    /// Kᵀ u.
    pub fn apply_transposed(&self, u: &[T]) -> Vec<T> {
        assert_eq!(u.len(), self.rows, "apply_transposed: vector length");
        let mut out = vec![T::zero(); self.cols];
        for (c, o) in out.iter_mut().enumerate() {
            let mut acc = T::zero();
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                acc = acc + self.csc_values[p] * u[self.csc_row[p]];
            }
            *o = acc;
        }
        out
    }

    /// diag(u)·K·diag(v) on the same support; entries that underflow to 0 are dropped.
    pub fn scaled(&self, u: &[T], v: &[T]) -> Self {
        let triples = self
            .triples()
            .map(|(r, c, k)| (r, c, u[r] * k * v[c]))
            .filter(|t| t.2 > T::zero())
            .collect();
        Self::from_triples(self.rows, self.cols, triples).expect("scaling keeps a valid kernel")
    }

    pub fn total(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &b| a + b)
    }

    pub fn row_sums(&self) -> Vec<T> {
        self.apply(&vec![T::one(); self.cols])
    }

    pub fn col_sums(&self) -> Vec<T> {
        self.apply_transposed(&vec![T::one(); self.rows])
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.row(r).0.binary_search(&c).is_ok()
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::zero(); self.cols]; self.rows];
        for (r, c, v) in self.triples() {
            out[r][c] = v;
        }
        out
    }

    /// First row with no entries, if any.
    pub fn empty_row(&self) -> Option<usize> {
        (0..self.rows).find(|&r| self.row_nnz(r) == 0)
    }

    pub fn empty_col(&self) -> Option<usize> {
        (0..self.cols).find(|&c| self.col_nnz(c) == 0)
    }
}
