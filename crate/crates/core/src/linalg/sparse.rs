use super::dense::DenseMatrix;
use super::{LinalgError, Result};

/// Coordinate-format accumulator. Duplicates are summed on conversion.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols);
        self.entries.push((i, j, v));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted conversion; summation of duplicates happens in insertion order
    /// within each (row, col) so results do not depend on sort stability.
    pub fn to_csr(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.nrows + 1];
        for &(i, _, _) in &self.entries {
            counts[i + 1] += 1;
        }
        for i in 0..self.nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; self.entries.len()];
        let mut vals = vec![0.0; self.entries.len()];
        for &(i, j, v) in &self.entries {
            let p = next[i];
            cols[p] = j;
            vals[p] = v;
            next[i] += 1;
        }
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values = Vec::with_capacity(self.entries.len());
        row_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for i in 0..self.nrows {
            order.clear();
            order.extend(counts[i]..counts[i + 1]);
            // stable: equal columns keep insertion order
            order.sort_by_key(|&p| cols[p]);
            let mut last: Option<usize> = None;
            for &p in &order {
                if last == Some(cols[p]) {
                    *values.last_mut().unwrap() += vals[p];
                } else {
                    col_idx.push(cols[p]);
                    values.push(vals[p]);
                    last = Some(cols[p]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, row_ptr, col_idx, values }
    }
}

/// General compressed-row matrix with full storage.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (self.col_idx[p], self.values[p]))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match r.binary_search(&j) {
            Ok(k) => self.values[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(LinalgError::DimensionMismatch { expected: self.ncols, got: x.len() });
        }
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// `y = A x` without dimension checks beyond debug assertions.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for i in 0..self.nrows {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[p] * x[self.col_idx[p]];
            }
            y[i] = s;
        }
    }

    /// `y = Aᵀ x`
    pub fn spmv_transpose_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.nrows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[p]] += self.values[p] * xi;
            }
        }
    }

    /// Extract `A[rows, cols]`; `col_map[j]` gives the new column of old
    /// column `j` (or `usize::MAX` to drop it).
    pub fn submatrix(&self, rows: &[usize], col_map: &[usize], ncols: usize) -> CsrMatrix {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut buf: Vec<(usize, f64)> = Vec::new();
        for &r in rows {
            buf.clear();
            for (c, v) in self.row(r) {
                let nc = col_map[c];
                if nc != usize::MAX {
                    buf.push((nc, v));
                }
            }
            buf.sort_by_key(|e| e.0);
            for &(c, v) in &buf {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { nrows: rows.len(), ncols, row_ptr, col_idx, values }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = Triplets::with_capacity(self.ncols, self.nrows, self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                t.push(j, i, v);
            }
        }
        t.to_csr()
    }

    /// Lower triangle (including diagonal) as a [`SymSparse`].
    pub fn to_sym_lower(&self) -> SymSparse {
        assert_eq!(self.nrows, self.ncols, "symmetric storage needs a square matrix");
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                if j <= i {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        SymSparse { n: self.nrows, row_ptr, col_idx, values }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d.set(i, j, d.get(i, j) + v);
            }
        }
        d
    }

    /// Largest `|A_ij − A_ji|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m = m.max((v - self.get(j, i)).abs());
            }
        }
        m
    }
}

/// Symmetric matrix holding its lower triangle row by row; column indices
/// strictly increase within a row and the diagonal, when stored, is last.
#[derive(Debug, Clone, PartialEq)]
pub struct SymSparse {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SymSparse {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_lower(&self) -> usize {
        self.values.len()
    }

    pub fn lower_row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (self.col_idx[p], self.values[p]))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.lower_row(i).filter(|&(j, _)| j == i).map(|e| e.1).sum())
            .collect()
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(LinalgError::DimensionMismatch { expected: self.n, got: x.len() });
        }
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            for (j, v) in self.lower_row(i) {
                y[i] += v * x[j];
                if j != i {
                    y[j] += v * x[i];
                }
            }
        }
        Ok(y)
    }

    pub fn to_full(&self) -> CsrMatrix {
        let mut t = Triplets::with_capacity(self.n, self.n, 2 * self.nnz_lower());
        for i in 0..self.n {
            for (j, v) in self.lower_row(i) {
                t.push(i, j, v);
                if j != i {
                    t.push(j, i, v);
                }
            }
        }
        t.to_csr()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.lower_row(i) {
                d.set(i, j, v);
                d.set(j, i, v);
            }
        }
        d
    }

    /// Symmetric permutation `P A Pᵀ` where `perm[k]` is the old index placed at `k`.
    pub fn permute(&self, perm: &[usize]) -> SymSparse {
        let mut inv = vec![0usize; self.n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let mut t = Triplets::with_capacity(self.n, self.n, self.nnz_lower());
        for i in 0..self.n {
            for (j, v) in self.lower_row(i) {
                let (a, b) = (inv[i], inv[j]);
                if a >= b {
                    t.push(a, b, v);
                } else {
                    t.push(b, a, v);
                }
            }
        }
        let c = t.to_csr();
        SymSparse { n: self.n, row_ptr: c.row_ptr, col_idx: c.col_idx, values: c.values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let mut t = Triplets::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(1, 0, 2.0);
        t.push(0, 0, 3.0);
        let a = t.to_csr();
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.get(1, 0), 2.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn identity_spmv() {
        let mut t = Triplets::new(3, 3);
        for i in 0..3 {
            t.push(i, i, 1.0);
        }
        let s = t.to_csr().to_sym_lower();
        assert_eq!(s.spmv(&[1.0, -2.0, 3.0]).unwrap(), vec![1.0, -2.0, 3.0]);
        assert!(s.spmv(&[1.0]).is_err());
    }

    #[test]
    fn sym_and_full_agree() {
        let mut t = Triplets::new(3, 3);
        for (i, j, v) in [(0, 0, 4.0), (1, 0, -1.0), (0, 1, -1.0), (1, 1, 4.0), (2, 1, 0.5), (1, 2, 0.5), (2, 2, 3.0)] {
            t.push(i, j, v);
        }
        let full = t.to_csr();
        let sym = full.to_sym_lower();
        let x = [1.0, 2.0, -1.0];
        assert_eq!(full.spmv(&x).unwrap(), sym.spmv(&x).unwrap());
        assert_eq!(sym.to_full(), full);
        let p = sym.permute(&[2, 0, 1]);
        let y = p.spmv(&[-1.0, 1.0, 2.0]).unwrap();
        let y0 = full.spmv(&x).unwrap();
        assert_eq!(y, vec![y0[2], y0[0], y0[1]]);
    }
}
