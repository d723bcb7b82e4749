//! Up-looking sparse Cholesky with a nested-dissection ordering.

use super::ordering::{nested_dissection, Graph};
use super::sparse::SymSparse;
use super::{LinalgError, Result};

#[derive(Debug, Clone)]
pub struct SparseCholesky {
    n: usize,
    /// `perm[k]` = original index at position `k`.
    perm: Vec<usize>,
    /// Column-compressed `L`; the first entry of each column is the diagonal.
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
}

fn etree(c: &SymSparse) -> Vec<usize> {
    let n = c.dim();
    let mut parent = vec![usize::MAX; n];
    let mut ancestor = vec![usize::MAX; n];
    for k in 0..n {
        for (j, _) in c.lower_row(k) {
            let mut i = j;
            while i != usize::MAX && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == usize::MAX {
                    parent[i] = k;
                    break;
                }
                i = next;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of `L` (excluding the diagonal) in topological order.
fn ereach(c: &SymSparse, k: usize, parent: &[usize], mark: &mut [usize], stack: &mut Vec<usize>) {
    stack.clear();
    mark[k] = k;
    let mut path = Vec::new();
    for (j, _) in c.lower_row(k) {
        if j >= k {
            continue;
        }
        let mut i = j;
        path.clear();
        while mark[i] != k {
            path.push(i);
            mark[i] = k;
            i = parent[i];
        }
        // deeper nodes first once reversed at the end
        while let Some(v) = path.pop() {
            stack.push(v);
        }
    }
    // stack holds each path root-most first; reversing the whole stack
    // gives a valid topological order for the numeric update
    stack.reverse();
}

impl SparseCholesky {
    /// Factor `a` (lower storage). Pivots at or below `pivot_tol * |a_kk|`
    /// are rejected.
    pub fn new(a: &SymSparse, pivot_tol: f64) -> Result<Self> {
        let perm = nested_dissection(&Graph::from_sym(a));
        Self::with_ordering(a, perm, pivot_tol)
    }

    pub fn with_ordering(a: &SymSparse, perm: Vec<usize>, pivot_tol: f64) -> Result<Self> {
        let n = a.dim();
        if perm.len() != n {
            return Err(LinalgError::DimensionMismatch { expected: n, got: perm.len() });
        }
        let c = a.permute(&perm);
        let parent = etree(&c);
        let mut mark = vec![usize::MAX; n];
        let mut stack = Vec::new();

        // symbolic: column counts
        let mut counts = vec![1usize; n];
        for k in 0..n {
            ereach(&c, k, &parent, &mut mark, &mut stack);
            for &j in &stack {
                counts[j] += 1;
            }
        }
        let mut lp = vec![0usize; n + 1];
        for j in 0..n {
            lp[j + 1] = lp[j] + counts[j];
        }
        let nnz = lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0; nnz];
        let mut fill = lp.clone();
        let mut x = vec![0.0; n];
        mark.iter_mut().for_each(|m| *m = usize::MAX);

        for k in 0..n {
            ereach(&c, k, &parent, &mut mark, &mut stack);
            let mut akk = 0.0;
            for (j, v) in c.lower_row(k) {
                if j == k {
                    akk += v;
                } else {
                    x[j] += v;
                }
            }
            let mut d = akk;
            for &j in stack.iter() {
                let lkj = x[j] / lx[lp[j]];
                x[j] = 0.0;
                for p in lp[j] + 1..fill[j] {
                    x[li[p]] -= lx[p] * lkj;
                }
                d -= lkj * lkj;
                li[fill[j]] = k;
                lx[fill[j]] = lkj;
                fill[j] += 1;
            }
            if !(d > pivot_tol * akk.abs()) || d <= 0.0 {
                return Err(LinalgError::NotPositiveDefinite { index: perm[k], value: d });
            }
            li[fill[k]] = k;
            lx[fill[k]] = d.sqrt();
            fill[k] += 1;
        }
        Ok(Self { n, perm, lp, li, lx })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_l(&self) -> usize {
        self.lx.len()
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for j in 0..n {
            let yj = y[j] / self.lx[self.lp[j]];
            y[j] = yj;
            for p in self.lp[j] + 1..self.lp[j + 1] {
                y[self.li[p]] -= self.lx[p] * yj;
            }
        }
        for j in (0..n).rev() {
            let mut s = y[j];
            for p in self.lp[j] + 1..self.lp[j + 1] {
                s -= self.lx[p] * y[self.li[p]];
            }
            y[j] = s / self.lx[self.lp[j]];
        }
        for (k, &p) in self.perm.iter().enumerate() {
            b[p] = y[k];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, Triplets};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, density: f64, seed: u64) -> SymSparse {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Triplets::new(n, n);
        let mut rowsum = vec![0.0; n];
        for i in 0..n {
            for j in 0..i {
                if rng.gen::<f64>() < density {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    t.push(i, j, v);
                    rowsum[i] += v.abs();
                    rowsum[j] += v.abs();
                }
            }
        }
        for i in 0..n {
            t.push(i, i, rowsum[i] + 0.5);
        }
        t.to_csr().to_sym_lower()
    }

    #[test]
    fn etree_pattern_matches_dense_fill() {
        let a = random_spd(40, 0.08, 3);
        let f = SparseCholesky::with_ordering(&a, (0..40).collect(), 1e-14).unwrap();
        // dense oracle factor
        let d = a.to_dense();
        let dc = crate::linalg::DenseCholesky::new(&d, 1e-14).unwrap();
        let b: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let x1 = f.solve(&b);
        let x2 = dc.solve(&b);
        for (u, v) in x1.iter().zip(&x2) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn fifty_by_fifty_many_rhs() {
        let a = random_spd(50, 0.2, 11);
        let f = SparseCholesky::new(&a, 1e-14).unwrap();
        let ones = vec![1.0; 50];
        for r in 0..10 {
            let mut b = a.spmv(&ones).unwrap();
            b.iter_mut().enumerate().for_each(|(i, v)| *v += (r * i) as f64 * 1e-3);
            let x = f.solve(&b);
            let ax = a.spmv(&x).unwrap();
            let res: Vec<f64> = ax.iter().zip(&b).map(|(p, q)| p - q).collect();
            assert!(dot(&res, &res).sqrt() <= 1e-8 * dot(&b, &b).sqrt());
        }
    }

    #[test]
    fn rejects_indefinite() {
        let mut t = Triplets::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(1, 0, 2.0);
        t.push(1, 1, 1.0);
        let a = t.to_csr().to_sym_lower();
        assert!(matches!(SparseCholesky::new(&a, 1e-12), Err(LinalgError::NotPositiveDefinite { .. })));
    }

    proptest! {
        #[test]
        fn solve_recovers_ones(n in 2usize..120, seed in 0u64..1000, dens in 0.01f64..0.3) {
            let a = random_spd(n, dens, seed);
            let f = SparseCholesky::new(&a, 1e-14).unwrap();
            let b = a.spmv(&vec![1.0; n]).unwrap();
            let x = f.solve(&b);
            for v in x {
                prop_assert!((v - 1.0).abs() < 1e-8);
            }
        }
    }
}
