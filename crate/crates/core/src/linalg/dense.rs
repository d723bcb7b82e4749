use super::{LinalgError, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, data: vec![0.0; nrows * ncols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            assert_eq!(r.len(), ncols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { nrows, ncols, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.ncols + j] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.ncols + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, j)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec: dimension mismatch");
        (0..self.nrows)
            .map(|i| {
                let mut s = 0.0;
                for (a, b) in self.row(i).iter().zip(x) {
                    s += a * b;
                }
                s
            })
            .collect()
    }

    /// `Aᵀ x`
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows, "matvec_t: dimension mismatch");
        let mut y = vec![0.0; self.ncols];
        for i in 0..self.nrows {
            let xi = x[i];
            for (yj, a) in y.iter_mut().zip(self.row(i)) {
                *yj += a * xi;
            }
        }
        y
    }

    pub fn matmul(&self, b: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.ncols, b.nrows, "matmul: dimension mismatch");
        let mut c = DenseMatrix::zeros(self.nrows, b.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let brow = b.row(k);
                let crow = &mut c.data[i * b.ncols..(i + 1) * b.ncols];
                for (cv, bv) in crow.iter_mut().zip(brow) {
                    *cv += a * bv;
                }
            }
        }
        c
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Replace by `(A + Aᵀ)/2`.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for j in 0..i {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                self.set(i, j, v);
                self.set(j, i, v);
            }
        }
    }
}

/// Counts of positive, negative and zero eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

/// Dense `L Lᵀ`.
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    n: usize,
    l: Vec<f64>,
}

impl DenseCholesky {
    pub fn new(a: &DenseMatrix, pivot_tol: f64) -> Result<Self> {
        let n = a.nrows;
        if a.ncols != n {
            return Err(LinalgError::DimensionMismatch { expected: n, got: a.ncols });
        }
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > pivot_tol * a.get(j, j).abs()) || d <= 0.0 {
                return Err(LinalgError::NotPositiveDefinite { index: j, value: d });
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[i * n + k] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[derive(Debug, Clone, Copy)]
enum Pivot {
    One(f64),
    /// 2×2 block `[[a, b], [b, c]]` starting at this index.
    Two(f64, f64, f64),
    /// Second row of a 2×2 block.
    Cont,
}

/// Symmetric indefinite `P A Pᵀ = L D Lᵀ` with Bunch–Kaufman pivoting.
#[derive(Debug, Clone)]
pub struct DenseLdlt {
    n: usize,
    /// Unit lower factor, row-major, diagonal implicit.
    l: Vec<f64>,
    pivots: Vec<Pivot>,
    /// `perm[k]` = original index at position `k`.
    perm: Vec<usize>,
    zero_tol: f64,
}

impl DenseLdlt {
    pub fn new(a: &DenseMatrix, pivot_tol: f64) -> Result<Self> {
        let n = a.nrows;
        if a.ncols != n {
            return Err(LinalgError::DimensionMismatch { expected: n, got: a.ncols });
        }
        let alpha = (1.0 + 17f64.sqrt()) / 8.0;
        let zero_tol = pivot_tol * a.max_abs().max(f64::MIN_POSITIVE);
        let mut w = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut pivots = vec![Pivot::Cont; n];
        let idx = |i: usize, j: usize| i * n + j;

        let swap = |w: &mut Vec<f64>, perm: &mut Vec<usize>, i: usize, j: usize| {
            if i == j {
                return;
            }
            for c in 0..n {
                w.swap(idx(i, c), idx(j, c));
            }
            for r in 0..n {
                w.swap(idx(r, i), idx(r, j));
            }
            perm.swap(i, j);
        };

        let mut k = 0;
        while k < n {
            let akk = w[idx(k, k)].abs();
            let (mut lambda, mut r) = (0.0f64, k);
            for i in k + 1..n {
                let v = w[idx(i, k)].abs();
                if v > lambda {
                    lambda = v;
                    r = i;
                }
            }
            let mut two = false;
            if akk.max(lambda) <= zero_tol {
                // column already eliminated to round-off: zero pivot
            } else if akk >= alpha * lambda {
                // 1×1 at k
            } else {
                let mut sigma = 0.0f64;
                for j in k..n {
                    if j != r {
                        sigma = sigma.max(w[idx(r, j)].abs());
                    }
                }
                if akk * sigma >= alpha * lambda * lambda {
                    // 1×1 at k
                } else if w[idx(r, r)].abs() >= alpha * sigma {
                    swap(&mut w, &mut perm, k, r);
                } else {
                    swap(&mut w, &mut perm, k + 1, r);
                    two = true;
                }
            }

            if !two {
                let d = w[idx(k, k)];
                pivots[k] = Pivot::One(d);
                if d.abs() > zero_tol {
                    for i in k + 1..n {
                        w[idx(i, k)] /= d;
                    }
                    for i in k + 1..n {
                        let li = w[idx(i, k)];
                        if li == 0.0 {
                            continue;
                        }
                        for j in k + 1..=i {
                            let v = w[idx(i, j)] - li * d * w[idx(j, k)];
                            w[idx(i, j)] = v;
                            w[idx(j, i)] = v;
                        }
                    }
                } else {
                    for i in k + 1..n {
                        w[idx(i, k)] = 0.0;
                    }
                }
                k += 1;
            } else {
                let (a11, a21, a22) = (w[idx(k, k)], w[idx(k + 1, k)], w[idx(k + 1, k + 1)]);
                let det = a11 * a22 - a21 * a21;
                pivots[k] = Pivot::Two(a11, a21, a22);
                pivots[k + 1] = Pivot::Cont;
                for i in k + 2..n {
                    let (c1, c2) = (w[idx(i, k)], w[idx(i, k + 1)]);
                    w[idx(i, k)] = (c1 * a22 - c2 * a21) / det;
                    w[idx(i, k + 1)] = (c2 * a11 - c1 * a21) / det;
                }
                for i in k + 2..n {
                    let (l1, l2) = (w[idx(i, k)], w[idx(i, k + 1)]);
                    for j in k + 2..=i {
                        let (m1, m2) = (w[idx(j, k)], w[idx(j, k + 1)]);
                        // L D Lᵀ contribution
                        let dl1 = a11 * m1 + a21 * m2;
                        let dl2 = a21 * m1 + a22 * m2;
                        let v = w[idx(i, j)] - (l1 * dl1 + l2 * dl2);
                        w[idx(i, j)] = v;
                        w[idx(j, i)] = v;
                    }
                }
                w[idx(k + 1, k)] = 0.0;
                k += 2;
            }
        }
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                l[idx(i, j)] = w[idx(i, j)];
            }
        }
        Ok(Self { n, l, pivots, perm, zero_tol })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn two_by_two_pivots(&self) -> usize {
        self.pivots.iter().filter(|p| matches!(p, Pivot::Two(..))).count()
    }

    pub fn inertia(&self) -> Inertia {
        let mut out = Inertia::default();
        for p in &self.pivots {
            match *p {
                Pivot::One(d) => {
                    if d.abs() <= self.zero_tol {
                        out.zero += 1;
                    } else if d > 0.0 {
                        out.positive += 1;
                    } else {
                        out.negative += 1;
                    }
                }
                Pivot::Two(a, b, c) => {
                    let det = a * c - b * b;
                    if det < 0.0 {
                        out.positive += 1;
                        out.negative += 1;
                    } else if a + c > 0.0 {
                        out.positive += 2;
                    } else {
                        out.negative += 2;
                    }
                }
                Pivot::Cont => {}
            }
        }
        out
    }

    pub fn solve_in_place(&self, x: &mut [f64]) -> Result<()> {
        let n = self.n;
        if x.len() != n {
            return Err(LinalgError::DimensionMismatch { expected: n, got: x.len() });
        }
        let mut y: Vec<f64> = self.perm.iter().map(|&p| x[p]).collect();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s;
        }
        let mut k = 0;
        while k < n {
            match self.pivots[k] {
                Pivot::One(d) => {
                    if d.abs() <= self.zero_tol {
                        return Err(LinalgError::Singular { index: self.perm[k] });
                    }
                    y[k] /= d;
                    k += 1;
                }
                Pivot::Two(a, b, c) => {
                    let det = a * c - b * b;
                    let (u, v) = (y[k], y[k + 1]);
                    y[k] = (c * u - b * v) / det;
                    y[k + 1] = (a * v - b * u) / det;
                    k += 2;
                }
                Pivot::Cont => unreachable!("continuation pivot out of sequence"),
            }
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s;
        }
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }
}
