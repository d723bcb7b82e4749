use std::time::Instant;

use crate::linalg::{dot, DenseCholesky, DenseLdlt, DenseMatrix, Inertia, LinalgError, SparseCholesky, SymSparse, Triplets, DEFAULT_PIVOT_TOL};

use super::constraints::{ConstraintKind, ConstraintRow};
use super::BddcError;

/// Factorization of the local saddle-point matrix `[[A, Cᵀ], [C, 0]]`.
///
/// The matrix is handled through the congruent form `[[K, Cᵀ], [C, 0]]`
/// with `K = A + Cᵀ D C`, which has the same solutions on `C u = 0`. `K` is
/// factored by sparse Cholesky and the constraint block by the dense Schur
/// complement `G = C K⁻¹ Cᵀ`.
#[derive(Debug, Clone)]
pub struct SaddleFactor {
    n: usize,
    k: SparseCholesky,
    rows: Vec<Vec<(usize, f64)>>,
    /// Columns of `Y = K⁻¹ Cᵀ`.
    y: Vec<Vec<f64>>,
    g: Option<DenseCholesky>,
    g_inv: DenseMatrix,
    penalty: Vec<f64>,
    pub inertia: Inertia,
    pub factor_seconds: f64,
    pub solve_seconds: f64,
}

fn penalized(a: &SymSparse, rows: &[Vec<(usize, f64)>], penalty: &[f64]) -> SymSparse {
    if penalty.iter().all(|&d| d == 0.0) {
        return a.clone();
    }
    let n = a.dim();
    let extra: usize = rows.iter().zip(penalty).filter(|(_, &d)| d != 0.0).map(|(r, _)| r.len() * (r.len() + 1) / 2).sum();
    let mut t = Triplets::with_capacity(n, n, a.nnz_lower() + extra);
    for i in 0..n {
        for (j, v) in a.lower_row(i) {
            t.push(i, j, v);
        }
    }
    for (r, &d) in rows.iter().zip(penalty) {
        if d == 0.0 {
            continue;
        }
        for &(i, vi) in r {
            for &(j, vj) in r {
                if j <= i {
                    t.push(i, j, d * vi * vj);
                }
            }
        }
    }
    t.to_csr().to_sym_lower()
}

/// Penalty weights on a few rows of every floating component: all point rows,
/// then the smallest averages until the kernel dimension is reached.
fn select_penalty(a_diag: &[f64], rows: &[ConstraintRow], floating: &[bool], kernel_dim: usize, all: bool) -> Vec<f64> {
    let weight = |r: &ConstraintRow| r.entries.iter().map(|&(i, _)| a_diag[i].abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut pen = vec![0.0; rows.len()];
    if all {
        for (p, r) in pen.iter_mut().zip(rows) {
            *p = weight(r);
        }
        return pen;
    }
    for (k, &fl) in floating.iter().enumerate() {
        if !fl {
            continue;
        }
        let mut idx: Vec<usize> = (0..rows.len()).filter(|&j| rows[j].component == k).collect();
        idx.sort_by_key(|&j| (rows[j].kind != ConstraintKind::Corner, rows[j].entries.len(), j));
        for (taken, j) in idx.into_iter().enumerate() {
            if rows[j].entries.len() > 1 && taken >= kernel_dim {
                break;
            }
            pen[j] = weight(&rows[j]);
        }
    }
    pen
}

/// Factor the saddle-point problem of subdomain `subdomain`.
///
/// `dof_component` and `floating` describe the subdomain components; a
/// component left with a kernel is reported by name.
pub fn factor_saddle(
    a: &SymSparse,
    rows: &[ConstraintRow],
    dof_component: &[usize],
    floating: &[bool],
    kernel_dim: usize,
    subdomain: usize,
) -> Result<SaddleFactor, BddcError> {
    let start = Instant::now();
    let n = a.dim();
    let m = rows.len();
    let diag = a.diagonal();
    let crow: Vec<Vec<(usize, f64)>> = rows.iter().map(|r| r.entries.clone()).collect();
    let mut failure = 0;
    let mut factored = None;
    for all in [false, true] {
        let penalty = select_penalty(&diag, rows, floating, kernel_dim, all);
        let k = penalized(a, &crow, &penalty);
        match SparseCholesky::new(&k, DEFAULT_PIVOT_TOL) {
            Ok(f) => {
                factored = Some((f, penalty));
                break;
            }
            Err(LinalgError::NotPositiveDefinite { index, .. }) => failure = index,
            Err(_) => failure = 0,
        }
        if m == 0 {
            break;
        }
    }
    let (k, penalty) = factored.ok_or_else(|| BddcError::Singular { subdomain, component: dof_component.get(failure).copied().unwrap_or(0) })?;
    let factor_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let y: Vec<Vec<f64>> = crow
        .iter()
        .map(|r| {
            let mut v = vec![0.0; n];
            for &(i, c) in r {
                v[i] = c;
            }
            k.solve_in_place(&mut v);
            v
        })
        .collect();
    let mut g = DenseMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            g.set(i, j, crow[i].iter().map(|&(l, c)| c * y[j][l]).sum());
        }
    }
    g.symmetrize();
    let mut neg = g.clone();
    neg.data.iter_mut().for_each(|v| *v = -*v);
    let sc_inertia = if m > 0 { DenseLdlt::new(&neg, 1e-12).map(|f| f.inertia()).unwrap_or_default() } else { Inertia::default() };
    if sc_inertia.negative != m {
        return Err(BddcError::DependentConstraints { subdomain, deficiency: m - sc_inertia.negative });
    }
    let (g_fac, g_inv) = if m > 0 {
        let f = DenseCholesky::new(&g, 1e-14).map_err(|_| BddcError::DependentConstraints { subdomain, deficiency: 1 })?;
        let mut inv = DenseMatrix::zeros(m, m);
        for j in 0..m {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            f.solve_in_place(&mut e);
            for i in 0..m {
                inv.set(i, j, e[i]);
            }
        }
        inv.symmetrize();
        (Some(f), inv)
    } else {
        (None, DenseMatrix::zeros(0, 0))
    };
    let solve_seconds = start.elapsed().as_secs_f64();
    let fac = SaddleFactor {
        n,
        k,
        rows: crow,
        y,
        g: g_fac,
        g_inv,
        penalty,
        inertia: Inertia { positive: n, negative: m, zero: 0 },
        factor_seconds,
        solve_seconds,
    };
    let defect = fac.constraint_defect();
    if defect > 1e-8 {
        return Err(BddcError::CoarseBasis { subdomain, defect });
    }
    Ok(fac)
}

impl SaddleFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_constraints(&self) -> usize {
        self.rows.len()
    }

    /// Solve `A u + Cᵀ λ = r`, `C u = 0`; returns `(u, λ)`. `λ` equals `Φᵀ r`.
    pub fn solve(&self, r: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut u = r.to_vec();
        self.k.solve_in_place(&mut u);
        let mut lambda: Vec<f64> = self.y.iter().map(|y| dot(y, r)).collect();
        if let Some(g) = &self.g {
            g.solve_in_place(&mut lambda);
        }
        for (y, &l) in self.y.iter().zip(&lambda) {
            for (ui, yi) in u.iter_mut().zip(y) {
                *ui -= l * yi;
            }
        }
        (u, lambda)
    }

    /// `Φ x` for local coarse values `x`.
    pub fn prolong(&self, x: &[f64]) -> Vec<f64> {
        let w = self.g_inv.matvec(x);
        let mut out = vec![0.0; self.n];
        for (y, &c) in self.y.iter().zip(&w) {
            for (o, yi) in out.iter_mut().zip(y) {
                *o += c * yi;
            }
        }
        out
    }

    /// Coarse basis `Φ` as a dense `n × m` matrix.
    pub fn coarse_basis(&self) -> DenseMatrix {
        let m = self.rows.len();
        let mut phi = DenseMatrix::zeros(self.n, m);
        for j in 0..m {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            let col = self.prolong(&e);
            for i in 0..self.n {
                phi.set(i, j, col[i]);
            }
        }
        phi
    }

    /// `S_Ci = −Λ = G⁻¹ − D`.
    pub fn local_coarse_matrix(&self) -> DenseMatrix {
        let mut s = self.g_inv.clone();
        for (j, &d) in self.penalty.iter().enumerate() {
            s.add(j, j, -d);
        }
        s
    }

    /// `max |C Φ − I|`.
    pub fn constraint_defect(&self) -> f64 {
        let m = self.rows.len();
        let mut worst: f64 = 0.0;
        for j in 0..m {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            let col = self.prolong(&e);
            for (i, r) in self.rows.iter().enumerate() {
                let v: f64 = r.iter().map(|&(l, c)| c * col[l]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        worst
    }
}
