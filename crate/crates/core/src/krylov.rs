//! Preconditioned conjugate gradients driven by operator actions.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::linalg::{axpy, dot, norm2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KrylovError {
    #[error("operator is not positive definite: p'Ap = {curvature:e} at iteration {iteration}")]
    Indefinite { iteration: usize, curvature: f64 },
    #[error("preconditioner is not positive definite: r'z = {value:e} at iteration {iteration}")]
    IndefinitePreconditioner { iteration: usize, value: f64 },
    #[error("right-hand side has length {got}, operator expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PcgOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 500 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PcgReport {
    pub iterations: usize,
    /// `‖r_k‖₂ / ‖g‖₂` for `k = 0..=iterations`.
    pub history: Vec<f64>,
    pub converged: bool,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl PcgReport {
    pub fn final_residual(&self) -> f64 {
        self.history.last().copied().unwrap_or(0.0)
    }

    /// Eigenvalues of the Lanczos tridiagonal matrix implied by the CG
    /// coefficients, ascending.
    pub fn ritz_values(&self) -> Vec<f64> {
        let k = self.alpha.len();
        if k == 0 {
            return Vec::new();
        }
        let mut diag = vec![0.0; k];
        let mut off = vec![0.0; k.saturating_sub(1)];
        for j in 0..k {
            diag[j] = 1.0 / self.alpha[j];
            if j > 0 {
                diag[j] += self.beta[j - 1] / self.alpha[j - 1];
            }
            if j + 1 < k {
                off[j] = self.beta[j].sqrt() / self.alpha[j];
            }
        }
        tridiagonal_eigenvalues(&diag, &off)
    }

    /// `λ_max / λ_min` of the Ritz values.
    pub fn condition_estimate(&self) -> f64 {
        let r = self.ritz_values();
        match (r.first(), r.last()) {
            (Some(lo), Some(hi)) if *lo > 0.0 => hi / lo,
            _ => f64::NAN,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,relative_residual\n");
        for (k, r) in self.history.iter().enumerate() {
            let _ = writeln!(s, "{k},{r:e}");
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), KrylovError> {
        std::fs::write(path, self.to_csv()).map_err(|e| KrylovError::Io(e.to_string()))
    }
}

/// Solve `A u = g` from `u = 0`, stopping when `‖r‖₂/‖g‖₂ < tol`.
///
/// Reaching `max_iter` yields a report with `converged == false`.
pub fn pcg<A, M>(apply_a: A, apply_m: M, g: &[f64], opts: PcgOptions) -> Result<(Vec<f64>, PcgReport), KrylovError>
where
    A: Fn(&[f64]) -> Vec<f64>,
    M: Fn(&[f64]) -> Vec<f64>,
{
    let n = g.len();
    let mut u = vec![0.0; n];
    let mut report = PcgReport::default();
    let gnorm = norm2(g);
    if gnorm == 0.0 {
        report.history.push(0.0);
        report.converged = true;
        return Ok((u, report));
    }
    let mut r = g.to_vec();
    report.history.push(1.0);
    let mut z = apply_m(&r);
    if z.len() != n {
        return Err(KrylovError::Dimension { expected: n, got: z.len() });
    }
    let mut rho = dot(&r, &z);
    if rho <= 0.0 {
        return Err(KrylovError::IndefinitePreconditioner { iteration: 0, value: rho });
    }
    let mut p = z.clone();
    for it in 1..=opts.max_iter {
        let q = apply_a(&p);
        if q.len() != n {
            return Err(KrylovError::Dimension { expected: n, got: q.len() });
        }
        let curvature = dot(&p, &q);
        if curvature <= 0.0 {
            return Err(KrylovError::Indefinite { iteration: it, curvature });
        }
        let alpha = rho / curvature;
        axpy(alpha, &p, &mut u);
        axpy(-alpha, &q, &mut r);
        report.alpha.push(alpha);
        report.iterations = it;
        let rel = norm2(&r) / gnorm;
        report.history.push(rel);
        if rel < opts.tol {
            report.converged = true;
            break;
        }
        if it == opts.max_iter {
            break;
        }
        z = apply_m(&r);
        let rho_new = dot(&r, &z);
        if rho_new <= 0.0 {
            return Err(KrylovError::IndefinitePreconditioner { iteration: it, value: rho_new });
        }
        let beta = rho_new / rho;
        report.beta.push(beta);
        rho = rho_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Ok((u, report))
}

/// Eigenvalues of a symmetric tridiagonal matrix by Sturm bisection.
pub fn tridiagonal_eigenvalues(diag: &[f64], off: &[f64]) -> Vec<f64> {
    let n = diag.len();
    if n == 0 {
        return Vec::new();
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    // Number of eigenvalues strictly below x.
    let count_below = |x: f64| {
        let mut c = 0;
        let mut d = 1.0;
        for i in 0..n {
            let o2 = if i > 0 { off[i - 1] * off[i - 1] } else { 0.0 };
            d = diag[i] - x - if i > 0 { o2 / d } else { 0.0 };
            if d == 0.0 {
                d = -f64::EPSILON * (x.abs() + 1.0);
            }
            if d < 0.0 {
                c += 1;
            }
        }
        c
    };
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    (0..n)
        .map(|k| {
            let (mut a, mut b) = (lo - 1e-12 * span, hi + 1e-12 * span);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if count_below(m) > k {
                    b = m;
                } else {
                    a = m;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{DenseCholesky, DenseMatrix};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spd(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = DenseMatrix::zeros(n, n);
        for v in b.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut a = b.transpose().matmul(&b);
        for i in 0..n {
            a.add(i, i, 0.5);
        }
        a
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let a = spd(5, 1);
        let (u, rep) = pcg(|x| a.matvec(x), |r| r.to_vec(), &[0.0; 5], PcgOptions::default()).unwrap();
        assert_eq!(u, vec![0.0; 5]);
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
    }

    #[test]
    fn exact_preconditioner_converges_in_one_step() {
        let a = spd(12, 2);
        let fac = DenseCholesky::new(&a, 1e-14).unwrap();
        let g: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let (u, rep) = pcg(|x| a.matvec(x), |r| fac.solve(r), &g, PcgOptions::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        let res = a.matvec(&u);
        for (x, y) in res.iter().zip(&g) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn solves_and_verifies_residual() {
        let a = spd(40, 3);
        let g: Vec<f64> = (0..40).map(|i| 1.0 + i as f64).collect();
        let opts = PcgOptions { tol: 1e-10, max_iter: 500 };
        let (u, rep) = pcg(|x| a.matvec(x), |r| r.to_vec(), &g, opts).unwrap();
        assert!(rep.converged);
        assert!(rep.final_residual() < 1e-10);
        let au = a.matvec(&u);
        let res: Vec<f64> = au.iter().zip(&g).map(|(x, y)| x - y).collect();
        assert!(norm2(&res) / norm2(&g) < 2e-10);
        assert_eq!(rep.history.len(), rep.iterations + 1);
    }

    #[test]
    fn detects_indefinite_operator() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]);
        let err = pcg(|x| a.matvec(x), |r| r.to_vec(), &[0.0, 1.0], PcgOptions::default()).unwrap_err();
        assert!(matches!(err, KrylovError::Indefinite { iteration: 1, .. }));
    }

    #[test]
    fn maxit_gives_unconverged_report() {
        let a = spd(30, 4);
        let g = vec![1.0; 30];
        let (_, rep) = pcg(|x| a.matvec(x), |r| r.to_vec(), &g, PcgOptions { tol: 1e-14, max_iter: 3 }).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 3);
    }

    #[test]
    fn doubling_maxit_keeps_prefix_bitwise() {
        let a = spd(25, 5);
        let g: Vec<f64> = (0..25).map(|i| (i as f64 * 0.3).cos()).collect();
        let (_, short) = pcg(|x| a.matvec(x), |r| r.to_vec(), &g, PcgOptions { tol: 0.0, max_iter: 6 }).unwrap();
        let (_, long) = pcg(|x| a.matvec(x), |r| r.to_vec(), &g, PcgOptions { tol: 0.0, max_iter: 12 }).unwrap();
        assert_eq!(short.history[..], long.history[..7]);
    }

    #[test]
    fn ritz_values_bracket_spectrum() {
        let a = DenseMatrix::from_rows(&[
            vec![2.0, 0.0, 0.0, 0.0],
            vec![0.0, 3.0, 0.0, 0.0],
            vec![0.0, 0.0, 5.0, 0.0],
            vec![0.0, 0.0, 0.0, 7.0],
        ]);
        let (_, rep) = pcg(|x| a.matvec(x), |r| r.to_vec(), &[1.0; 4], PcgOptions { tol: 1e-13, max_iter: 10 }).unwrap();
        let ritz = rep.ritz_values();
        assert_eq!(ritz.len(), 4);
        for (r, e) in ritz.iter().zip([2.0, 3.0, 5.0, 7.0]) {
            assert!((r - e).abs() < 1e-8, "{r} vs {e}");
        }
        assert!((rep.condition_estimate() - 3.5).abs() < 1e-7);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let a = spd(4, 6);
        let (_, rep) = pcg(|x| a.matvec(x), |r| r.to_vec(), &[1.0; 4], PcgOptions::default()).unwrap();
        let csv = rep.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "iteration,relative_residual");
        assert_eq!(lines.len(), rep.history.len() + 1);
        assert!(lines[1].starts_with("0,1e0"));
    }

    proptest! {
        #[test]
        fn tridiagonal_matches_dense(d in proptest::collection::vec(-5.0f64..5.0, 1..8), seed in 0u64..1000) {
            let n = d.len();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let off: Vec<f64> = (0..n.saturating_sub(1)).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                m[(i, i)] = d[i];
                if i + 1 < n {
                    m[(i, i + 1)] = off[i];
                    m[(i + 1, i)] = off[i];
                }
            }
            let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
            ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let got = tridiagonal_eigenvalues(&d, &off);
            for (a, b) in got.iter().zip(&ev) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
