//! Refine–solve loop driven by element errors against a known solution,
//! with threshold and histogram-fraction marking.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::{Discretization, ProblemData, ReferenceElement};
use crate::basis::gauss_legendre;
use crate::bddc::BddcOptions;
use crate::forest::Forest;
use crate::krylov::PcgOptions;
use crate::solver::{solve_bddc, SolveError, Substructured};

#[derive(Debug, Error)]
pub enum AdaptError {
    #[error("marking fraction {0} outside (0, 1)")]
    Fraction(f64),
    #[error("histogram needs at least 2 bins, got {0}")]
    Bins(usize),
    #[error("threshold {0} outside (0, 1)")]
    Threshold(f64),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("io error: {0}")]
    Io(String),
}

/// Closed-form solution used to measure the discretization error.
pub trait ExactSolution: Sync {
    fn value(&self, x: [f64; 3], out: &mut [f64]);
    /// `out[c][a] = ∂u_c/∂x_a`.
    fn gradient(&self, x: [f64; 3], out: &mut [[f64; 3]]);
}

/// Per-element squared errors and the resulting global norms.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorEstimate {
    /// Element H¹-seminorm errors `η_K`.
    pub eta: Vec<f64>,
    /// Element L² errors.
    pub l2_elem: Vec<f64>,
    pub l2: f64,
    /// `sqrt(Σ η_K²)`.
    pub h1: f64,
}

impl ErrorEstimate {
    pub fn eta_max(&self) -> f64 {
        self.eta.iter().fold(0.0, |m, &v| m.max(v))
    }
}

/// `η_K` with `p + 2` Gauss points per direction.
pub fn estimate_error(forest: &Forest, disc: &Discretization, u: &[f64], exact: &dyn ExactSolution) -> ErrorEstimate {
    estimate_error_with_points(forest, disc, u, exact, disc.order + 2)
}

pub fn estimate_error_with_points(forest: &Forest, disc: &Discretization, u: &[f64], exact: &dyn ExactSolution, nq: usize) -> ErrorEstimate {
    let (dim, p, nc) = (disc.dim, disc.order, disc.ncomp);
    let (x1, w1) = gauss_legendre(nq);
    let total = nq.pow(dim as u32);
    let mut pts = Vec::with_capacity(total);
    let mut wts = Vec::with_capacity(total);
    for q in 0..total {
        let mut r = q;
        let mut pt = [0.0; 3];
        let mut wt = 1.0;
        for a in 0..dim {
            pt[a] = x1[r % nq];
            wt *= w1[r % nq];
            r /= nq;
        }
        pts.push(pt);
        wts.push(wt);
    }
    let phi: Vec<Vec<f64>> = pts.iter().map(|&x| ReferenceElement::eval_basis(dim, p, x)).collect();
    let grad: Vec<Vec<[f64; 3]>> = pts.iter().map(|&x| ReferenceElement::eval_grad(dim, p, x)).collect();
    let nloc = disc.map.nodes_per_element();

    let per: Vec<(f64, f64)> = (0..forest.len())
        .into_par_iter()
        .map(|e| {
            let geom = forest.geometry(e);
            let nodes = disc.map.element_nodes(e);
            let t = disc.map.transition(e);
            // local coefficients c = T ū
            let mut coef = vec![0.0; nloc * nc];
            for i in 0..nloc {
                match t.and_then(|t| t.row(i)) {
                    Some(row) => {
                        for &(k, w) in row {
                            for c in 0..nc {
                                coef[i * nc + c] += w * u[nodes[k] * nc + c];
                            }
                        }
                    }
                    None => {
                        for c in 0..nc {
                            coef[i * nc + c] = u[nodes[i] * nc + c];
                        }
                    }
                }
            }
            let vol = geom.h.powi(dim as i32);
            let mut val = vec![0.0; nc];
            let mut g = vec![[0.0; 3]; nc];
            let (mut l2, mut h1) = (0.0, 0.0);
            for q in 0..total {
                let mut x = [0.0; 3];
                for a in 0..dim {
                    x[a] = geom.lower[a] + geom.h * pts[q][a];
                }
                exact.value(x, &mut val);
                exact.gradient(x, &mut g);
                for c in 0..nc {
                    let mut uh = 0.0;
                    let mut duh = [0.0; 3];
                    for i in 0..nloc {
                        let ci = coef[i * nc + c];
                        uh += ci * phi[q][i];
                        for a in 0..dim {
                            duh[a] += ci * grad[q][i][a];
                        }
                    }
                    l2 += wts[q] * (uh - val[c]).powi(2);
                    for a in 0..dim {
                        h1 += wts[q] * (duh[a] / geom.h - g[c][a]).powi(2);
                    }
                }
            }
            ((l2 * vol).sqrt(), (h1 * vol).sqrt())
        })
        .collect();
    let l2 = per.iter().map(|v| v.0 * v.0).sum::<f64>().sqrt();
    let h1 = per.iter().map(|v| v.1 * v.1).sum::<f64>().sqrt();
    ErrorEstimate { eta: per.iter().map(|v| v.1).collect(), l2_elem: per.iter().map(|v| v.0).collect(), l2, h1 }
}

/// Elements with `η_K > θ η_max`.
pub fn mark_threshold(eta: &[f64], theta: f64) -> Result<Vec<usize>, AdaptError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(AdaptError::Threshold(theta));
    }
    let max = eta.iter().fold(0.0f64, |m, &v| m.max(v));
    Ok((0..eta.len()).filter(|&i| eta[i] > theta * max).collect())
}

/// Outcome of histogram-fraction marking.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramMarking {
    pub eta_max: f64,
    /// Bin width `L = η_max / M`.
    pub bin_width: f64,
    /// `H_m`, `m = 1..=M`, counting `η ∈ ((m−1)L, mL]`; zeros fall in the first bin.
    pub histogram: Vec<u64>,
    /// `θ̂ = m̄ L`.
    pub theta: f64,
    pub marked: Vec<usize>,
}

/// 1-based bin of `v`; all values land in bin `M` when `η_max = 0`.
fn bin_of(v: f64, l: f64, m: usize) -> usize {
    if l == 0.0 {
        return m;
    }
    ((v / l).ceil() as usize).clamp(1, m)
}

/// Integer histogram accumulated chunk by chunk; the sum does not depend on
/// the chunking.
pub fn histogram(eta: &[f64], bin_width: f64, bins: usize) -> Vec<u64> {
    eta.par_chunks(4096)
        .map(|chunk| {
            let mut h = vec![0u64; bins];
            for &v in chunk {
                h[bin_of(v, bin_width, bins) - 1] += 1;
            }
            h
        })
        .reduce(
            || vec![0u64; bins],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

/// Mark the elements above the largest bin edge `m̄L` whose tail holds at
/// least `ζ N_e` elements. Membership is decided by bin index, so marking and
/// counting agree exactly.
pub fn mark_fraction_histogram(eta: &[f64], zeta: f64, bins: usize) -> Result<HistogramMarking, AdaptError> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(AdaptError::Fraction(zeta));
    }
    if bins < 2 {
        return Err(AdaptError::Bins(bins));
    }
    let eta_max = eta.iter().fold(0.0f64, |m, &v| m.max(v));
    let l = eta_max / bins as f64;
    let h = histogram(eta, l, bins);
    let need = zeta * eta.len() as f64;
    // tail(m̄) = Σ_{m > m̄} H_m, non-increasing in m̄
    let mut tail = 0u64;
    let mut mbar = 0;
    for m in (0..bins).rev() {
        tail += h[m];
        if tail as f64 >= need {
            mbar = m;
            break;
        }
    }
    let marked = (0..eta.len()).filter(|&i| bin_of(eta[i], l, bins) > mbar).collect();
    Ok(HistogramMarking { eta_max, bin_width: l, histogram: h, theta: mbar as f64 * l, marked })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marker {
    /// Every element (uniform refinement).
    All,
    /// `η_K > θ η_max`.
    Threshold(f64),
    /// Histogram marking of a fraction `zeta` with `bins` compartments.
    Fraction { zeta: f64, bins: usize },
}

impl Marker {
    /// Default fraction marker: 15% of elements for linear elements, 12% otherwise.
    pub fn default_for_order(p: usize) -> Marker {
        Marker::Fraction { zeta: if p == 1 { 0.15 } else { 0.12 }, bins: 100 }
    }

    pub fn mark(&self, eta: &[f64]) -> Result<Vec<usize>, AdaptError> {
        match *self {
            Marker::All => Ok((0..eta.len()).collect()),
            Marker::Threshold(t) => mark_threshold(eta, t),
            Marker::Fraction { zeta, bins } => Ok(mark_fraction_histogram(eta, zeta, bins)?.marked),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptConfig {
    pub order: usize,
    pub n_subdomains: usize,
    /// Number of refinements; `steps + 1` solves.
    pub steps: usize,
    pub marker: Marker,
    pub bddc: BddcOptions,
    pub pcg: PcgOptions,
}

/// Global properties of one solve in the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptStep {
    pub step: usize,
    pub n_elements: usize,
    pub n_dofs: usize,
    pub n_interface: usize,
    pub n_coarse: usize,
    pub iterations: usize,
    pub setup_seconds: f64,
    pub pcg_seconds: f64,
    pub l2_error: f64,
    pub h1_error: f64,
    pub n_marked: usize,
}

pub const ADAPT_CSV_HEADER: &str = "step,n_elements,n_dofs,n_interface,n_coarse,iterations,setup_time,pcg_time,L2_error,H1_error";

pub fn adapt_csv(steps: &[AdaptStep]) -> String {
    let mut s = String::from(ADAPT_CSV_HEADER);
    s.push('\n');
    for r in steps {
        writeln!(
            s,
            "{},{},{},{},{},{},{:.6},{:.6},{:e},{:e}",
            r.step, r.n_elements, r.n_dofs, r.n_interface, r.n_coarse, r.iterations, r.setup_seconds, r.pcg_seconds, r.l2_error, r.h1_error
        )
        .unwrap();
    }
    s
}

pub fn write_adapt_csv(steps: &[AdaptStep], path: &Path) -> Result<(), AdaptError> {
    std::fs::write(path, adapt_csv(steps)).map_err(|e| AdaptError::Io(e.to_string()))
}

/// Result of [`adapt_loop`]: one row per solve and the last mesh solved on.
#[derive(Debug, Clone)]
pub struct AdaptRun {
    pub steps: Vec<AdaptStep>,
    pub forest: Forest,
}

/// Solve, estimate, mark, refine, balance and repartition, `steps` times,
/// then solve once more on the final mesh.
pub fn adapt_loop(initial: &Forest, problem: &dyn ProblemData, exact: &dyn ExactSolution, config: &AdaptConfig) -> Result<AdaptRun, AdaptError> {
    let mut forest = initial.clone();
    let mut rows = Vec::with_capacity(config.steps + 1);
    for step in 0..=config.steps {
        let sub = Substructured::new(&forest, config.order, config.n_subdomains, problem)?;
        let out = solve_bddc(&sub, config.bddc, config.pcg)?;
        let est = estimate_error(&forest, &sub.disc, &out.u, exact);
        let marked = if step < config.steps { config.marker.mark(&est.eta)? } else { Vec::new() };
        rows.push(AdaptStep {
            step,
            n_elements: forest.len(),
            n_dofs: out.n,
            n_interface: out.n_interface,
            n_coarse: out.n_coarse,
            iterations: out.report.iterations,
            setup_seconds: out.setup_seconds,
            pcg_seconds: out.pcg_seconds,
            l2_error: est.l2,
            h1_error: est.h1,
            n_marked: marked.len(),
        });
        if step < config.steps {
            forest = forest.refine(&marked).and_then(|f| f.balance_2to1()).map_err(SolveError::from)?;
        }
    }
    Ok(AdaptRun { steps: rows, forest })
}

#[cfg(test)]
mod tests;
