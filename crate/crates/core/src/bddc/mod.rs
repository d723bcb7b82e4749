//! Balancing domain decomposition by constraints on the interface Schur
//! complement, with an optional second level.

mod constraints;
mod saddle;

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

pub use constraints::{select_constraints, CoarseDof, ConstraintKind, ConstraintPolicy, ConstraintRow, ConstraintSet, LevelTopology};
pub use saddle::{factor_saddle, SaddleFactor};

use crate::assembly::SubdomainSystem;
use crate::dofs::{classify_interface, InterfaceClassification};
use crate::forest::Partition;
use crate::krylov::{pcg, PcgOptions};
use crate::linalg::{LinalgError, SparseCholesky, SymSparse, Triplets, DEFAULT_PIVOT_TOL};
use crate::substructuring::{build_schur, build_weights, recover_interior_from, reduced_rhs_from, SchurOperator, SubstructError, WeightMode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BddcError {
    #[error("component {component} of subdomain {subdomain} is floating with {rows} constraints, needs at least {kernel}")]
    UnderConstrained { subdomain: usize, component: usize, rows: usize, kernel: usize },
    #[error("saddle-point matrix of subdomain {subdomain} is singular: component {component} is not fixed by its constraints")]
    Singular { subdomain: usize, component: usize },
    #[error("constraints of subdomain {subdomain} are linearly dependent (rank deficiency {deficiency})")]
    DependentConstraints { subdomain: usize, deficiency: usize },
    #[error("coarse basis of subdomain {subdomain} violates C Φ = I by {defect:e}")]
    CoarseBasis { subdomain: usize, defect: f64 },
    #[error("coarse matrix is singular: {0}")]
    CoarseSingular(LinalgError),
    #[error("unsupported number of levels {0}; expected 2 or 3")]
    Levels(usize),
    #[error(transparent)]
    Substructuring(#[from] SubstructError),
}

/// How the coarse problem is solved when a second level is present.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoarseMode {
    /// One application of the second-level BDDC preconditioner.
    SingleApplication,
    /// Conjugate gradients on the coarse problem preconditioned by the
    /// second level, stopped at a loose relative tolerance.
    InnerPcg { tol: f64, max_iter: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BddcOptions {
    pub levels: usize,
    pub weights: WeightMode,
    pub policy: ConstraintPolicy,
    /// Second-level subdomain count; `None` picks `round(√N_S)`.
    pub second_level_subdomains: Option<usize>,
    pub coarse_mode: CoarseMode,
}

impl Default for BddcOptions {
    fn default() -> Self {
        Self {
            levels: 2,
            weights: WeightMode::Cardinality,
            policy: ConstraintPolicy::AVERAGES,
            second_level_subdomains: None,
            coarse_mode: CoarseMode::SingleApplication,
        }
    }
}

/// Local subdomain properties of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainDiagnostics {
    pub n_dofs: usize,
    pub n_components: usize,
    pub n_coarse: usize,
    pub factor_seconds: f64,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone)]
struct LocalBddc {
    interface_local: Vec<usize>,
    interface_map: Vec<usize>,
    weights: Vec<f64>,
    saddle: SaddleFactor,
    coarse_map: Vec<usize>,
    n_components: usize,
}

#[derive(Debug, Clone)]
struct SecondLevel {
    systems: Vec<SubdomainSystem>,
    ic: InterfaceClassification,
    schur: SchurOperator,
    bddc: BddcLevel,
}

#[derive(Debug, Clone)]
enum CoarseSolve {
    Empty,
    Direct(SparseCholesky),
    Recursive(Box<SecondLevel>, CoarseMode),
}

/// One BDDC level acting on its interface space.
#[derive(Debug, Clone)]
pub struct BddcLevel {
    n_interface: usize,
    locals: Vec<LocalBddc>,
    constraints: ConstraintSet,
    coarse_matrix: SymSparse,
    coarse: CoarseSolve,
}

/// Assemble `S_C = Σ R_Ciᵀ S_Ci R_Ci`.
fn assemble_coarse_matrix(n_coarse: usize, parts: &[(Vec<usize>, crate::linalg::DenseMatrix)]) -> SymSparse {
    let mut t = Triplets::new(n_coarse, n_coarse);
    for (map, s) in parts {
        for (i, &gi) in map.iter().enumerate() {
            for (j, &gj) in map.iter().enumerate() {
                if gj <= gi {
                    t.push(gi, gj, s.get(i, j));
                }
            }
        }
    }
    t.to_csr().to_sym_lower()
}

impl BddcLevel {
    fn build(
        systems: &[SubdomainSystem],
        ic: &InterfaceClassification,
        topo: &LevelTopology,
        weights: Vec<Vec<f64>>,
        options: &BddcOptions,
        depth: usize,
    ) -> Result<Self, BddcError> {
        let constraints = select_constraints(ic, topo, options.policy)?;
        let locals: Result<Vec<LocalBddc>, BddcError> = systems
            .par_iter()
            .zip(weights)
            .enumerate()
            .map(|(s, (sys, w))| {
                let saddle = factor_saddle(&sys.a, &constraints.rows[s], &topo.dof_component[s], &topo.floating[s], topo.kernel_dim, s)?;
                Ok(LocalBddc {
                    interface_local: ic.interface_local[s].clone(),
                    interface_map: ic.interface_map[s].clone(),
                    weights: w,
                    saddle,
                    coarse_map: constraints.coarse_map(s),
                    n_components: topo.n_components[s],
                })
            })
            .collect();
        let locals = locals?;
        let n_coarse = constraints.n_coarse();
        let parts: Vec<(Vec<usize>, crate::linalg::DenseMatrix)> =
            locals.iter().map(|l| (l.coarse_map.clone(), l.saddle.local_coarse_matrix())).collect();
        let coarse_matrix = assemble_coarse_matrix(n_coarse, &parts);
        let ns = systems.len();
        let n2 = options.second_level_subdomains.unwrap_or_else(|| ((ns as f64).sqrt().round() as usize).max(1)).clamp(1, ns.max(1));
        let coarse = if n_coarse == 0 {
            CoarseSolve::Empty
        } else if depth + 2 < options.levels && n2 >= 2 {
            let second = SecondLevel::build(&locals, &parts, &constraints, topo, n2, options, depth)?;
            CoarseSolve::Recursive(Box::new(second), options.coarse_mode)
        } else {
            CoarseSolve::Direct(SparseCholesky::new(&coarse_matrix, DEFAULT_PIVOT_TOL).map_err(BddcError::CoarseSingular)?)
        };
        Ok(BddcLevel { n_interface: ic.n_interface(), locals, constraints, coarse_matrix, coarse })
    }

    fn coarse_solve(&self, r: &[f64]) -> Vec<f64> {
        match &self.coarse {
            CoarseSolve::Empty => Vec::new(),
            CoarseSolve::Direct(f) => f.solve(r),
            CoarseSolve::Recursive(second, CoarseMode::SingleApplication) => second.apply(r),
            CoarseSolve::Recursive(second, CoarseMode::InnerPcg { tol, max_iter }) => {
                let opts = PcgOptions { tol: *tol, max_iter: *max_iter };
                let a = |x: &[f64]| self.coarse_matrix.spmv(x).expect("coarse dimension");
                match pcg(a, |x| second.apply(x), r, opts) {
                    Ok((u, _)) => u,
                    Err(_) => second.apply(r),
                }
            }
        }
    }

    /// The six steps of the preconditioner.
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        assert_eq!(r.len(), self.n_interface, "BDDC apply: dimension mismatch");
        let local: Vec<(Vec<f64>, Vec<f64>)> = self
            .locals
            .par_iter()
            .map(|l| {
                let mut ri = vec![0.0; l.saddle.n()];
                for ((&li, &g), &w) in l.interface_local.iter().zip(&l.interface_map).zip(&l.weights) {
                    ri[li] = w * r[g];
                }
                l.saddle.solve(&ri)
            })
            .collect();
        let mut rc = vec![0.0; self.constraints.n_coarse()];
        for (l, (_, mu)) in self.locals.iter().zip(&local) {
            for (&q, &v) in l.coarse_map.iter().zip(mu) {
                rc[q] += v;
            }
        }
        let uc = self.coarse_solve(&rc);
        let contrib: Vec<Vec<f64>> = self
            .locals
            .par_iter()
            .zip(local)
            .map(|(l, (mut u, _))| {
                if !l.coarse_map.is_empty() {
                    let x: Vec<f64> = l.coarse_map.iter().map(|&q| uc[q]).collect();
                    for (ui, pi) in u.iter_mut().zip(l.saddle.prolong(&x)) {
                        *ui += pi;
                    }
                }
                l.interface_local.iter().zip(&l.weights).map(|(&li, &w)| w * u[li]).collect()
            })
            .collect();
        let mut z = vec![0.0; self.n_interface];
        for (l, c) in self.locals.iter().zip(contrib) {
            for (&g, v) in l.interface_map.iter().zip(c) {
                z[g] += v;
            }
        }
        z
    }
}

impl SecondLevel {
    /// Treat first-level subdomains as elements of a coarse mesh and group
    /// them into `n2` contiguous slices.
    fn build(
        locals: &[LocalBddc],
        parts: &[(Vec<usize>, crate::linalg::DenseMatrix)],
        constraints: &ConstraintSet,
        topo: &LevelTopology,
        n2: usize,
        options: &BddcOptions,
        depth: usize,
    ) -> Result<Self, BddcError> {
        let ns = locals.len();
        let n_coarse = constraints.n_coarse();
        let groups = Partition::equal(ns, n2).expect("group count within subdomain count");
        let mut systems = Vec::with_capacity(n2);
        let mut dof_component = Vec::with_capacity(n2);
        let mut n_components = Vec::with_capacity(n2);
        let mut floating = Vec::with_capacity(n2);
        for j in 0..n2 {
            let members = groups.elements(j);
            let mut dofs: Vec<usize> = members.iter().flat_map(|&s| parts[s].0.iter().copied()).collect();
            dofs.sort_unstable();
            dofs.dedup();
            let mut t = Triplets::new(dofs.len(), dofs.len());
            for &s in &members {
                let (map, sc) = &parts[s];
                let loc: Vec<usize> = map.iter().map(|q| dofs.binary_search(q).unwrap()).collect();
                for (a, &la) in loc.iter().enumerate() {
                    for (b, &lb) in loc.iter().enumerate() {
                        if lb <= la {
                            t.push(la, lb, sc.get(a, b));
                        }
                    }
                }
            }
            // Members sharing a coarse DOF belong to one component.
            let mut parent: Vec<usize> = (0..members.len()).collect();
            fn find(p: &mut [usize], mut x: usize) -> usize {
                while p[x] != x {
                    p[x] = p[p[x]];
                    x = p[x];
                }
                x
            }
            let mut first_member = vec![usize::MAX; dofs.len()];
            for (mi, &s) in members.iter().enumerate() {
                for q in &parts[s].0 {
                    let l = dofs.binary_search(q).unwrap();
                    if first_member[l] == usize::MAX {
                        first_member[l] = mi;
                    } else {
                        let (a, b) = (find(&mut parent, first_member[l]), find(&mut parent, mi));
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
            let mut label = vec![usize::MAX; members.len()];
            let mut nlab = 0;
            for mi in 0..members.len() {
                let root = find(&mut parent, mi);
                if label[root] == usize::MAX {
                    label[root] = nlab;
                    nlab += 1;
                }
                label[mi] = label[root];
            }
            let mut fl = vec![true; nlab];
            for (mi, &s) in members.iter().enumerate() {
                if !topo.floating[s].iter().all(|&f| f) {
                    fl[label[mi]] = false;
                }
            }
            dof_component.push(first_member.iter().map(|&mi| label[mi]).collect());
            n_components.push(nlab);
            floating.push(fl);
            systems.push(SubdomainSystem { global_dofs: dofs, a: t.to_csr().to_sym_lower(), f: Vec::new() });
        }
        let sets: Vec<Vec<usize>> = systems.iter().map(|s| s.global_dofs.clone()).collect();
        let ic = classify_interface(n_coarse, sets);
        let schur = build_schur(&systems, &ic)?;
        let topo2 = LevelTopology {
            dof_field: constraints.coarse.iter().map(|c| c.field).collect(),
            dof_node: constraints.coarse.iter().map(|c| c.node).collect(),
            node_coords: constraints.coarse_node_coords.clone(),
            dof_component,
            n_components,
            floating,
            kernel_dim: topo.kernel_dim,
        };
        let weights = build_weights(&ic, &systems, options.weights)?;
        let bddc = BddcLevel::build(&systems, &ic, &topo2, weights, options, depth + 1)?;
        Ok(SecondLevel { systems, ic, schur, bddc })
    }

    /// Interior correction plus harmonic extension of the second-level BDDC
    /// applied to the condensed residual.
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let loads: Vec<Vec<f64>> = self
            .systems
            .iter()
            .map(|s| s.global_dofs.iter().map(|&d| r[d] / self.ic.multiplicity[d] as f64).collect())
            .collect();
        let refs: Vec<&[f64]> = loads.iter().map(|v| v.as_slice()).collect();
        let g = reduced_rhs_from(&self.schur, &refs);
        let z = self.bddc.apply(&g);
        let interiors = recover_interior_from(&self.schur, &refs, &z);
        let mut u = vec![0.0; r.len()];
        for (k, &d) in self.ic.interface.iter().enumerate() {
            u[d] = z[k];
        }
        for ((l, sys), vals) in self.schur.locals.iter().zip(&self.systems).zip(interiors) {
            for (&k, v) in l.interior.iter().zip(vals) {
                u[sys.global_dofs[k]] = v;
            }
        }
        u
    }
}

/// Summary of the second level: subdomains, interface size and coarse size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SecondLevelSummary {
    pub n_subdomains: usize,
    pub n_interface: usize,
    pub n_coarse: usize,
}

/// The BDDC preconditioner `M⁻¹` on the first-level interface.
#[derive(Debug, Clone)]
pub struct BddcPreconditioner {
    pub options: BddcOptions,
    level: BddcLevel,
    pub setup_seconds: f64,
}

impl BddcPreconditioner {
    pub fn new(systems: &[SubdomainSystem], ic: &InterfaceClassification, topo: &LevelTopology, options: BddcOptions) -> Result<Self, BddcError> {
        if !(2..=3).contains(&options.levels) {
            return Err(BddcError::Levels(options.levels));
        }
        let start = Instant::now();
        let weights = build_weights(ic, systems, options.weights)?;
        let level = BddcLevel::build(systems, ic, topo, weights, &options, 0)?;
        Ok(Self { options, level, setup_seconds: start.elapsed().as_secs_f64() })
    }

    pub fn n_interface(&self) -> usize {
        self.level.n_interface
    }

    pub fn n_coarse(&self) -> usize {
        self.level.constraints.n_coarse()
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.level.constraints
    }

    pub fn coarse_matrix(&self) -> &SymSparse {
        &self.level.coarse_matrix
    }

    pub fn saddle(&self, s: usize) -> &SaddleFactor {
        &self.level.locals[s].saddle
    }

    pub fn second_level(&self) -> Option<SecondLevelSummary> {
        match &self.level.coarse {
            CoarseSolve::Recursive(second, _) => Some(SecondLevelSummary {
                n_subdomains: second.systems.len(),
                n_interface: second.ic.n_interface(),
                n_coarse: second.bddc.constraints.n_coarse(),
            }),
            _ => None,
        }
    }

    /// `z = M⁻¹ r`.
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        self.level.apply(r)
    }

    pub fn diagnostics(&self) -> Vec<SubdomainDiagnostics> {
        self.level
            .locals
            .iter()
            .map(|l| SubdomainDiagnostics {
                n_dofs: l.saddle.n(),
                n_components: l.n_components,
                n_coarse: l.coarse_map.len(),
                factor_seconds: l.saddle.factor_seconds,
                solve_seconds: l.saddle.solve_seconds,
            })
            .collect()
    }

    pub fn diagnostics_csv(&self) -> String {
        let mut s = String::from("subdomain,n_dofs,n_components,n_coarse_dofs,factor_seconds,solve_seconds\n");
        for (i, d) in self.diagnostics().iter().enumerate() {
            let _ = writeln!(s, "{i},{},{},{},{:.6},{:.6}", d.n_dofs, d.n_components, d.n_coarse, d.factor_seconds, d.solve_seconds);
        }
        s
    }
}
