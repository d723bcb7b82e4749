//! End-to-end interface solve: numbering, subassembly, substructuring,
//! BDDC set-up, PCG and interior recovery.

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::{assemble_global, subassemble, AssemblyError, Discretization, ProblemData, SubdomainSystem};
use crate::bddc::{BddcError, BddcOptions, BddcPreconditioner, LevelTopology};
use crate::dofs::{classify_interface, enumerate_dofs, subdomain_dofs, DofError, InterfaceClassification};
use crate::forest::{AdjacencyRule, ComponentLabeling, Forest, ForestError, Partition};
use crate::krylov::{pcg, KrylovError, PcgOptions, PcgReport};
use crate::linalg::{LinalgError, SparseCholesky, DEFAULT_PIVOT_TOL};
use crate::substructuring::{build_schur, recover_interior, reduced_rhs, SchurOperator, SubstructError};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Dofs(#[from] DofError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Substructuring(#[from] SubstructError),
    #[error(transparent)]
    Bddc(#[from] BddcError),
    #[error(transparent)]
    Krylov(#[from] KrylovError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A discretized problem split into subdomains.
#[derive(Debug, Clone)]
pub struct Substructured {
    pub disc: Discretization,
    pub partition: Partition,
    pub labeling: ComponentLabeling,
    pub systems: Vec<SubdomainSystem>,
    pub ic: InterfaceClassification,
    pub topology: LevelTopology,
}

impl Substructured {
    /// Equal-count Z-order partition into `n_subdomains`.
    pub fn new(forest: &Forest, order: usize, n_subdomains: usize, problem: &dyn ProblemData) -> Result<Self, SolveError> {
        let partition = forest.partition_equal(n_subdomains)?;
        Self::with_partition(forest, order, partition, problem)
    }

    pub fn with_partition(forest: &Forest, order: usize, partition: Partition, problem: &dyn ProblemData) -> Result<Self, SolveError> {
        let map = enumerate_dofs(forest, order)?;
        let disc = Discretization::new(forest, map, problem)?;
        let labeling = forest.detect_components(&partition, AdjacencyRule::Face);
        let sets = subdomain_dofs(&disc.map, &partition, disc.ncomp, &disc.free);
        let systems: Vec<SubdomainSystem> = sets
            .par_iter()
            .enumerate()
            .map(|(s, dofs)| subassemble(&disc, forest, &partition.elements(s), dofs.clone(), problem))
            .collect();
        let ic = classify_interface(disc.n_dofs(), sets);
        let topology = LevelTopology::from_discretization(&disc, &partition, &labeling, &ic);
        Ok(Self { disc, partition, labeling, systems, ic, topology })
    }

    pub fn num_subdomains(&self) -> usize {
        self.systems.len()
    }

    /// Size of the global system (free DOFs).
    pub fn n_free(&self) -> usize {
        self.disc.n_free()
    }

    pub fn schur(&self) -> Result<SchurOperator, SolveError> {
        Ok(build_schur(&self.systems, &self.ic)?)
    }
}

/// Result of one BDDC-preconditioned interface solve.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    /// Solution over all DOFs, Dirichlet values included.
    pub u: Vec<f64>,
    pub report: PcgReport,
    pub n: usize,
    pub n_interface: usize,
    pub n_coarse: usize,
    /// `(N_S, nΓ, n_C)` of the second level when present.
    pub second_level: Option<(usize, usize, usize)>,
    pub setup_seconds: f64,
    pub pcg_seconds: f64,
    pub preconditioner: BddcPreconditioner,
}

pub fn solve_bddc(sub: &Substructured, options: BddcOptions, pcg_options: PcgOptions) -> Result<SolveOutcome, SolveError> {
    let start = Instant::now();
    let schur = sub.schur()?;
    let m = BddcPreconditioner::new(&sub.systems, &sub.ic, &sub.topology, options)?;
    let setup_seconds = start.elapsed().as_secs_f64();
    let g = reduced_rhs(&schur, &sub.systems);
    let start = Instant::now();
    let (ug, report) = pcg(|x| schur.apply(x), |r| m.apply(r), &g, pcg_options)?;
    let u = recover_interior(&schur, &sub.systems, &sub.ic, &ug, &sub.disc.boundary_values);
    let pcg_seconds = start.elapsed().as_secs_f64();
    Ok(SolveOutcome {
        u,
        report,
        n: sub.n_free(),
        n_interface: sub.ic.n_interface(),
        n_coarse: m.n_coarse(),
        second_level: m.second_level().map(|s| (s.n_subdomains, s.n_interface, s.n_coarse)),
        setup_seconds,
        pcg_seconds,
        preconditioner: m,
    })
}

/// Monolithic direct solve; returns the solution over all DOFs.
pub fn solve_direct(forest: &Forest, disc: &Discretization, problem: &dyn ProblemData) -> Result<Vec<f64>, SolveError> {
    let global = assemble_global(disc, forest, problem);
    let x = SparseCholesky::new(&global.a, DEFAULT_PIVOT_TOL)?.solve(&global.f);
    let mut u = disc.boundary_values.clone();
    for (k, &d) in global.global_dofs.iter().enumerate() {
        u[d] = x[k];
    }
    Ok(u)
}

/// `‖u − v‖_A / ‖v‖_A` over the free DOFs of the assembled operator.
pub fn relative_energy_difference(forest: &Forest, disc: &Discretization, problem: &dyn ProblemData, u: &[f64], v: &[f64]) -> f64 {
    let global = assemble_global(disc, forest, problem);
    let e: Vec<f64> = global.global_dofs.iter().map(|&d| u[d] - v[d]).collect();
    let w: Vec<f64> = global.global_dofs.iter().map(|&d| v[d]).collect();
    let ae = global.a.spmv(&e).expect("dimension");
    let aw = global.a.spmv(&w).expect("dimension");
    let num = crate::linalg::dot(&e, &ae).max(0.0).sqrt();
    let den = crate::linalg::dot(&w, &aw).max(0.0).sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}
