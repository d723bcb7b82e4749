//! Iterative substructuring: interior elimination, the matrix-free interface
//! Schur complement, reduced right-hand side, interior recovery and
//! interface weights.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::SubdomainSystem;
use crate::dofs::InterfaceClassification;
use crate::linalg::{CsrMatrix, LinalgError, SparseCholesky, SymSparse, DEFAULT_PIVOT_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubstructError {
    #[error("interior block of subdomain {subdomain} is not positive definite: {source}")]
    Interior { subdomain: usize, source: LinalgError },
    #[error("zero diagonal at global DOF {dof} of subdomain {subdomain} in stiffness weighting")]
    ZeroDiagonal { subdomain: usize, dof: usize },
    #[error("subdomain {subdomain} DOF set differs from the interface classification")]
    Mismatch { subdomain: usize },
}

/// Blocks of one subdomain matrix split into interior `I` and interface `Γ`.
#[derive(Debug, Clone)]
pub struct LocalSchur {
    pub interior: Vec<usize>,
    pub gamma: Vec<usize>,
    /// `R_i^Γ`: interface position of each local interface DOF.
    pub interface_map: Vec<usize>,
    pub a_ii: Option<SparseCholesky>,
    /// `A_IΓ`, rows = interior.
    pub a_ig: CsrMatrix,
    /// `A_ΓΓ`, full storage.
    pub a_gg: CsrMatrix,
}

impl LocalSchur {
    fn new(sys: &SubdomainSystem, interior: Vec<usize>, gamma: Vec<usize>, interface_map: Vec<usize>, subdomain: usize) -> Result<Self, SubstructError> {
        let full = sys.a.to_full();
        let n = sys.n();
        let mut imap = vec![usize::MAX; n];
        let mut gmap = vec![usize::MAX; n];
        for (k, &i) in interior.iter().enumerate() {
            imap[i] = k;
        }
        for (k, &g) in gamma.iter().enumerate() {
            gmap[g] = k;
        }
        let a_ii_full = full.submatrix(&interior, &imap, interior.len());
        let a_ii = if interior.is_empty() {
            None
        } else {
            let sym: SymSparse = a_ii_full.to_sym_lower();
            Some(SparseCholesky::new(&sym, DEFAULT_PIVOT_TOL).map_err(|source| SubstructError::Interior { subdomain, source })?)
        };
        let a_ig = full.submatrix(&interior, &gmap, gamma.len());
        let a_gg = full.submatrix(&gamma, &gmap, gamma.len());
        Ok(Self { interior, gamma, interface_map, a_ii, a_ig, a_gg })
    }

    /// `S_i x` for a local interface vector.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.gamma.len()];
        self.a_gg.spmv_into(x, &mut y);
        if let Some(f) = &self.a_ii {
            let mut t = vec![0.0; self.interior.len()];
            self.a_ig.spmv_into(x, &mut t);
            f.solve_in_place(&mut t);
            let mut c = vec![0.0; self.gamma.len()];
            self.a_ig.spmv_transpose_into(&t, &mut c);
            for (yi, ci) in y.iter_mut().zip(&c) {
                *yi -= ci;
            }
        }
        y
    }

    /// Interior solution `A_II⁻¹ (f_I − A_IΓ x)`.
    pub fn interior_solve(&self, f_i: &[f64], x: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; self.interior.len()];
        self.a_ig.spmv_into(x, &mut t);
        let mut r: Vec<f64> = f_i.iter().zip(&t).map(|(a, b)| a - b).collect();
        if let Some(f) = &self.a_ii {
            f.solve_in_place(&mut r);
        }
        r
    }

    pub fn gather(&self, global: &[f64]) -> Vec<f64> {
        self.interface_map.iter().map(|&k| global[k]).collect()
    }
}

/// `S = Σ R_iᵀ S_i R_i`, applied without forming `S`.
#[derive(Debug, Clone)]
pub struct SchurOperator {
    pub locals: Vec<LocalSchur>,
    pub n_interface: usize,
}

/// Scatter-add local interface vectors in subdomain order.
pub fn assemble_interface(n: usize, maps: impl Iterator<Item = (Vec<usize>, Vec<f64>)>) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for (map, v) in maps {
        for (k, val) in map.into_iter().zip(v) {
            y[k] += val;
        }
    }
    y
}

impl SchurOperator {
    pub fn num_subdomains(&self) -> usize {
        self.locals.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_interface, "Schur apply: dimension mismatch");
        let parts: Vec<Vec<f64>> = self.locals.par_iter().map(|l| l.apply(&l.gather(x))).collect();
        let mut y = vec![0.0; self.n_interface];
        for (l, v) in self.locals.iter().zip(parts) {
            for (&k, val) in l.interface_map.iter().zip(v) {
                y[k] += val;
            }
        }
        y
    }

    /// Dense `S` from unit vectors, for small checks.
    pub fn to_dense(&self) -> crate::linalg::DenseMatrix {
        let n = self.n_interface;
        let mut s = crate::linalg::DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = self.apply(&e);
            for i in 0..n {
                s.set(i, j, col[i]);
            }
        }
        s
    }
}

/// Factor interior blocks and split every subdomain matrix.
pub fn build_schur(systems: &[SubdomainSystem], ic: &InterfaceClassification) -> Result<SchurOperator, SubstructError> {
    if systems.len() != ic.num_subdomains() {
        return Err(SubstructError::Mismatch { subdomain: systems.len().min(ic.num_subdomains()) });
    }
    let locals: Result<Vec<LocalSchur>, SubstructError> = systems
        .par_iter()
        .enumerate()
        .map(|(s, sys)| {
            if sys.global_dofs != ic.subdomain_dofs[s] {
                return Err(SubstructError::Mismatch { subdomain: s });
            }
            LocalSchur::new(sys, ic.interior_local[s].clone(), ic.interface_local[s].clone(), ic.interface_map[s].clone(), s)
        })
        .collect();
    Ok(SchurOperator { locals: locals?, n_interface: ic.n_interface() })
}

/// `g = Σ R_iᵀ (f_i^Γ − A_i^ΓI (A_i^II)⁻¹ f_i^I)`.
pub fn reduced_rhs(op: &SchurOperator, systems: &[SubdomainSystem]) -> Vec<f64> {
    let loads: Vec<&[f64]> = systems.iter().map(|s| s.f.as_slice()).collect();
    reduced_rhs_from(op, &loads)
}

/// Reduced right-hand side for explicit subdomain loads over local DOFs.
pub fn reduced_rhs_from(op: &SchurOperator, loads: &[&[f64]]) -> Vec<f64> {
    let parts: Vec<Vec<f64>> = op
        .locals
        .par_iter()
        .zip(loads)
        .map(|(l, f)| {
            let mut g: Vec<f64> = l.gamma.iter().map(|&k| f[k]).collect();
            if let Some(fac) = &l.a_ii {
                let mut t: Vec<f64> = l.interior.iter().map(|&k| f[k]).collect();
                fac.solve_in_place(&mut t);
                let mut c = vec![0.0; l.gamma.len()];
                l.a_ig.spmv_transpose_into(&t, &mut c);
                for (gi, ci) in g.iter_mut().zip(&c) {
                    *gi -= ci;
                }
            }
            g
        })
        .collect();
    assemble_interface(op.n_interface, op.locals.iter().map(|l| l.interface_map.clone()).zip(parts))
}

/// Interior values of every subdomain for explicit loads and interface values.
pub fn recover_interior_from(op: &SchurOperator, loads: &[&[f64]], u_gamma: &[f64]) -> Vec<Vec<f64>> {
    op.locals
        .par_iter()
        .zip(loads)
        .map(|(l, f)| {
            let f_i: Vec<f64> = l.interior.iter().map(|&k| f[k]).collect();
            l.interior_solve(&f_i, &l.gather(u_gamma))
        })
        .collect()
}

/// Global solution over all `n_dofs` DOFs: `u_Γ` on the interface,
/// recovered interiors, and `fixed_values` on DOFs outside every subdomain.
pub fn recover_interior(
    op: &SchurOperator,
    systems: &[SubdomainSystem],
    ic: &InterfaceClassification,
    u_gamma: &[f64],
    fixed_values: &[f64],
) -> Vec<f64> {
    let mut u = vec![0.0; ic.n_dofs];
    for d in 0..ic.n_dofs {
        if ic.multiplicity[d] == 0 {
            u[d] = fixed_values[d];
        }
    }
    for (k, &d) in ic.interface.iter().enumerate() {
        u[d] = u_gamma[k];
    }
    let loads: Vec<&[f64]> = systems.iter().map(|s| s.f.as_slice()).collect();
    let parts = recover_interior_from(op, &loads, u_gamma);
    for ((l, sys), vals) in op.locals.iter().zip(systems).zip(parts) {
        for (&k, v) in l.interior.iter().zip(vals) {
            u[sys.global_dofs[k]] = v;
        }
    }
    u
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `1 / multiplicity`.
    Cardinality,
    /// Diagonal stiffness share `diag(A_i) / Σ_j diag(A_j)`.
    Stiffness,
}

/// Diagonal weights `W_i` over each subdomain's interface DOFs.
pub fn build_weights(ic: &InterfaceClassification, systems: &[SubdomainSystem], mode: WeightMode) -> Result<Vec<Vec<f64>>, SubstructError> {
    match mode {
        WeightMode::Cardinality => Ok((0..ic.num_subdomains())
            .map(|s| ic.interface_local[s].iter().map(|&k| 1.0 / ic.multiplicity[ic.subdomain_dofs[s][k]] as f64).collect())
            .collect()),
        WeightMode::Stiffness => {
            let diags: Vec<Vec<f64>> = systems.iter().map(|s| s.a.diagonal()).collect();
            let mut total = vec![0.0; ic.n_interface()];
            for s in 0..ic.num_subdomains() {
                for (j, &k) in ic.interface_local[s].iter().enumerate() {
                    let d = diags[s][k];
                    if d <= 0.0 {
                        return Err(SubstructError::ZeroDiagonal { subdomain: s, dof: ic.subdomain_dofs[s][k] });
                    }
                    total[ic.interface_map[s][j]] += d;
                }
            }
            Ok((0..ic.num_subdomains())
                .map(|s| {
                    ic.interface_local[s]
                        .iter()
                        .zip(&ic.interface_map[s])
                        .map(|(&k, &g)| diags[s][k] / total[g])
                        .collect()
                })
                .collect())
        }
    }
}

/// `max |Σ_i R_iᵀ W_i R_i − I|` over the interface diagonal.
pub fn partition_of_unity_defect(ic: &InterfaceClassification, weights: &[Vec<f64>]) -> f64 {
    let mut sum = vec![0.0; ic.n_interface()];
    for (s, w) in weights.iter().enumerate() {
        for (&g, &v) in ic.interface_map[s].iter().zip(w) {
            sum[g] += v;
        }
    }
    sum.iter().fold(0.0f64, |m, v| m.max((v - 1.0).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_global, subassemble, Discretization, Operator, ProblemData};
    use crate::dofs::{classify_interface, enumerate_dofs, subdomain_dofs};
    use crate::forest::{Forest, Pattern};
    use crate::linalg::{DenseLdlt, DenseMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Unit;
    impl ProblemData for Unit {
        fn operator(&self) -> Operator {
            Operator::Laplace
        }
        fn source(&self, _: [f64; 3], out: &mut [f64]) {
            out[0] = 1.0;
        }
        fn dirichlet(&self, x: [f64; 3], out: &mut [f64]) {
            out[0] = 0.1 * x[0];
        }
    }

    struct Setup {
        disc: Discretization,
        systems: Vec<SubdomainSystem>,
        ic: InterfaceClassification,
        global: SubdomainSystem,
    }

    fn setup(f: &Forest, p: usize, ns: usize) -> Setup {
        let disc = Discretization::new(f, enumerate_dofs(f, p).unwrap(), &Unit).unwrap();
        let part = f.partition_equal(ns).unwrap();
        let sets = subdomain_dofs(&disc.map, &part, 1, &disc.free);
        let ic = classify_interface(disc.n_dofs(), sets.clone());
        let systems = (0..ns).map(|s| subassemble(&disc, f, &part.elements(s), sets[s].clone(), &Unit)).collect();
        let global = assemble_global(&disc, f, &Unit);
        Setup { disc, systems, ic, global }
    }

    /// Dense Schur complement of the assembled matrix onto the interface.
    fn dense_schur(st: &Setup) -> (DenseMatrix, Vec<f64>) {
        let a = st.global.a.to_dense();
        let pos = |d: usize| st.global.global_dofs.binary_search(&d).unwrap();
        let gam: Vec<usize> = st.ic.interface.iter().map(|&d| pos(d)).collect();
        let int: Vec<usize> = (0..st.global.n()).filter(|k| !gam.contains(k)).collect();
        let sub = |r: &[usize], c: &[usize]| {
            let mut m = DenseMatrix::zeros(r.len(), c.len());
            for (i, &ri) in r.iter().enumerate() {
                for (j, &cj) in c.iter().enumerate() {
                    m.set(i, j, a.get(ri, cj));
                }
            }
            m
        };
        let (aii, aig, agg) = (sub(&int, &int), sub(&int, &gam), sub(&gam, &gam));
        let fac = DenseLdlt::new(&aii, 1e-14).unwrap();
        let mut s = agg.clone();
        let mut x = DenseMatrix::zeros(int.len(), gam.len());
        for j in 0..gam.len() {
            let col = fac.solve(&aig.column(j)).unwrap();
            for i in 0..int.len() {
                x.set(i, j, col[i]);
            }
        }
        let corr = aig.transpose().matmul(&x);
        for i in 0..s.data.len() {
            s.data[i] -= corr.data[i];
        }
        let fi: Vec<f64> = int.iter().map(|&k| st.global.f[k]).collect();
        let y = fac.solve(&fi).unwrap();
        let c = aig.matvec_t(&y);
        let g: Vec<f64> = gam.iter().zip(&c).map(|(&k, ci)| st.global.f[k] - ci).collect();
        (s, g)
    }

    #[test]
    fn matches_dense_schur_oracle() {
        let f = Forest::uniform(2, 2).unwrap().apply_pattern(Pattern::Square, 2).unwrap();
        for (p, ns) in [(1, 3), (2, 4), (4, 2)] {
            let st = setup(&f, p, ns);
            let op = build_schur(&st.systems, &st.ic).unwrap();
            let (s, g) = dense_schur(&st);
            let sd = op.to_dense();
            let scale = s.max_abs();
            for i in 0..s.data.len() {
                assert!((sd.data[i] - s.data[i]).abs() <= 1e-8 * scale);
            }
            let gr = reduced_rhs(&op, &st.systems);
            for (a, b) in gr.iter().zip(&g) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn schur_is_positive_definite() {
        let f = Forest::uniform(3, 2).unwrap();
        let st = setup(&f, 1, 8);
        let op = build_schur(&st.systems, &st.ic).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let x: Vec<f64> = (0..op.n_interface).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sx = op.apply(&x);
            assert!(crate::linalg::dot(&x, &sx) > 0.0);
        }
    }

    #[test]
    fn interior_recovery_reproduces_direct_solve() {
        let f = Forest::uniform(2, 3).unwrap().apply_pattern(Pattern::Circle, 1).unwrap();
        let st = setup(&f, 2, 5);
        let op = build_schur(&st.systems, &st.ic).unwrap();
        let fac = crate::linalg::SparseCholesky::new(&st.global.a, 1e-14).unwrap();
        let direct = fac.solve(&st.global.f);
        let ug: Vec<f64> = st.ic.interface.iter().map(|&d| direct[st.global.global_dofs.binary_search(&d).unwrap()]).collect();
        let u = recover_interior(&op, &st.systems, &st.ic, &ug, &st.disc.boundary_values);
        for (k, &d) in st.global.global_dofs.iter().enumerate() {
            assert!((u[d] - direct[k]).abs() < 1e-8);
        }
        for d in 0..st.disc.n_dofs() {
            if !st.disc.free[d] {
                assert_eq!(u[d], st.disc.boundary_values[d]);
            }
        }
    }

    #[test]
    fn single_subdomain_has_empty_interface() {
        let f = Forest::uniform(2, 2).unwrap();
        let st = setup(&f, 1, 1);
        let op = build_schur(&st.systems, &st.ic).unwrap();
        assert_eq!(op.n_interface, 0);
        assert!(reduced_rhs(&op, &st.systems).is_empty());
        let u = recover_interior(&op, &st.systems, &st.ic, &[], &st.disc.boundary_values);
        let direct = crate::linalg::SparseCholesky::new(&st.global.a, 1e-14).unwrap().solve(&st.global.f);
        for (k, &d) in st.global.global_dofs.iter().enumerate() {
            assert!((u[d] - direct[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_form_partition_of_unity() {
        let f = Forest::uniform(3, 2).unwrap().apply_pattern(Pattern::Square, 1).unwrap();
        for ns in [3, 8, 13] {
            let st = setup(&f, 1, ns);
            for mode in [WeightMode::Cardinality, WeightMode::Stiffness] {
                let w = build_weights(&st.ic, &st.systems, mode).unwrap();
                assert!(partition_of_unity_defect(&st.ic, &w) <= 1e-12);
            }
        }
    }

    #[test]
    fn equal_stiffness_gives_cardinality_weights() {
        let f = Forest::uniform(2, 2).unwrap();
        let st = setup(&f, 1, 2);
        let c = build_weights(&st.ic, &st.systems, WeightMode::Cardinality).unwrap();
        let s = build_weights(&st.ic, &st.systems, WeightMode::Stiffness).unwrap();
        for (a, b) in c.iter().flatten().zip(s.iter().flatten()) {
            assert!((a - 0.5).abs() < 1e-15);
            assert!((a - b).abs() < 1e-14);
        }
    }
}
