//! Element matrices, the hanging-node transform and per-subdomain
//! subassembly with symmetric Dirichlet elimination.

use std::fmt::Write as _;

use thiserror::Error;

use crate::basis::{gauss_legendre, gll_points, lagrange, lagrange_deriv};
use crate::dofs::{local_multi_index, DofMap, Transition};
use crate::forest::{CellGeometry, Forest};
use crate::linalg::{format_coordinate, DenseMatrix, SymSparse, Triplets};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("Poisson ratio {nu} outside (-1, 1/2): the Lamé parameter λ is singular or negative")]
    PoissonRatio { nu: f64 },
    #[error("elasticity needs a 3D mesh")]
    ElasticityDimension,
}

/// Lamé parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lame {
    pub lambda: f64,
    pub mu: f64,
}

impl Lame {
    pub fn from_young(e: f64, nu: f64) -> Result<Lame, AssemblyError> {
        if !(nu > -1.0 && nu < 0.5) {
            return Err(AssemblyError::PoissonRatio { nu });
        }
        Ok(Lame { lambda: nu * e / ((1.0 + nu) * (1.0 - 2.0 * nu)), mu: e / (2.0 * (1.0 + nu)) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Operator {
    /// `-Δu`
    Laplace,
    /// Navier operator with the given Lamé parameters.
    Elasticity(Lame),
}

impl Operator {
    pub fn ncomp(&self, dim: usize) -> usize {
        match self {
            Operator::Laplace => 1,
            Operator::Elasticity(_) => dim,
        }
    }
}

/// Coefficients and data of a boundary value problem on the unit square/cube.
/// Dirichlet conditions hold on the whole boundary.
pub trait ProblemData: Sync {
    fn operator(&self) -> Operator;
    /// Right-hand side at `x`, one value per solution component.
    fn source(&self, x: [f64; 3], out: &mut [f64]);
    /// Boundary values at `x`.
    fn dirichlet(&self, x: [f64; 3], out: &mut [f64]);
}

/// Dense element stiffness and load.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementMatrix {
    pub a: DenseMatrix,
    pub f: Vec<f64>,
}

/// Tabulated tensor-product Lobatto basis on the unit cell.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub dim: usize,
    pub p: usize,
    pub nloc: usize,
    /// Load quadrature (`p + 2` points per direction): points, weights, basis values.
    load_pts: Vec<[f64; 3]>,
    load_wts: Vec<f64>,
    load_phi: Vec<Vec<f64>>,
    /// Stiffness quadrature (`p + 1` points per direction): weights and reference gradients.
    stiff_wts: Vec<f64>,
    stiff_grad: Vec<Vec<[f64; 3]>>,
}

fn tensor_rule(dim: usize, n: usize) -> (Vec<[f64; 3]>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let total = n.pow(dim as u32);
    let mut pts = Vec::with_capacity(total);
    let mut wts = Vec::with_capacity(total);
    for q in 0..total {
        let mut r = q;
        let mut pt = [0.0; 3];
        let mut wt = 1.0;
        for a in 0..dim {
            pt[a] = x[r % n];
            wt *= w[r % n];
            r /= n;
        }
        pts.push(pt);
        wts.push(wt);
    }
    (pts, wts)
}

impl ReferenceElement {
    pub fn new(dim: usize, p: usize) -> Self {
        Self::with_load_points(dim, p, p + 2)
    }

    pub fn with_load_points(dim: usize, p: usize, nq: usize) -> Self {
        let nloc = (p + 1).pow(dim as u32);
        let (load_pts, load_wts) = tensor_rule(dim, nq);
        let load_phi = load_pts.iter().map(|x| Self::eval_basis(dim, p, *x)).collect();
        let (spts, stiff_wts) = tensor_rule(dim, p + 1);
        let stiff_grad = spts.iter().map(|x| Self::eval_grad(dim, p, *x)).collect();
        Self { dim, p, nloc, load_pts, load_wts, load_phi, stiff_wts, stiff_grad }
    }

    /// Basis values at a reference point.
    pub fn eval_basis(dim: usize, p: usize, x: [f64; 3]) -> Vec<f64> {
        let gll = gll_points(p);
        let v: Vec<Vec<f64>> = (0..dim).map(|a| lagrange(&gll, x[a])).collect();
        (0..(p + 1).pow(dim as u32))
            .map(|k| {
                let m = local_multi_index(dim, p, k);
                (0..dim).map(|a| v[a][m[a]]).product()
            })
            .collect()
    }

    /// Reference gradients at a reference point.
    pub fn eval_grad(dim: usize, p: usize, x: [f64; 3]) -> Vec<[f64; 3]> {
        let gll = gll_points(p);
        let v: Vec<Vec<f64>> = (0..dim).map(|a| lagrange(&gll, x[a])).collect();
        let d: Vec<Vec<f64>> = (0..dim).map(|a| lagrange_deriv(&gll, x[a])).collect();
        (0..(p + 1).pow(dim as u32))
            .map(|k| {
                let m = local_multi_index(dim, p, k);
                let mut g = [0.0; 3];
                for a in 0..dim {
                    g[a] = (0..dim).map(|b| if a == b { d[b][m[b]] } else { v[b][m[b]] }).product();
                }
                g
            })
            .collect()
    }

    /// Stiffness of the unit cell; a cell of edge `h` scales it by `h^(d-2)`.
    pub fn unit_stiffness(&self, op: Operator) -> DenseMatrix {
        let (dim, n) = (self.dim, self.nloc);
        match op {
            Operator::Laplace => {
                let mut k = DenseMatrix::zeros(n, n);
                for (q, w) in self.stiff_wts.iter().enumerate() {
                    let g = &self.stiff_grad[q];
                    for i in 0..n {
                        for j in 0..=i {
                            let mut s = 0.0;
                            for a in 0..dim {
                                s += g[i][a] * g[j][a];
                            }
                            k.add(i, j, w * s);
                        }
                    }
                }
                mirror(&mut k);
                k
            }
            Operator::Elasticity(Lame { lambda, mu }) => {
                let c = dim;
                let mut k = DenseMatrix::zeros(n * c, n * c);
                for (q, w) in self.stiff_wts.iter().enumerate() {
                    let g = &self.stiff_grad[q];
                    for i in 0..n {
                        for j in 0..n {
                            let dot: f64 = (0..dim).map(|a| g[i][a] * g[j][a]).sum();
                            for a in 0..c {
                                for b in 0..c {
                                    // λ div div + 2μ ε:ε
                                    let mut v = lambda * g[i][a] * g[j][b] + mu * g[i][b] * g[j][a];
                                    if a == b {
                                        v += mu * dot;
                                    }
                                    k.add(i * c + a, j * c + b, w * v);
                                }
                            }
                        }
                    }
                }
                k.symmetrize();
                k
            }
        }
    }

    /// `∫ f φ_i` over the cell, component-interleaved.
    pub fn load(&self, geom: &CellGeometry, ncomp: usize, source: &mut dyn FnMut([f64; 3], &mut [f64])) -> Vec<f64> {
        let mut f = vec![0.0; self.nloc * ncomp];
        let vol = geom.h.powi(self.dim as i32);
        let mut val = vec![0.0; ncomp];
        for (q, xr) in self.load_pts.iter().enumerate() {
            let mut x = [0.0; 3];
            for a in 0..self.dim {
                x[a] = geom.lower[a] + geom.h * xr[a];
            }
            source(x, &mut val);
            let w = self.load_wts[q] * vol;
            for i in 0..self.nloc {
                let phi = self.load_phi[q][i];
                for c in 0..ncomp {
                    f[i * ncomp + c] += w * phi * val[c];
                }
            }
        }
        f
    }
}

/// Copy the lower triangle to the upper one.
fn mirror(k: &mut DenseMatrix) {
    for i in 0..k.nrows {
        for j in 0..i {
            let v = k.get(i, j);
            k.set(j, i, v);
        }
    }
}

/// Poisson stiffness `∫ ∇φ_i·∇φ_k` and load `∫ f φ_i` on an axis-aligned cell.
pub fn element_poisson(dim: usize, p: usize, geom: &CellGeometry, source: &dyn Fn([f64; 3]) -> f64) -> ElementMatrix {
    let re = ReferenceElement::new(dim, p);
    let mut a = re.unit_stiffness(Operator::Laplace);
    let s = geom.h.powi(dim as i32 - 2);
    a.data.iter_mut().for_each(|v| *v *= s);
    let f = re.load(geom, 1, &mut |x, out| out[0] = source(x));
    ElementMatrix { a, f }
}

/// Linear elasticity stiffness and body-force load on a 3D cell.
pub fn element_elasticity(p: usize, geom: &CellGeometry, young: f64, nu: f64, force: [f64; 3]) -> Result<ElementMatrix, AssemblyError> {
    let lame = Lame::from_young(young, nu)?;
    let re = ReferenceElement::new(3, p);
    let mut a = re.unit_stiffness(Operator::Elasticity(lame));
    a.data.iter_mut().for_each(|v| *v *= geom.h);
    let f = re.load(geom, 3, &mut |_, out| out.copy_from_slice(&force));
    Ok(ElementMatrix { a, f })
}

/// `Ā = TᵀAT`, `f̄ = Tᵀf` with `T` acting node-wise on `ncomp` components.
pub fn transform_element(elem: &ElementMatrix, t: Option<&Transition>, ncomp: usize) -> ElementMatrix {
    let Some(t) = t else { return elem.clone() };
    let n = elem.a.nrows;
    // sparse columns of the expanded T: for each row, its (col, value) pairs
    let mut trows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| vec![(i, 1.0)]).collect();
    for (node, row) in &t.rows {
        for c in 0..ncomp {
            trows[node * ncomp + c] = row.iter().map(|&(k, v)| (k * ncomp + c, v)).collect();
        }
    }
    // B = A T
    let mut b = DenseMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let aji = elem.a.get(j, i);
            if aji == 0.0 {
                continue;
            }
            for &(k, w) in &trows[i] {
                b.add(j, k, aji * w);
            }
        }
    }
    // Tᵀ B
    let mut a = DenseMatrix::zeros(n, n);
    let mut f = vec![0.0; n];
    for i in 0..n {
        for &(k, w) in &trows[i] {
            for m in 0..n {
                a.add(k, m, w * b.get(i, m));
            }
            f[k] += w * elem.f[i];
        }
    }
    a.symmetrize();
    ElementMatrix { a, f }
}

/// Everything needed to assemble on a numbered mesh.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub dim: usize,
    pub order: usize,
    pub ncomp: usize,
    pub operator: Operator,
    pub map: DofMap,
    /// Per global DOF (`node * ncomp + component`): false on Dirichlet DOFs.
    pub free: Vec<bool>,
    /// Prescribed values on Dirichlet DOFs, zero elsewhere.
    pub boundary_values: Vec<f64>,
    reference: ReferenceElement,
    unit_stiffness: DenseMatrix,
}

impl Discretization {
    pub fn new(forest: &Forest, map: DofMap, problem: &dyn ProblemData) -> Result<Self, AssemblyError> {
        let dim = forest.dim();
        let operator = problem.operator();
        if matches!(operator, Operator::Elasticity(_)) && dim != 3 {
            return Err(AssemblyError::ElasticityDimension);
        }
        let ncomp = operator.ncomp(dim);
        let n = map.n_global * ncomp;
        let mut free = vec![true; n];
        let mut boundary_values = vec![0.0; n];
        let mut val = vec![0.0; ncomp];
        for g in 0..map.n_global {
            if map.node_on_boundary[g] {
                problem.dirichlet(map.node_coords[g], &mut val);
                for c in 0..ncomp {
                    free[g * ncomp + c] = false;
                    boundary_values[g * ncomp + c] = val[c];
                }
            }
        }
        let reference = ReferenceElement::new(dim, map.order);
        let unit_stiffness = reference.unit_stiffness(operator);
        Ok(Self { dim, order: map.order, ncomp, operator, map, free, boundary_values, reference, unit_stiffness })
    }

    pub fn n_dofs(&self) -> usize {
        self.free.len()
    }

    pub fn n_free(&self) -> usize {
        self.free.iter().filter(|&&f| f).count()
    }

    /// Element matrix after the hanging-node transform.
    pub fn element(&self, forest: &Forest, e: usize, problem: &dyn ProblemData) -> ElementMatrix {
        let geom = forest.geometry(e);
        let mut a = self.unit_stiffness.clone();
        let s = geom.h.powi(self.dim as i32 - 2);
        a.data.iter_mut().for_each(|v| *v *= s);
        let f = self.reference.load(&geom, self.ncomp, &mut |x, out| problem.source(x, out));
        transform_element(&ElementMatrix { a, f }, self.map.transition(e), self.ncomp)
    }

    /// Global DOFs of element `e` in local order.
    pub fn element_dofs(&self, e: usize) -> Vec<usize> {
        let c = self.ncomp;
        self.map.element_nodes(e).iter().flat_map(|&g| (0..c).map(move |k| g * c + k)).collect()
    }
}

/// Subdomain matrix and load over its free DOFs.
#[derive(Debug, Clone)]
pub struct SubdomainSystem {
    /// Sorted global DOFs; local index `k` is `global_dofs[k]`.
    pub global_dofs: Vec<usize>,
    pub a: SymSparse,
    pub f: Vec<f64>,
}

impl SubdomainSystem {
    pub fn n(&self) -> usize {
        self.global_dofs.len()
    }

    /// Coordinate dump of `A_i` followed by `local global` map lines.
    pub fn dump(&self) -> String {
        let mut s = format_coordinate(&self.a);
        writeln!(s, "# local_to_global").unwrap();
        for (k, g) in self.global_dofs.iter().enumerate() {
            writeln!(s, "{k} {g}").unwrap();
        }
        writeln!(s, "# rhs").unwrap();
        for v in &self.f {
            writeln!(s, "{v:e}").unwrap();
        }
        s
    }
}

/// Assemble `elements` over the given sorted free DOFs. Contributions to
/// Dirichlet DOFs move to the right-hand side.
pub fn subassemble(
    disc: &Discretization,
    forest: &Forest,
    elements: &[usize],
    global_dofs: Vec<usize>,
    problem: &dyn ProblemData,
) -> SubdomainSystem {
    let n = global_dofs.len();
    let nel = disc.map.nodes_per_element() * disc.ncomp;
    let mut t = Triplets::with_capacity(n, n, elements.len() * nel * (nel + 1) / 2);
    let mut f = vec![0.0; n];
    let mut local = vec![usize::MAX; nel];
    for &e in elements {
        let em = disc.element(forest, e, problem);
        let dofs = disc.element_dofs(e);
        for (k, &d) in dofs.iter().enumerate() {
            local[k] = if disc.free[d] {
                global_dofs.binary_search(&d).expect("element DOF outside subdomain set")
            } else {
                usize::MAX
            };
        }
        for i in 0..nel {
            let li = local[i];
            if li == usize::MAX {
                continue;
            }
            f[li] += em.f[i];
            for j in 0..nel {
                let lj = local[j];
                let v = em.a.get(i, j);
                if lj == usize::MAX {
                    f[li] -= v * disc.boundary_values[dofs[j]];
                } else if lj <= li {
                    t.push(li, lj, v);
                }
            }
        }
    }
    let c = t.to_csr();
    let a = SymSparse { n, row_ptr: c.row_ptr, col_idx: c.col_idx, values: c.values };
    SubdomainSystem { global_dofs, a, f }
}

/// Monolithic system over all free DOFs.
pub fn assemble_global(disc: &Discretization, forest: &Forest, problem: &dyn ProblemData) -> SubdomainSystem {
    let dofs: Vec<usize> = (0..disc.n_dofs()).filter(|&d| disc.free[d]).collect();
    let all: Vec<usize> = (0..forest.len()).collect();
    subassemble(disc, forest, &all, dofs, problem)
}
