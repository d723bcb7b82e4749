use std::collections::{BTreeMap, BTreeSet};

use crate::assembly::{Discretization, Operator};
use crate::dofs::InterfaceClassification;
use crate::forest::{ComponentLabeling, Partition};

use super::BddcError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintKind {
    /// Point value at one node.
    Corner,
    Edge,
    Face,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintPolicy {
    /// Add point constraints picked by the neighbor-pair corner heuristic.
    pub corners: bool,
    /// Constrain single-node globs as point values.
    pub vertex_rows: bool,
}

impl ConstraintPolicy {
    pub const AVERAGES: ConstraintPolicy = ConstraintPolicy { corners: false, vertex_rows: false };
    pub const AVERAGES_AND_CORNERS: ConstraintPolicy = ConstraintPolicy { corners: true, vertex_rows: false };

    pub fn for_operator(op: Operator) -> Self {
        match op {
            Operator::Laplace => Self::AVERAGES,
            Operator::Elasticity(_) => Self::AVERAGES_AND_CORNERS,
        }
    }
}

/// Algebraic description of one level of the decomposition.
#[derive(Debug, Clone)]
pub struct LevelTopology {
    /// Solution component of every global DOF.
    pub dof_field: Vec<usize>,
    /// Node carrying every global DOF.
    pub dof_node: Vec<usize>,
    pub node_coords: Vec<[f64; 3]>,
    /// Per subdomain, the subdomain component of each local DOF.
    pub dof_component: Vec<Vec<usize>>,
    pub n_components: Vec<usize>,
    /// Per subdomain component: no Dirichlet DOF in its closure.
    pub floating: Vec<Vec<bool>>,
    /// Dimension of the local kernel of a floating component.
    pub kernel_dim: usize,
}

impl LevelTopology {
    pub fn from_discretization(disc: &Discretization, partition: &Partition, labeling: &ComponentLabeling, ic: &InterfaceClassification) -> Self {
        let nc = disc.ncomp;
        let n = disc.n_dofs();
        let mut dof_component = Vec::with_capacity(partition.num_subdomains);
        let mut floating = Vec::with_capacity(partition.num_subdomains);
        for s in 0..partition.num_subdomains {
            let dofs = &ic.subdomain_dofs[s];
            let mut comp = vec![usize::MAX; dofs.len()];
            let mut fl = vec![true; labeling.n_components[s]];
            for e in partition.elements(s) {
                let k = labeling.component[e];
                for d in disc.element_dofs(e) {
                    if !disc.free[d] {
                        fl[k] = false;
                        continue;
                    }
                    let l = dofs.binary_search(&d).expect("element DOF outside its subdomain");
                    comp[l] = comp[l].min(k);
                }
            }
            dof_component.push(comp);
            floating.push(fl);
        }
        let kernel_dim = match disc.operator {
            Operator::Laplace => 1,
            Operator::Elasticity(_) => {
                if disc.dim == 3 {
                    6
                } else {
                    3
                }
            }
        };
        LevelTopology {
            dof_field: (0..n).map(|d| d % nc).collect(),
            dof_node: (0..n).map(|d| d / nc).collect(),
            node_coords: disc.map.node_coords.clone(),
            dof_component,
            n_components: labeling.n_components.clone(),
            floating,
            kernel_dim,
        }
    }

    pub fn num_subdomains(&self) -> usize {
        self.dof_component.len()
    }
}

/// A global coarse degree of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseDof {
    pub kind: ConstraintKind,
    pub field: usize,
    /// Coarse node grouping the DOFs of one glob or corner over all fields.
    pub node: usize,
    /// Global DOFs averaged by this coarse DOF.
    pub dofs: Vec<usize>,
    /// Sorted `(subdomain, component)` pairs sharing it.
    pub owners: Vec<(usize, usize)>,
}

/// Row of `C_i` over local DOFs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub coarse: usize,
    pub component: usize,
    pub kind: ConstraintKind,
    pub entries: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub coarse: Vec<CoarseDof>,
    pub coarse_node_coords: Vec<[f64; 3]>,
    /// Per subdomain, rows in increasing coarse index.
    pub rows: Vec<Vec<ConstraintRow>>,
}

impl ConstraintSet {
    pub fn n_coarse(&self) -> usize {
        self.coarse.len()
    }

    /// `R_Ci` as the list of global coarse indices of subdomain `s`.
    pub fn coarse_map(&self, s: usize) -> Vec<usize> {
        self.rows[s].iter().map(|r| r.coarse).collect()
    }

    pub fn count(&self, kind: ConstraintKind) -> usize {
        self.coarse.iter().filter(|c| c.kind == kind).count()
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

/// Up to three mutually distant, non-collinear nodes from `nodes`.
fn pick_corners(nodes: &[usize], coords: &[[f64; 3]]) -> Vec<usize> {
    let far_from = |p: &[f64; 3]| {
        let mut best = nodes[0];
        let mut bd = -1.0;
        for &n in nodes {
            let d = dist2(&coords[n], p);
            if d > bd {
                bd = d;
                best = n;
            }
        }
        best
    };
    let a = far_from(&coords[nodes[0]]);
    let b = far_from(&coords[a]);
    if a == b {
        return vec![a];
    }
    let (pa, pb) = (coords[a], coords[b]);
    let ab = [pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]];
    let ab2 = ab.iter().map(|x| x * x).sum::<f64>();
    let mut best = None;
    let mut bd = 1e-12 * ab2;
    for &n in nodes {
        let p = coords[n];
        let ap = [p[0] - pa[0], p[1] - pa[1], p[2] - pa[2]];
        let cr = [ab[1] * ap[2] - ab[2] * ap[1], ab[2] * ap[0] - ab[0] * ap[2], ab[0] * ap[1] - ab[1] * ap[0]];
        let area2 = cr.iter().map(|x| x * x).sum::<f64>() / ab2;
        if area2 > bd {
            bd = area2;
            best = Some(n);
        }
    }
    let mut out = vec![a, b];
    out.extend(best);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum NodeKey {
    Glob(Vec<(usize, usize)>),
    Point(usize),
}

type Owners = Vec<(usize, usize)>;

/// (first dof, kind, field, node key, dofs, owners)
type Entity = (usize, ConstraintKind, usize, NodeKey, Vec<usize>, Owners);

/// Coarse degrees of freedom and the constraint rows of every subdomain.
///
/// Averages are taken per glob and per solution component; globs are keyed by
/// the `(subdomain, component)` pairs sharing them, so each row lives on a
/// single subdomain component. A glob shared by two subdomains is a face even
/// when it holds one node. Single-node globs with more owners are dropped
/// unless `policy.vertex_rows` is set or a floating component sharing them
/// would otherwise have fewer than `kernel_dim` rows.
pub fn select_constraints(ic: &InterfaceClassification, topo: &LevelTopology, policy: ConstraintPolicy) -> Result<ConstraintSet, BddcError> {
    let ns = ic.num_subdomains();
    let mut owners: Vec<Vec<(usize, usize)>> = vec![Vec::new(); ic.n_interface()];
    for s in 0..ns {
        for (&l, &k) in ic.interface_local[s].iter().zip(&ic.interface_map[s]) {
            owners[k].push((s, topo.dof_component[s][l]));
        }
    }
    for o in owners.iter_mut() {
        o.sort_unstable();
        o.dedup();
    }

    let mut corner_nodes = BTreeSet::new();
    if policy.corners {
        let mut node_owners: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for (k, &d) in ic.interface.iter().enumerate() {
            let e = node_owners.entry(topo.dof_node[d]).or_default();
            e.extend_from_slice(&owners[k]);
        }
        let mut pairs: BTreeMap<[(usize, usize); 2], Vec<usize>> = BTreeMap::new();
        for (&node, o) in node_owners.iter_mut() {
            o.sort_unstable();
            o.dedup();
            for i in 0..o.len() {
                for j in i + 1..o.len() {
                    if o[i].0 != o[j].0 {
                        pairs.entry([o[i], o[j]]).or_default().push(node);
                    }
                }
            }
        }
        for nodes in pairs.values() {
            corner_nodes.extend(pick_corners(nodes, &topo.node_coords));
        }
    }

    let mut entities: Vec<Entity> = Vec::new();
    let mut globs: BTreeMap<(Owners, usize), Vec<usize>> = BTreeMap::new();
    for (k, &d) in ic.interface.iter().enumerate() {
        let node = topo.dof_node[d];
        if corner_nodes.contains(&node) {
            entities.push((d, ConstraintKind::Corner, topo.dof_field[d], NodeKey::Point(node), vec![d], owners[k].clone()));
        } else {
            globs.entry((owners[k].clone(), topo.dof_field[d])).or_default().push(d);
        }
    }
    let mut skipped = Vec::new();
    for ((o, field), dofs) in globs {
        let mut nodes: Vec<usize> = dofs.iter().map(|&d| topo.dof_node[d]).collect();
        nodes.sort_unstable();
        nodes.dedup();
        let mut subs: Vec<usize> = o.iter().map(|x| x.0).collect();
        subs.dedup();
        let (kind, key) = if subs.len() == 2 {
            (ConstraintKind::Face, NodeKey::Glob(o.clone()))
        } else if nodes.len() == 1 {
            if !policy.vertex_rows {
                skipped.push((dofs[0], field, nodes[0], dofs, o));
                continue;
            }
            (ConstraintKind::Corner, NodeKey::Point(nodes[0]))
        } else {
            (ConstraintKind::Edge, NodeKey::Glob(o.clone()))
        };
        entities.push((dofs[0], kind, field, key, dofs, o));
    }

    // Floating components short of rows get all their vertices as point constraints.
    let mut count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for e in &entities {
        for &sc in &e.5 {
            *count.entry(sc).or_default() += 1;
        }
    }
    let short = |sc: &(usize, usize)| topo.floating[sc.0][sc.1] && count.get(sc).copied().unwrap_or(0) < topo.kernel_dim;
    for (d, field, node, dofs, o) in skipped {
        if o.iter().any(short) {
            entities.push((d, ConstraintKind::Corner, field, NodeKey::Point(node), dofs, o));
        }
    }
    entities.sort_by_key(|e| (e.0, e.2));

    let mut node_ids: BTreeMap<NodeKey, usize> = BTreeMap::new();
    let mut node_sets: Vec<BTreeSet<usize>> = Vec::new();
    let mut coarse = Vec::with_capacity(entities.len());
    for (_, kind, field, key, dofs, o) in entities {
        let next = node_ids.len();
        let id = *node_ids.entry(key).or_insert(next);
        if id == node_sets.len() {
            node_sets.push(BTreeSet::new());
        }
        node_sets[id].extend(dofs.iter().map(|&d| topo.dof_node[d]));
        coarse.push(CoarseDof { kind, field, node: id, dofs, owners: o });
    }
    let coarse_node_coords = node_sets
        .iter()
        .map(|set| {
            let mut c = [0.0; 3];
            for &n in set {
                for i in 0..3 {
                    c[i] += topo.node_coords[n][i];
                }
            }
            c.map(|x| x / set.len() as f64)
        })
        .collect();

    let mut rows: Vec<Vec<ConstraintRow>> = vec![Vec::new(); ns];
    for (q, c) in coarse.iter().enumerate() {
        let w = 1.0 / c.dofs.len() as f64;
        let mut i = 0;
        while i < c.owners.len() {
            let (s, comp) = c.owners[i];
            while i < c.owners.len() && c.owners[i].0 == s {
                i += 1;
            }
            let sd = &ic.subdomain_dofs[s];
            let entries = c.dofs.iter().map(|d| (sd.binary_search(d).expect("glob DOF outside owner"), w)).collect();
            rows[s].push(ConstraintRow { coarse: q, component: comp, kind: c.kind, entries });
        }
    }

    for s in 0..ns {
        for k in 0..topo.n_components[s] {
            if topo.floating[s][k] {
                let n = rows[s].iter().filter(|r| r.component == k).count();
                if n < topo.kernel_dim {
                    return Err(BddcError::UnderConstrained { subdomain: s, component: k, rows: n, kernel: topo.kernel_dim });
                }
            }
        }
    }
    Ok(ConstraintSet { coarse, coarse_node_coords, rows })
}
