use std::collections::BTreeMap;

use super::DofMap;
use crate::forest::{ComponentLabeling, Partition};

/// Interior/interface split of the subdomain DOF sets.
#[derive(Debug, Clone)]
pub struct InterfaceClassification {
    pub n_dofs: usize,
    /// Sorted global DOFs touched by each subdomain (Dirichlet DOFs excluded).
    pub subdomain_dofs: Vec<Vec<usize>>,
    /// Positions in `subdomain_dofs[i]` of interface DOFs.
    pub interface_local: Vec<Vec<usize>>,
    /// Positions in `subdomain_dofs[i]` of interior DOFs.
    pub interior_local: Vec<Vec<usize>>,
    /// Number of subdomains touching each global DOF.
    pub multiplicity: Vec<u32>,
    /// Global interface DOFs, ascending.
    pub interface: Vec<usize>,
    /// Global DOF -> position in `interface` (`usize::MAX` if interior or fixed).
    pub interface_index: Vec<usize>,
    /// `interface_map[i][k]` = interface position of `interface_local[i][k]` (the map `R_i^Γ`).
    pub interface_map: Vec<Vec<usize>>,
}

impl InterfaceClassification {
    pub fn num_subdomains(&self) -> usize {
        self.subdomain_dofs.len()
    }

    pub fn n_interface(&self) -> usize {
        self.interface.len()
    }
}

/// Free global DOFs referenced by the elements of each subdomain.
///
/// DOF numbering is `node * ncomp + component`; `free[dof]` is false on
/// Dirichlet DOFs.
pub fn subdomain_dofs(map: &DofMap, partition: &Partition, ncomp: usize, free: &[bool]) -> Vec<Vec<usize>> {
    let mut mark = vec![usize::MAX; map.n_global];
    (0..partition.num_subdomains)
        .map(|s| {
            let mut nodes = Vec::new();
            for e in partition.elements(s) {
                for &g in map.element_nodes(e) {
                    if mark[g] != s {
                        mark[g] = s;
                        nodes.push(g);
                    }
                }
            }
            nodes.sort_unstable();
            let mut dofs = Vec::with_capacity(nodes.len() * ncomp);
            for g in nodes {
                for c in 0..ncomp {
                    let d = g * ncomp + c;
                    if free[d] {
                        dofs.push(d);
                    }
                }
            }
            dofs
        })
        .collect()
}

/// A DOF is interface iff at least two subdomains reference it.
pub fn classify_interface(n_dofs: usize, subdomain_dofs: Vec<Vec<usize>>) -> InterfaceClassification {
    let mut multiplicity = vec![0u32; n_dofs];
    for dofs in &subdomain_dofs {
        for &d in dofs {
            multiplicity[d] += 1;
        }
    }
    let mut interface_index = vec![usize::MAX; n_dofs];
    let mut interface = Vec::new();
    for d in 0..n_dofs {
        if multiplicity[d] >= 2 {
            interface_index[d] = interface.len();
            interface.push(d);
        }
    }
    let mut interface_local = Vec::with_capacity(subdomain_dofs.len());
    let mut interior_local = Vec::with_capacity(subdomain_dofs.len());
    let mut interface_map = Vec::with_capacity(subdomain_dofs.len());
    for dofs in &subdomain_dofs {
        let (mut g, mut i, mut m) = (Vec::new(), Vec::new(), Vec::new());
        for (k, &d) in dofs.iter().enumerate() {
            if multiplicity[d] >= 2 {
                g.push(k);
                m.push(interface_index[d]);
            } else {
                i.push(k);
            }
        }
        interface_local.push(g);
        interior_local.push(i);
        interface_map.push(m);
    }
    InterfaceClassification {
        n_dofs,
        subdomain_dofs,
        interface_local,
        interior_local,
        multiplicity,
        interface,
        interface_index,
        interface_map,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GlobKind {
    /// Single node.
    Vertex,
    /// Shared by three or more subdomain components.
    Edge,
    /// Shared by exactly two subdomain components.
    Face,
}

/// Interface nodes sharing the same set of `(subdomain, component)` owners.
#[derive(Debug, Clone, PartialEq)]
pub struct Glob {
    pub kind: GlobKind,
    /// Sorted `(subdomain, component)` pairs.
    pub owners: Vec<(usize, usize)>,
    /// Global node ids, ascending.
    pub nodes: Vec<usize>,
}

impl Glob {
    pub fn subdomains(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.owners.iter().map(|o| o.0).collect();
        s.dedup();
        s
    }

    /// Component of subdomain `s` owning this glob (first one if several).
    pub fn components_of(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.owners.iter().filter(move |o| o.0 == s).map(|o| o.1)
    }
}

/// Group free interface nodes by their owner sets.
///
/// A node is interface when elements of two or more subdomains reference it.
/// Globs are ordered by their smallest node id.
pub fn classify_globs(map: &DofMap, partition: &Partition, components: &ComponentLabeling, node_free: &[bool]) -> Vec<Glob> {
    let mut owners: Vec<Vec<(usize, usize)>> = vec![Vec::new(); map.n_global];
    for s in 0..partition.num_subdomains {
        for e in partition.elements(s) {
            let c = components.component[e];
            for &g in map.element_nodes(e) {
                if node_free[g] && !owners[g].contains(&(s, c)) {
                    owners[g].push((s, c));
                }
            }
        }
    }
    let mut groups: BTreeMap<Vec<(usize, usize)>, Vec<usize>> = BTreeMap::new();
    for (g, mut o) in owners.into_iter().enumerate() {
        if o.is_empty() {
            continue;
        }
        o.sort_unstable();
        let nsub = {
            let mut s: Vec<usize> = o.iter().map(|x| x.0).collect();
            s.dedup();
            s.len()
        };
        if nsub >= 2 {
            groups.entry(o).or_default().push(g);
        }
    }
    let mut globs: Vec<Glob> = groups
        .into_iter()
        .map(|(owners, nodes)| {
            let kind = if nodes.len() == 1 {
                GlobKind::Vertex
            } else if owners.len() == 2 {
                GlobKind::Face
            } else {
                GlobKind::Edge
            };
            Glob { kind, owners, nodes }
        })
        .collect();
    globs.sort_by_key(|g| g.nodes[0]);
    globs
}
