//! Global numbering of Lobatto nodes on a balanced forest with local
//! elimination of hanging nodes.
//!
//! Every element references exactly `(p+1)^d` global nodes. Element nodes on
//! a face or edge that is half of a coarser neighbor's face or edge carry no
//! global number of their own; the slot is re-targeted to the coarse node in
//! the same position, and the element's transition matrix row holds the
//! values of the coarse trace basis at the fine node.

mod interface;

pub use interface::{
    classify_globs, classify_interface, subdomain_dofs, Glob, GlobKind, InterfaceClassification,
};

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::basis::{gll_points, lagrange};
use crate::forest::{CellKey, Forest};
use crate::linalg::DenseMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DofError {
    #[error("forest must be 2:1 balanced before numbering")]
    Unbalanced,
    #[error("order {order} not supported in {dim}D")]
    Order { order: usize, dim: usize },
}

/// One coordinate of a node key: a grid plane, or the `i`-th interior
/// Lobatto point of the segment `[start, start + h]` (finest-level units).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum AxisKey {
    Fixed(u64),
    Free { start: u64, h: u64, i: u8 },
}

type NodeKey = [AxisKey; 3];

/// Sparse non-identity rows of a transition matrix `T_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// `(local row, [(local column, value)])`, rows ascending.
    pub rows: Vec<(usize, Vec<(usize, f64)>)>,
}

impl Transition {
    pub fn row(&self, i: usize) -> Option<&[(usize, f64)]> {
        self.rows.binary_search_by_key(&i, |r| r.0).ok().map(|k| self.rows[k].1.as_slice())
    }

    pub fn to_dense(&self, n: usize) -> DenseMatrix {
        let mut t = DenseMatrix::identity(n);
        for (i, row) in &self.rows {
            t.set(*i, *i, 0.0);
            for &(k, v) in row {
                t.set(*i, k, v);
            }
        }
        t
    }
}

#[derive(Debug, Clone)]
pub struct DofMap {
    pub dim: usize,
    pub order: usize,
    /// Number of global nodes.
    pub n_global: usize,
    /// Row-major `n_elements × (p+1)^d` local-to-global node table.
    pub elem_nodes: Vec<usize>,
    pub transitions: Vec<Option<Transition>>,
    pub node_coords: Vec<[f64; 3]>,
    pub node_on_boundary: Vec<bool>,
}

impl DofMap {
    pub fn nodes_per_element(&self) -> usize {
        (self.order + 1).pow(self.dim as u32)
    }

    pub fn n_elements(&self) -> usize {
        self.transitions.len()
    }

    pub fn element_nodes(&self, e: usize) -> &[usize] {
        let n = self.nodes_per_element();
        &self.elem_nodes[e * n..(e + 1) * n]
    }

    pub fn transition(&self, e: usize) -> Option<&Transition> {
        self.transitions[e].as_ref()
    }

    pub fn dense_transition(&self, e: usize) -> DenseMatrix {
        match &self.transitions[e] {
            Some(t) => t.to_dense(self.nodes_per_element()),
            None => DenseMatrix::identity(self.nodes_per_element()),
        }
    }

    /// Number of elements with at least one hanging node.
    pub fn constrained_elements(&self) -> usize {
        self.transitions.iter().filter(|t| t.is_some()).count()
    }

    /// Text dump: one `e` line per element with its global nodes, followed by
    /// the dense `T_j` rows for constrained elements.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let n = self.nodes_per_element();
        writeln!(s, "{} {} {} {}", self.dim, self.order, self.n_elements(), self.n_global).unwrap();
        for e in 0..self.n_elements() {
            write!(s, "e {e}").unwrap();
            for g in self.element_nodes(e) {
                write!(s, " {g}").unwrap();
            }
            writeln!(s).unwrap();
            if self.transitions[e].is_some() {
                let t = self.dense_transition(e);
                for i in 0..n {
                    write!(s, "T {e} {i}").unwrap();
                    for k in 0..n {
                        write!(s, " {:e}", t.get(i, k)).unwrap();
                    }
                    writeln!(s).unwrap();
                }
            }
        }
        s
    }
}

/// Multi-index `(i0, i1, i2)` of local node `k`.
pub fn local_multi_index(dim: usize, p: usize, k: usize) -> [usize; 3] {
    let q = p + 1;
    let mut m = [0; 3];
    let mut r = k;
    for a in 0..dim {
        m[a] = r % q;
        r /= q;
    }
    m
}

pub fn local_index(dim: usize, p: usize, m: [usize; 3]) -> usize {
    let q = p + 1;
    let mut k = 0;
    for a in (0..dim).rev() {
        k = k * q + m[a];
    }
    k
}

fn node_key(dim: usize, p: usize, anchor: [u64; 3], size: u64, m: [usize; 3]) -> NodeKey {
    let mut key = [AxisKey::Fixed(0); 3];
    for a in 0..dim {
        key[a] = if m[a] == 0 {
            AxisKey::Fixed(anchor[a])
        } else if m[a] == p {
            AxisKey::Fixed(anchor[a] + size)
        } else {
            AxisKey::Free { start: anchor[a], h: size, i: m[a] as u8 }
        };
    }
    key
}

/// Which local axes of an element entity are pinned to a side, and to which.
#[derive(Debug, Clone, Copy)]
struct Entity {
    /// `Some(0)` = min side, `Some(1)` = max side, `None` = tangential.
    side: [Option<usize>; 3],
}

impl Entity {
    fn contains(&self, dim: usize, p: usize, m: [usize; 3]) -> bool {
        (0..dim).all(|a| match self.side[a] {
            Some(s) => m[a] == s * p,
            None => true,
        })
    }
}

struct Builder<'a> {
    forest: &'a Forest,
    dim: usize,
    p: usize,
    nloc: usize,
    gll: Vec<f64>,
    /// Provisional global id per element slot.
    slots: Vec<usize>,
    rows: Vec<Option<Transition>>,
    keys: HashMap<NodeKey, usize>,
    coords: Vec<[f64; 3]>,
    boundary: Vec<bool>,
}

impl Builder<'_> {
    fn insert_key(&mut self, key: NodeKey) -> usize {
        if let Some(&g) = self.keys.get(&key) {
            return g;
        }
        let g = self.coords.len();
        let n = self.forest.global_extent();
        let scale = 1.0 / n as f64;
        let mut x = [0.0; 3];
        let mut bnd = false;
        for a in 0..self.dim {
            x[a] = match key[a] {
                AxisKey::Fixed(c) => {
                    bnd |= c == 0 || c == n;
                    c as f64 * scale
                }
                AxisKey::Free { start, h, i } => (start as f64 + self.gll[i as usize] * h as f64) * scale,
            };
        }
        self.keys.insert(key, g);
        self.coords.push(x);
        self.boundary.push(bnd);
        g
    }

    /// Constrain the slots of `e` on `ent` through the coarse leaf `o`.
    fn constrain(&mut self, e: usize, cell: CellKey, ent: Entity, o: usize, rows: &mut [Option<Vec<(usize, f64)>>]) {
        let (dim, p) = (self.dim, self.p);
        let ea = self.forest.global_anchor(&cell);
        let es = cell.fine_size(dim);
        let oc = self.forest.leaf(o);
        let oa = self.forest.global_anchor(&oc);
        let os = oc.fine_size(dim);
        // side indices of the entity in o's frame
        let mut o_side = [0usize; 3];
        for a in 0..dim {
            if let Some(s) = ent.side[a] {
                let plane = ea[a] + s as u64 * es;
                o_side[a] = if plane == oa[a] {
                    0
                } else {
                    debug_assert_eq!(plane, oa[a] + os);
                    p
                };
            }
        }
        let tangential: Vec<usize> = (0..dim).filter(|&a| ent.side[a].is_none()).collect();
        let o_rows = self.rows[o].clone();
        for k in 0..self.nloc {
            let m = local_multi_index(dim, p, k);
            if !ent.contains(dim, p, m) || rows[k].is_some() {
                continue;
            }
            // Lagrange weights of o's entity nodes at this fine node
            let per_axis: Vec<Vec<f64>> = tangential
                .iter()
                .map(|&t| {
                    let x = ((ea[t] - oa[t]) as f64 + self.gll[m[t]] * es as f64) / os as f64;
                    lagrange(&self.gll, x)
                })
                .collect();
            let mut row: Vec<(usize, f64)> = Vec::new();
            let ntan = tangential.len();
            let combos = (p + 1).pow(ntan as u32);
            for c in 0..combos {
                let mut om = o_side;
                let mut w = 1.0;
                let mut r = c;
                for (j, &t) in tangential.iter().enumerate() {
                    om[t] = r % (p + 1);
                    r /= p + 1;
                    w *= per_axis[j][om[t]];
                }
                if w == 0.0 {
                    continue;
                }
                let ok = local_index(dim, p, om);
                let expansion: Vec<(usize, f64)> = match o_rows.as_ref().and_then(|t| t.row(ok)) {
                    Some(r) => r.to_vec(),
                    None => vec![(ok, 1.0)],
                };
                for (oslot, v) in expansion {
                    // o's slot -> e's slot in the same position on the entity
                    let mut em = local_multi_index(dim, p, oslot);
                    for a in 0..dim {
                        if let Some(s) = ent.side[a] {
                            debug_assert_eq!(em[a], o_side[a], "coarse trace leaves the entity");
                            em[a] = s * p;
                        }
                    }
                    let es_slot = local_index(dim, p, em);
                    let g = self.slots[o * self.nloc + oslot];
                    let cur = &mut self.slots[e * self.nloc + es_slot];
                    if *cur == usize::MAX {
                        *cur = g;
                    } else {
                        debug_assert_eq!(*cur, g, "inconsistent hanging-node target");
                    }
                    match row.iter_mut().find(|(c, _)| *c == es_slot) {
                        Some(entry) => entry.1 += w * v,
                        None => row.push((es_slot, w * v)),
                    }
                }
            }
            row.retain(|&(_, v)| v.abs() > 1e-14);
            for entry in row.iter_mut() {
                if (entry.1 - 1.0).abs() <= 1e-14 {
                    entry.1 = 1.0;
                }
            }
            row.sort_by_key(|r| r.0);
            rows[k] = Some(row);
        }
    }

    fn coarse_neighbor(&self, parent: CellKey, offset: [i64; 3]) -> Result<Option<usize>, DofError> {
        let pc = parent.coords(self.dim);
        let mut c = [0i64; 3];
        for a in 0..3 {
            c[a] = pc[a] as i64 + offset[a];
        }
        let region = self.forest.overlapping(parent.tree_id, parent.level, c);
        if region.len() == 1 {
            let lvl = self.forest.leaf(region[0]).level;
            if lvl == parent.level {
                return Ok(Some(region[0]));
            }
            if lvl < parent.level {
                return Err(DofError::Unbalanced);
            }
        }
        Ok(None)
    }

    fn process(&mut self, e: usize) -> Result<(), DofError> {
        let (dim, p) = (self.dim, self.p);
        let cell = self.forest.leaf(e);
        let mut rows: Vec<Option<Vec<(usize, f64)>>> = vec![None; self.nloc];
        if let Some(parent) = cell.parent(dim) {
            let cc = cell.coords(dim);
            let bits = [cc[0] as usize & 1, cc[1] as usize & 1, cc[2] as usize & 1];
            // faces of e lying on the parent's boundary
            for n in 0..dim {
                let s = bits[n];
                let mut off = [0i64; 3];
                off[n] = if s == 0 { -1 } else { 1 };
                if let Some(o) = self.coarse_neighbor(parent, off)? {
                    let mut side = [None; 3];
                    side[n] = Some(s);
                    self.constrain(e, cell, Entity { side }, o, &mut rows);
                }
            }
            if dim == 3 {
                for a in 0..3 {
                    for b in a + 1..3 {
                        let (sa, sb) = (bits[a], bits[b]);
                        let mut off = [0i64; 3];
                        off[a] = if sa == 0 { -1 } else { 1 };
                        off[b] = if sb == 0 { -1 } else { 1 };
                        if let Some(o) = self.coarse_neighbor(parent, off)? {
                            let mut side = [None; 3];
                            side[a] = Some(sa);
                            side[b] = Some(sb);
                            self.constrain(e, cell, Entity { side }, o, &mut rows);
                        }
                    }
                }
            }
        }
        let anchor = self.forest.global_anchor(&cell);
        let size = cell.fine_size(dim);
        let mut t_rows = Vec::new();
        for k in 0..self.nloc {
            match rows[k].take() {
                Some(row) => {
                    if !(row.len() == 1 && row[0] == (k, 1.0)) {
                        t_rows.push((k, row));
                    }
                }
                None => {
                    let key = node_key(dim, p, anchor, size, local_multi_index(dim, p, k));
                    let g = self.insert_key(key);
                    self.slots[e * self.nloc + k] = g;
                }
            }
        }
        self.rows[e] = (!t_rows.is_empty()).then_some(Transition { rows: t_rows });
        Ok(())
    }
}

/// Number the nodes of order `p` on a balanced forest.
pub fn enumerate_dofs(forest: &Forest, p: usize) -> Result<DofMap, DofError> {
    let dim = forest.dim();
    let supported = match dim {
        2 => (1..=4).contains(&p),
        _ => matches!(p, 1 | 2 | 4),
    };
    if !supported {
        return Err(DofError::Order { order: p, dim });
    }
    if !forest.is_balanced() {
        return Err(DofError::Unbalanced);
    }
    let nloc = (p + 1).pow(dim as u32);
    let n = forest.len();
    let mut b = Builder {
        forest,
        dim,
        p,
        nloc,
        gll: gll_points(p),
        slots: vec![usize::MAX; n * nloc],
        rows: vec![None; n],
        keys: HashMap::new(),
        coords: Vec::new(),
        boundary: Vec::new(),
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&e| (forest.leaf(e).level, e));
    for e in order {
        b.process(e)?;
    }
    // renumber by first touch in Z-order
    let nprov = b.coords.len();
    let mut new_id = vec![usize::MAX; nprov];
    let mut next = 0;
    for s in b.slots.iter_mut() {
        debug_assert_ne!(*s, usize::MAX);
        if new_id[*s] == usize::MAX {
            new_id[*s] = next;
            next += 1;
        }
        *s = new_id[*s];
    }
    debug_assert_eq!(next, nprov);
    let mut node_coords = vec![[0.0; 3]; nprov];
    let mut node_on_boundary = vec![false; nprov];
    for old in 0..nprov {
        node_coords[new_id[old]] = b.coords[old];
        node_on_boundary[new_id[old]] = b.boundary[old];
    }
    Ok(DofMap {
        dim,
        order: p,
        n_global: nprov,
        elem_nodes: b.slots,
        transitions: b.rows,
        node_coords,
        node_on_boundary,
    })
}

/// Matrix form of [`DofMap::transition`] for element `e`: `T_j`.
pub fn build_transition(map: &DofMap, e: usize) -> DenseMatrix {
    map.dense_transition(e)
}
