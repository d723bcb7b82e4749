//! Fill-reducing orderings for sparse Cholesky.

use std::collections::{BTreeSet, VecDeque};

use super::sparse::SymSparse;

/// Undirected adjacency structure without self loops.
#[derive(Debug, Clone)]
pub struct Graph {
    pub xadj: Vec<usize>,
    pub adj: Vec<usize>,
}

impl Graph {
    pub fn from_sym(a: &SymSparse) -> Self {
        let n = a.dim();
        let mut deg = vec![0usize; n];
        for i in 0..n {
            for (j, _) in a.lower_row(i) {
                if j != i {
                    deg[i] += 1;
                    deg[j] += 1;
                }
            }
        }
        let mut xadj = vec![0usize; n + 1];
        for i in 0..n {
            xadj[i + 1] = xadj[i] + deg[i];
        }
        let mut next = xadj.clone();
        let mut adj = vec![0usize; xadj[n]];
        for i in 0..n {
            for (j, _) in a.lower_row(i) {
                if j != i {
                    adj[next[i]] = j;
                    next[i] += 1;
                    adj[next[j]] = i;
                    next[j] += 1;
                }
            }
        }
        Self { xadj, adj }
    }

    pub fn num_vertices(&self) -> usize {
        self.xadj.len() - 1
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[self.xadj[v]..self.xadj[v + 1]]
    }
}

const LEAF_SIZE: usize = 96;

struct Nd<'a> {
    g: &'a Graph,
    /// Stamp identifying the vertex set currently being processed.
    member: Vec<usize>,
    level: Vec<usize>,
    stamp: usize,
    out: Vec<usize>,
}

impl Nd<'_> {
    fn enter(&mut self, verts: &[usize]) -> usize {
        self.stamp += 1;
        for &v in verts {
            self.member[v] = self.stamp;
        }
        self.stamp
    }

    /// BFS levels from `root` restricted to the current set; returns vertices
    /// in visit order and level offsets.
    fn bfs(&mut self, root: usize, tag: usize) -> (Vec<usize>, Vec<usize>) {
        let mut order = vec![root];
        let mut offsets = vec![0usize];
        self.level[root] = 0;
        let visit = tag.wrapping_add(usize::MAX / 2);
        self.member[root] = visit;
        let mut head = 0;
        let mut cur_level = 0;
        while head < order.len() {
            let v = order[head];
            if self.level[v] != cur_level {
                cur_level = self.level[v];
                offsets.push(head);
            }
            head += 1;
            for &w in self.g.neighbors(v) {
                if self.member[w] == tag {
                    self.member[w] = visit;
                    self.level[w] = self.level[v] + 1;
                    order.push(w);
                }
            }
        }
        offsets.push(order.len());
        for &v in &order {
            self.member[v] = tag;
        }
        (order, offsets)
    }

    fn components(&mut self, verts: &[usize]) -> Vec<Vec<usize>> {
        let tag = self.enter(verts);
        let done = tag.wrapping_add(usize::MAX / 2);
        let mut comps = Vec::new();
        for &s in verts {
            if self.member[s] != tag {
                continue;
            }
            let mut comp = vec![s];
            self.member[s] = done;
            let mut head = 0;
            while head < comp.len() {
                let v = comp[head];
                head += 1;
                for &w in self.g.neighbors(v) {
                    if self.member[w] == tag {
                        self.member[w] = done;
                        comp.push(w);
                    }
                }
            }
            comps.push(comp);
        }
        comps
    }

    fn order(&mut self, verts: Vec<usize>) {
        if verts.len() <= LEAF_SIZE {
            self.min_degree(&verts);
            return;
        }
        let comps = self.components(&verts);
        if comps.len() > 1 {
            for c in comps {
                self.order(c);
            }
            return;
        }
        let tag = self.enter(&verts);
        // pseudo-peripheral root
        let mut root = verts[0];
        let (mut order, mut offsets) = self.bfs(root, tag);
        loop {
            let last = &order[offsets[offsets.len() - 2]..];
            let cand = *last
                .iter()
                .min_by_key(|&&v| self.g.neighbors(v).iter().filter(|&&w| self.member[w] == tag).count())
                .unwrap();
            let (o2, off2) = self.bfs(cand, tag);
            if off2.len() > offsets.len() {
                root = cand;
                order = o2;
                offsets = off2;
            } else {
                break;
            }
        }
        let _ = root;
        let nlev = offsets.len() - 1;
        if nlev < 3 {
            self.min_degree(&verts);
            return;
        }
        let n = verts.len() as f64;
        let mut best: Option<(usize, usize)> = None;
        for l in 1..nlev - 1 {
            let before = offsets[l] as f64;
            if before < 0.3 * n || before > 0.7 * n {
                continue;
            }
            let size = offsets[l + 1] - offsets[l];
            if best.is_none_or(|(_, s)| size < s) {
                best = Some((l, size));
            }
        }
        let l = match best {
            Some((l, _)) => l,
            None => {
                // pick the level splitting the set closest to half
                (1..nlev - 1)
                    .min_by_key(|&l| ((offsets[l] as f64) - 0.5 * n).abs() as usize)
                    .unwrap()
            }
        };
        let a = order[..offsets[l]].to_vec();
        let sep = order[offsets[l]..offsets[l + 1]].to_vec();
        let b = order[offsets[l + 1]..].to_vec();
        self.order(a);
        self.order(b);
        self.min_degree_tail(&sep);
    }

    fn min_degree_tail(&mut self, sep: &[usize]) {
        // separators are eliminated last in their natural BFS order
        self.out.extend_from_slice(sep);
    }

    /// Exact minimum degree on the induced subgraph of a small set.
    fn min_degree(&mut self, verts: &[usize]) {
        let tag = self.enter(verts);
        let mut local = std::collections::HashMap::with_capacity(verts.len());
        for (i, &v) in verts.iter().enumerate() {
            local.insert(v, i);
        }
        let mut adj: Vec<BTreeSet<usize>> = verts
            .iter()
            .map(|&v| {
                self.g
                    .neighbors(v)
                    .iter()
                    .filter(|&&w| self.member[w] == tag)
                    .map(|w| local[w])
                    .collect()
            })
            .collect();
        let mut alive = vec![true; verts.len()];
        for _ in 0..verts.len() {
            let v = (0..verts.len())
                .filter(|&i| alive[i])
                .min_by_key(|&i| (adj[i].len(), i))
                .unwrap();
            alive[v] = false;
            let nb: Vec<usize> = adj[v].iter().copied().collect();
            for &a in &nb {
                adj[a].remove(&v);
                for &b in &nb {
                    if a != b {
                        adj[a].insert(b);
                    }
                }
            }
            adj[v].clear();
            self.out.push(verts[v]);
        }
    }
}

/// Nested dissection ordering; `perm[k]` is the original vertex eliminated at step `k`.
pub fn nested_dissection(g: &Graph) -> Vec<usize> {
    let n = g.num_vertices();
    let mut nd = Nd { g, member: vec![0; n], level: vec![0; n], stamp: 0, out: Vec::with_capacity(n) };
    nd.order((0..n).collect());
    debug_assert_eq!(nd.out.len(), n);
    nd.out
}

/// Breadth-first component labelling used by callers that need connectivity only.
pub fn connected_components(g: &Graph) -> Vec<usize> {
    let n = g.num_vertices();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut q = VecDeque::new();
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = next;
        q.push_back(s);
        while let Some(v) = q.pop_front() {
            for &w in g.neighbors(v) {
                if label[w] == usize::MAX {
                    label[w] = next;
                    q.push_back(w);
                }
            }
        }
        next += 1;
    }
    label
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Triplets;

    fn grid(nx: usize, ny: usize) -> SymSparse {
        let mut t = Triplets::new(nx * ny, nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let v = j * nx + i;
                t.push(v, v, 4.0);
                if i > 0 {
                    t.push(v, v - 1, -1.0);
                }
                if j > 0 {
                    t.push(v, v - nx, -1.0);
                }
            }
        }
        t.to_csr().to_sym_lower()
    }

    #[test]
    fn nd_is_permutation() {
        let a = grid(40, 37);
        let g = Graph::from_sym(&a);
        let p = nested_dissection(&g);
        let mut s = p.clone();
        s.sort();
        assert_eq!(s, (0..40 * 37).collect::<Vec<_>>());
    }

    #[test]
    fn components_of_disjoint_grids() {
        let mut t = Triplets::new(4, 4);
        for i in 0..4 {
            t.push(i, i, 1.0);
        }
        t.push(1, 0, -1.0);
        t.push(3, 2, -1.0);
        let g = Graph::from_sym(&t.to_csr().to_sym_lower());
        assert_eq!(connected_components(&g), vec![0, 0, 1, 1]);
    }
}
