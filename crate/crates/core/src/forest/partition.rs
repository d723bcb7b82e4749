use std::fmt::Write as _;
use std::ops::Range;

use super::{Forest, ForestError, Result};

/// Contiguous Z-order slices of the leaf sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub num_subdomains: usize,
    /// Subdomain of each leaf.
    pub owner: Vec<usize>,
    pub ranges: Vec<Range<usize>>,
}

impl Partition {
    /// Sizes `⌈n/N⌉` for the first `n mod N` subdomains and `⌊n/N⌋` after.
    pub fn equal(n_leaves: usize, num_subdomains: usize) -> Result<Partition> {
        if num_subdomains == 0 || num_subdomains > n_leaves {
            return Err(ForestError::TooManySubdomains { requested: num_subdomains, leaves: n_leaves });
        }
        let base = n_leaves / num_subdomains;
        let rem = n_leaves % num_subdomains;
        let mut ranges = Vec::with_capacity(num_subdomains);
        let mut owner = vec![0; n_leaves];
        let mut start = 0;
        for k in 0..num_subdomains {
            let len = base + usize::from(k < rem);
            owner[start..start + len].iter_mut().for_each(|o| *o = k);
            ranges.push(start..start + len);
            start += len;
        }
        Ok(Partition { num_subdomains, owner, ranges })
    }

    /// Build from explicit ownership; subdomains need not be contiguous.
    pub fn from_owner(num_subdomains: usize, owner: Vec<usize>) -> Partition {
        let mut ranges = vec![0..0; num_subdomains];
        for (i, &o) in owner.iter().enumerate() {
            let r = &mut ranges[o];
            if r.end == 0 {
                *r = i..i + 1;
            } else {
                r.end = i + 1;
            }
        }
        Partition { num_subdomains, owner, ranges }
    }

    /// Leaves of subdomain `k` in Z-order.
    pub fn elements(&self, k: usize) -> Vec<usize> {
        let r = self.ranges[k].clone();
        r.filter(|&i| self.owner[i] == k).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.num_subdomains];
        for &o in &self.owner {
            s[o] += 1;
        }
        s
    }

    /// `leaf_index subdomain_id` per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, o) in self.owner.iter().enumerate() {
            writeln!(s, "{i} {o}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Partition> {
        let mut owner = Vec::new();
        for (ln, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let perr = |reason: String| ForestError::Parse { line: ln + 1, reason };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 2 {
                return Err(perr("expected `leaf_index subdomain_id`".into()));
            }
            let i: usize = f[0].parse().map_err(|e| perr(format!("leaf index: {e}")))?;
            let o: usize = f[1].parse().map_err(|e| perr(format!("subdomain: {e}")))?;
            if i != owner.len() {
                return Err(perr(format!("expected leaf {} next, found {i}", owner.len())));
            }
            owner.push(o);
        }
        let n = owner.iter().max().map_or(0, |m| m + 1);
        Ok(Partition::from_owner(n, owner))
    }
}

/// Dual-graph edge rule for component detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjacencyRule {
    /// Elements sharing an edge (2D) or face (3D).
    Face,
    /// Elements sharing at least one point.
    Node,
}

/// Connected components of each subdomain's restricted dual graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabeling {
    pub n_components: Vec<usize>,
    /// Component of each leaf, numbered within its subdomain in Z-order of
    /// first appearance.
    pub component: Vec<usize>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

pub(super) fn detect_components(forest: &Forest, partition: &Partition, rule: AdjacencyRule) -> ComponentLabeling {
    let n = forest.len();
    let mut uf = UnionFind((0..n).collect());
    for i in 0..n {
        for j in forest.adjacent(i, rule) {
            if j > i && partition.owner[i] == partition.owner[j] {
                uf.union(i, j);
            }
        }
    }
    let mut n_components = vec![0; partition.num_subdomains];
    let mut label = vec![usize::MAX; n];
    let mut component = vec![0; n];
    for i in 0..n {
        let r = uf.find(i);
        if label[r] == usize::MAX {
            let o = partition.owner[i];
            label[r] = n_components[o];
            n_components[o] += 1;
        }
        component[i] = label[r];
    }
    ComponentLabeling { n_components, component }
}
