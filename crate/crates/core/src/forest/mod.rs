//! Forest of quadtrees/octrees over the unit square or cube, which is split
//! into a brick of `n^d` equal trees numbered lexicographically.
//!
//! Leaves are kept sorted by `(tree, Morton code of the anchor at the finest
//! resolution)`. Since leaves never overlap this is the Z-order traversal.
//! Point location and neighbor queries are binary searches on that key.

mod morton;
mod partition;

pub use partition::{AdjacencyRule, ComponentLabeling, Partition};

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

pub const MAX_LEVEL_2D: u8 = 29;
pub const MAX_LEVEL_3D: u8 = 19;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForestError {
    #[error("dimension must be 2 or 3, got {0}")]
    Dimension(usize),
    #[error("refining cell (tree {tree}, level {level}, morton {morton}) exceeds maximal level {max_level}")]
    LevelCap { tree: u32, level: u8, morton: u64, max_level: u8 },
    #[error("leaf index {index} out of range for {len} leaves")]
    LeafIndex { index: usize, len: usize },
    #[error("cannot split {leaves} leaves into {requested} subdomains")]
    TooManySubdomains { requested: usize, leaves: usize },
    #[error("forest is not 2:1 balanced")]
    Unbalanced,
    #[error("malformed forest file at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, ForestError>;

pub fn level_cap(dim: usize) -> u8 {
    if dim == 2 {
        MAX_LEVEL_2D
    } else {
        MAX_LEVEL_3D
    }
}

/// A cell of one tree; `morton` interleaves the `level`-bit integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub tree_id: u32,
    pub level: u8,
    pub morton: u64,
}

impl CellKey {
    pub fn root(tree_id: u32) -> Self {
        Self { tree_id, level: 0, morton: 0 }
    }

    pub fn from_coords(dim: usize, tree_id: u32, level: u8, c: [u64; 3]) -> Self {
        Self { tree_id, level, morton: morton::encode(dim, c) }
    }

    /// Integer coordinates at this cell's level.
    pub fn coords(&self, dim: usize) -> [u64; 3] {
        morton::decode(dim, self.morton)
    }

    pub fn children(&self, dim: usize) -> impl Iterator<Item = CellKey> + '_ {
        let base = self.morton << dim;
        (0..1u64 << dim).map(move |k| CellKey { tree_id: self.tree_id, level: self.level + 1, morton: base | k })
    }

    pub fn parent(&self, dim: usize) -> Option<CellKey> {
        (self.level > 0).then(|| CellKey { tree_id: self.tree_id, level: self.level - 1, morton: self.morton >> dim })
    }

    /// Position among its siblings, `x + 2y + 4z` of the low coordinate bits.
    pub fn child_id(&self, dim: usize) -> usize {
        (self.morton & ((1 << dim) - 1)) as usize
    }

    /// Anchor in finest-level integer units.
    pub fn fine_anchor(&self, dim: usize) -> [u64; 3] {
        let s = level_cap(dim) - self.level;
        let c = self.coords(dim);
        [c[0] << s, c[1] << s, c[2] << s]
    }

    /// Edge length in finest-level integer units.
    pub fn fine_size(&self, dim: usize) -> u64 {
        1 << (level_cap(dim) - self.level)
    }

    fn sort_key(&self, dim: usize) -> (u32, u64) {
        (self.tree_id, self.morton << (dim as u32 * (level_cap(dim) - self.level) as u32))
    }

    pub fn is_ancestor_of(&self, dim: usize, other: &CellKey) -> bool {
        self.tree_id == other.tree_id
            && self.level < other.level
            && other.morton >> (dim as u32 * (other.level - self.level) as u32) == self.morton
    }

    /// Lower corner and edge length in the unit coordinates of its tree.
    pub fn geometry(&self, dim: usize) -> CellGeometry {
        let h = 0.5f64.powi(self.level as i32);
        let c = self.coords(dim);
        let mut lower = [0.0; 3];
        for a in 0..dim {
            lower[a] = c[a] as f64 * h;
        }
        CellGeometry { lower, h }
    }
}

/// Axis-aligned cube `[lower, lower + h]^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGeometry {
    pub lower: [f64; 3],
    pub h: f64,
}

impl CellGeometry {
    pub fn center(&self, dim: usize) -> [f64; 3] {
        let mut c = [0.0; 3];
        for a in 0..dim {
            c[a] = self.lower[a] + 0.5 * self.h;
        }
        c
    }
}

/// Prescribed refinement patterns on the unit square/cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    /// Every leaf.
    Uniform,
    /// Leaves whose closed cell meets the sphere of radius 0.85 about the origin.
    Circle,
    /// Leaves whose closed cell meets `[0.26, 0.28]^d`.
    Square,
}

pub const CIRCLE_RADIUS: f64 = 0.85;
pub const SQUARE_LOW: f64 = 0.26;
pub const SQUARE_HIGH: f64 = 0.28;

impl Pattern {
    pub fn hits(&self, dim: usize, g: &CellGeometry) -> bool {
        match self {
            Pattern::Uniform => true,
            Pattern::Circle => {
                let (mut near, mut far) = (0.0, 0.0);
                for a in 0..dim {
                    let (lo, hi) = (g.lower[a], g.lower[a] + g.h);
                    let n = if lo > 0.0 { lo } else if hi < 0.0 { hi } else { 0.0 };
                    let f = lo.abs().max(hi.abs());
                    near += n * n;
                    far += f * f;
                }
                let r2 = CIRCLE_RADIUS * CIRCLE_RADIUS;
                near <= r2 && r2 <= far
            }
            Pattern::Square => (0..dim).all(|a| g.lower[a] <= SQUARE_HIGH && g.lower[a] + g.h >= SQUARE_LOW),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    dim: usize,
    max_level: u8,
    /// Trees per axis.
    brick: u64,
    leaves: Vec<CellKey>,
}

/// Offsets to the same-size neighbor cells: faces, then (3D) edges, then corners.
pub fn neighbor_offsets(dim: usize, max_codim: usize) -> Vec<[i64; 3]> {
    let mut out = Vec::new();
    for codim in 1..=max_codim.min(dim) {
        let zr = if dim == 3 { -1..=1 } else { 0..=0 };
        for dz in zr {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let o = [dx, dy, dz];
                    if o.iter().filter(|&&v| v != 0).count() == codim {
                        out.push(o);
                    }
                }
            }
        }
    }
    out
}

impl Forest {
    /// One root cell covering the unit square (`dim = 2`) or cube (`dim = 3`).
    pub fn new(dim: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(ForestError::Dimension(dim));
        }
        Ok(Self { dim, max_level: level_cap(dim), brick: 1, leaves: vec![CellKey::root(0)] })
    }

    /// `n^d` root cells, `n` per axis, refined uniformly to `level`.
    pub fn brick(dim: usize, n: usize, level: u8) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(ForestError::Dimension(dim));
        }
        let ntrees = n.pow(dim as u32);
        let mut f = Self { dim, max_level: level_cap(dim), brick: n.max(1) as u64, leaves: (0..ntrees as u32).map(CellKey::root).collect() };
        for _ in 0..level {
            f = f.refine_all()?;
        }
        Ok(f)
    }

    /// Trees per axis.
    pub fn brick_size(&self) -> usize {
        self.brick as usize
    }

    /// Lattice position of a tree in the brick.
    pub fn tree_coords(&self, tree: u32) -> [u64; 3] {
        let n = self.brick;
        let t = tree as u64;
        [t % n, (t / n) % n, t / (n * n)]
    }

    fn tree_at(&self, c: [u64; 3]) -> u32 {
        let n = self.brick;
        (c[0] + n * (c[1] + n * c[2])) as u32
    }

    /// Anchor of `cell` in brick-wide finest-level integer units.
    pub fn global_anchor(&self, cell: &CellKey) -> [u64; 3] {
        let t = self.tree_coords(cell.tree_id);
        let a = cell.fine_anchor(self.dim);
        let n = 1u64 << level_cap(self.dim);
        let mut g = [0; 3];
        for d in 0..self.dim {
            g[d] = t[d] * n + a[d];
        }
        g
    }

    /// Extent of the domain in brick-wide finest-level integer units.
    pub fn global_extent(&self) -> u64 {
        self.brick << level_cap(self.dim)
    }

    /// Geometry of any cell of this forest.
    pub fn cell_geometry(&self, cell: &CellKey) -> CellGeometry {
        let g = cell.geometry(self.dim);
        let t = self.tree_coords(cell.tree_id);
        let b = self.brick as f64;
        let mut lower = [0.0; 3];
        for a in 0..self.dim {
            lower[a] = (t[a] as f64 + g.lower[a]) / b;
        }
        CellGeometry { lower, h: g.h / b }
    }

    /// Lowers the refinement cap below the representable maximum.
    pub fn with_max_level(mut self, max_level: u8) -> Self {
        self.max_level = max_level.min(level_cap(self.dim));
        self
    }

    /// Uniform forest at `level`.
    pub fn uniform(dim: usize, level: u8) -> Result<Self> {
        let mut f = Self::new(dim)?;
        for _ in 0..level {
            f = f.refine_all()?;
        }
        Ok(f)
    }

    /// Build from leaves in any order; they must tile the trees.
    pub fn from_leaves(dim: usize, max_level: u8, mut leaves: Vec<CellKey>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(ForestError::Dimension(dim));
        }
        leaves.sort_by_key(|c| c.sort_key(dim));
        let ntrees = leaves.iter().map(|c| c.tree_id as u64 + 1).max().unwrap_or(1);
        let mut brick: u64 = 1;
        while brick.pow(dim as u32) < ntrees {
            brick += 1;
        }
        Ok(Self { dim, max_level, brick, leaves })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_level(&self) -> u8 {
        self.max_level
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn leaves(&self) -> &[CellKey] {
        &self.leaves
    }

    pub fn leaf(&self, i: usize) -> CellKey {
        self.leaves[i]
    }

    pub fn geometry(&self, i: usize) -> CellGeometry {
        self.cell_geometry(&self.leaves[i])
    }

    pub fn finest_level(&self) -> u8 {
        self.leaves.iter().map(|c| c.level).max().unwrap_or(0)
    }

    pub fn is_sorted(&self) -> bool {
        self.leaves.windows(2).all(|w| w[0].sort_key(self.dim) < w[1].sort_key(self.dim))
    }

    /// Leaf containing the finest-level integer point `p` of tree `tree`.
    pub fn locate(&self, tree: u32, p: [u64; 3]) -> Option<usize> {
        let n = 1u64 << level_cap(self.dim);
        if (0..self.dim).any(|a| p[a] >= n) {
            return None;
        }
        let key = (tree, morton::encode(self.dim, p));
        let pos = self.leaves.partition_point(|c| c.sort_key(self.dim) <= key);
        if pos == 0 {
            return None;
        }
        let c = self.leaves[pos - 1];
        let a = c.fine_anchor(self.dim);
        let s = c.fine_size(self.dim);
        (c.tree_id == tree && (0..self.dim).all(|d| p[d] >= a[d] && p[d] < a[d] + s)).then_some(pos - 1)
    }

    /// Leaf containing the brick-wide finest-level point `p`.
    pub fn locate_global(&self, p: [u64; 3]) -> Option<usize> {
        let cap = level_cap(self.dim);
        let mut t = [0; 3];
        let mut l = [0; 3];
        for d in 0..self.dim {
            t[d] = p[d] >> cap;
            l[d] = p[d] & ((1 << cap) - 1);
            if t[d] >= self.brick {
                return None;
            }
        }
        self.locate(self.tree_at(t), l)
    }

    /// Leaves overlapping the cell `(tree, level, coords)`: either the single
    /// leaf containing it or all leaves inside it.
    /// Coordinates outside the tree continue into the neighboring tree.
    pub fn overlapping(&self, tree: u32, level: u8, coords: [i64; 3]) -> Vec<usize> {
        let n = 1i64 << level;
        let mut tc = self.tree_coords(tree);
        let mut c = [0u64; 3];
        for a in 0..self.dim {
            let t = tc[a] as i64 + coords[a].div_euclid(n);
            if t < 0 || t >= self.brick as i64 {
                return Vec::new();
            }
            tc[a] = t as u64;
            c[a] = coords[a].rem_euclid(n) as u64;
        }
        let tree = self.tree_at(tc);
        let cell = CellKey::from_coords(self.dim, tree, level, c);
        let anchor = cell.fine_anchor(self.dim);
        match self.locate(tree, anchor) {
            Some(i) if self.leaves[i].level <= level => vec![i],
            _ => {
                let lo = cell.sort_key(self.dim);
                let span = 1u64 << (self.dim as u32 * (level_cap(self.dim) - level) as u32);
                let hi = (tree, lo.1 + span);
                let a = self.leaves.partition_point(|c| c.sort_key(self.dim) < lo);
                let b = self.leaves.partition_point(|c| c.sort_key(self.dim) < hi);
                (a..b).collect()
            }
        }
    }

    /// Leaves overlapping the same-size neighbor of leaf `i` at `offset`.
    pub fn neighbor_region(&self, i: usize, offset: [i64; 3]) -> Vec<usize> {
        let c = self.leaves[i];
        let k = c.coords(self.dim);
        let mut nc = [0i64; 3];
        for a in 0..3 {
            nc[a] = k[a] as i64 + offset[a];
        }
        self.overlapping(c.tree_id, c.level, nc)
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.leaves.len() {
            return Err(ForestError::LeafIndex { index: i, len: self.leaves.len() });
        }
        Ok(())
    }

    /// Replace each marked leaf by its children.
    pub fn refine(&self, marked: &[usize]) -> Result<Forest> {
        let mut flag = vec![false; self.leaves.len()];
        for &i in marked {
            self.check_index(i)?;
            let c = self.leaves[i];
            if c.level >= self.max_level {
                return Err(ForestError::LevelCap { tree: c.tree_id, level: c.level, morton: c.morton, max_level: self.max_level });
            }
            flag[i] = true;
        }
        let extra = flag.iter().filter(|&&f| f).count() * ((1 << self.dim) - 1);
        let mut leaves = Vec::with_capacity(self.leaves.len() + extra);
        for (c, &f) in self.leaves.iter().zip(&flag) {
            if f {
                leaves.extend(c.children(self.dim));
            } else {
                leaves.push(*c);
            }
        }
        let out = Forest { dim: self.dim, max_level: self.max_level, brick: self.brick, leaves };
        debug_assert!(out.is_sorted());
        Ok(out)
    }

    pub fn refine_all(&self) -> Result<Forest> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.refine(&all)
    }

    /// Offsets whose level jumps the balance rule constrains: faces, plus
    /// edges in 3D.
    pub fn balance_offsets(&self) -> Vec<[i64; 3]> {
        neighbor_offsets(self.dim, self.dim - 1)
    }

    /// Leaves that are more than one level coarser than some neighbor.
    fn violators(&self, offsets: &[[i64; 3]]) -> Vec<usize> {
        let mut bad = vec![false; self.leaves.len()];
        for c in self.leaves.iter() {
            if c.level < 2 {
                continue;
            }
            let s = c.fine_size(self.dim) as i64;
            let a = self.global_anchor(c);
            for o in offsets {
                let mut p = [0u64; 3];
                let mut inside = true;
                for d in 0..self.dim {
                    let v = a[d] as i64 + o[d] * s;
                    if v < 0 {
                        inside = false;
                    }
                    p[d] = v as u64;
                }
                if !inside {
                    continue;
                }
                if let Some(j) = self.locate_global(p) {
                    if self.leaves[j].level + 1 < c.level {
                        bad[j] = true;
                    }
                }
            }
        }
        bad.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    pub fn is_balanced(&self) -> bool {
        self.violators(&self.balance_offsets()).is_empty()
    }

    /// Smallest refinement of `self` in which face-adjacent (and in 3D
    /// edge-adjacent) leaves differ by at most one level.
    pub fn balance_2to1(&self) -> Result<Forest> {
        let offsets = self.balance_offsets();
        let mut f = self.clone();
        loop {
            let bad = f.violators(&offsets);
            if bad.is_empty() {
                return Ok(f);
            }
            f = f.refine(&bad)?;
        }
    }

    /// `count` applications of `pattern`, each followed by balancing.
    pub fn apply_pattern(&self, pattern: Pattern, count: usize) -> Result<Forest> {
        let mut f = self.clone();
        for _ in 0..count {
            let marked: Vec<usize> = (0..f.len()).filter(|&i| pattern.hits(f.dim, &f.geometry(i))).collect();
            f = f.refine(&marked)?.balance_2to1()?;
        }
        Ok(f)
    }

    pub fn partition_equal(&self, num_subdomains: usize) -> Result<Partition> {
        Partition::equal(self.len(), num_subdomains)
    }

    pub fn detect_components(&self, partition: &Partition, rule: AdjacencyRule) -> ComponentLabeling {
        partition::detect_components(self, partition, rule)
    }

    /// Leaves sharing a face (`Face`) or any point (`Node`) with leaf `i`.
    pub fn adjacent(&self, i: usize, rule: AdjacencyRule) -> Vec<usize> {
        let codim = match rule {
            AdjacencyRule::Face => 1,
            AdjacencyRule::Node => self.dim,
        };
        let mut out = Vec::new();
        for o in neighbor_offsets(self.dim, codim) {
            for j in self.neighbor_region(i, o) {
                if j != i && self.leaves_touch(i, j, rule) && !out.contains(&j) {
                    out.push(j);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Exact contact test on integer anchors.
    pub fn leaves_touch(&self, i: usize, j: usize, rule: AdjacencyRule) -> bool {
        let (a, b) = (&self.leaves[i], &self.leaves[j]);
        let (aa, ba) = (self.global_anchor(a), self.global_anchor(b));
        let (asz, bsz) = (a.fine_size(self.dim), b.fine_size(self.dim));
        let mut contact = 0;
        for d in 0..self.dim {
            let (alo, ahi, blo, bhi) = (aa[d], aa[d] + asz, ba[d], ba[d] + bsz);
            if ahi < blo || bhi < alo {
                return false;
            }
            if ahi == blo || bhi == alo {
                contact += 1;
            }
        }
        match rule {
            AdjacencyRule::Face => contact == 1,
            AdjacencyRule::Node => contact >= 1,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{} {} {} {}", self.dim, self.max_level, self.leaves.len(), self.brick).unwrap();
        for c in &self.leaves {
            writeln!(s, "{} {} {}", c.tree_id, c.level, c.morton).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Forest> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let perr = |line: usize, reason: String| ForestError::Parse { line: line + 1, reason };
        let (hl, header) = lines.next().ok_or_else(|| perr(0, "empty input".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 3 && h.len() != 4 {
            return Err(perr(hl, "header must be `dim max_level n_leaves [brick]`".into()));
        }
        let brick: u64 = match h.get(3) {
            Some(b) => b.parse().map_err(|e| perr(hl, format!("brick: {e}")))?,
            None => 1,
        };
        if brick == 0 {
            return Err(perr(hl, "brick must be positive".into()));
        }
        let dim: usize = h[0].parse().map_err(|e| perr(hl, format!("dim: {e}")))?;
        let max_level: u8 = h[1].parse().map_err(|e| perr(hl, format!("max_level: {e}")))?;
        let n: usize = h[2].parse().map_err(|e| perr(hl, format!("n_leaves: {e}")))?;
        if dim != 2 && dim != 3 {
            return Err(ForestError::Dimension(dim));
        }
        if max_level > level_cap(dim) {
            return Err(perr(hl, format!("max_level {max_level} above cap {}", level_cap(dim))));
        }
        let mut leaves = Vec::with_capacity(n);
        for (ln, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(perr(ln, "expected `tree level morton`".into()));
            }
            let tree_id: u32 = f[0].parse().map_err(|e| perr(ln, format!("tree: {e}")))?;
            if tree_id as u64 >= brick.pow(dim as u32) {
                return Err(perr(ln, format!("tree {tree_id} outside a brick of {brick}")));
            }
            let level: u8 = f[1].parse().map_err(|e| perr(ln, format!("level: {e}")))?;
            let morton: u64 = f[2].parse().map_err(|e| perr(ln, format!("morton: {e}")))?;
            if level > max_level || (level > 0 && morton >> (dim as u32 * level as u32) != 0) || (level == 0 && morton != 0) {
                return Err(perr(ln, format!("invalid cell level {level} morton {morton}")));
            }
            leaves.push(CellKey { tree_id, level, morton });
        }
        if leaves.len() != n {
            return Err(perr(hl, format!("header declares {n} leaves, found {}", leaves.len())));
        }
        let f = Forest { dim, max_level, brick, leaves };
        if !f.is_sorted() {
            return Err(perr(hl, "leaves are not in Z-order".into()));
        }
        Ok(f)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| ForestError::Io(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Forest> {
        let t = std::fs::read_to_string(path).map_err(|e| ForestError::Io(e.to_string()))?;
        Self::from_text(&t)
    }
}

/// Closed boxes share a `(d-1)`-face (`Face`) or any point (`Node`).
pub fn touches(dim: usize, a: &CellGeometry, b: &CellGeometry, rule: AdjacencyRule) -> bool {
    let mut contact = 0;
    for d in 0..dim {
        let (alo, ahi) = (a.lower[d], a.lower[d] + a.h);
        let (blo, bhi) = (b.lower[d], b.lower[d] + b.h);
        if ahi < blo || bhi < alo {
            return false;
        }
        if ahi == blo || bhi == alo {
            contact += 1;
        }
    }
    match rule {
        AdjacencyRule::Face => contact == 1,
        AdjacencyRule::Node => contact >= 1,
    }
}
