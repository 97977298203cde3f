//! Linearized 2:1-balanced octree that follows the voxel grid.
//!
//! Leaves are stored as a Morton-sorted array. Octant anchors are integer
//! coordinates on the finest lattice, whose cells are exactly the voxels, so a
//! leaf at the voxel level `depth` covers one voxel and the root covers a cube
//! of `2^depth` voxels per side. Balance is enforced across faces, edges and
//! corners.

pub mod morton;
mod nodes;

use std::fmt::Write as _;

use thiserror::Error;

use crate::schedule::{ScheduleError, VoxelGrid, VoxelId};

pub use nodes::{node_key, Constraint, NodeCoord, NodeTable};
pub(crate) use nodes::{corner_weight, hanging_constraints};

/// Deepest supported voxel level (65536 voxels per side).
pub const MAX_DEPTH: u8 = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OctreeError {
    #[error("voxel grid needs depth {required}, above the supported maximum {MAX_DEPTH}")]
    TooDeep { required: u32 },
    #[error("depth {depth} is too shallow for the voxel grid (needs {required})")]
    TooShallow { depth: u8, required: u8 },
    #[error("base level {base} exceeds voxel level {depth}")]
    BaseLevel { base: u8, depth: u8 },
    #[error("voxel ({}, {}, {}) is outside the voxel grid", .0.i, .0.j, .0.k)]
    VoxelOutOfBounds(VoxelId),
    #[error(transparent)]
    Point(#[from] ScheduleError),
    #[error("voxel ({}, {}, {}) is covered by a level {level} leaf; refine it to level {depth} first", .voxel.i, .voxel.j, .voxel.k)]
    NotRefined { voxel: VoxelId, level: u8, depth: u8 },
    #[error("leaves do not tile the root cube: {0}")]
    BadTiling(String),
}

/// An axis-aligned cubic cell of the octree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Octant {
    anchor: [u32; 3],
    level: u8,
    key: u64,
}

impl Octant {
    pub fn new(anchor: [u32; 3], level: u8) -> Self {
        Octant {
            anchor,
            level,
            key: morton::encode(anchor) << 5 | level as u64,
        }
    }

    pub fn anchor(&self) -> [u32; 3] {
        self.anchor
    }

    pub fn level(&self) -> u8 {
        self.level
    }

    /// Morton code of the anchor shifted left by 5 bits, with the level in
    /// the low bits.
    pub fn morton_key(&self) -> u64 {
        self.key
    }

    fn morton(&self) -> u64 {
        self.key >> 5
    }

    /// Edge length in voxels.
    pub fn size(&self, depth: u8) -> u32 {
        1 << (depth - self.level)
    }

    pub fn children(&self, depth: u8) -> [Octant; 8] {
        let h = self.size(depth) / 2;
        std::array::from_fn(|c| {
            let a = self.anchor;
            Octant::new(
                [
                    a[0] + h * (c as u32 & 1),
                    a[1] + h * (c as u32 >> 1 & 1),
                    a[2] + h * (c as u32 >> 2 & 1),
                ],
                self.level + 1,
            )
        })
    }

    /// Corner `c` with offset bits `(c & 1, c >> 1 & 1, c >> 2 & 1)`.
    pub fn corner(&self, c: usize, depth: u8) -> NodeCoord {
        let s = self.size(depth);
        let a = self.anchor;
        [
            a[0] + s * (c as u32 & 1),
            a[1] + s * (c as u32 >> 1 & 1),
            a[2] + s * (c as u32 >> 2 & 1),
        ]
    }

    pub fn is_corner(&self, p: NodeCoord, depth: u8) -> bool {
        let s = self.size(depth);
        (0..3).all(|a| p[a] == self.anchor[a] || p[a] == self.anchor[a] + s)
    }

    pub fn contains_cell(&self, cell: [u32; 3], depth: u8) -> bool {
        let s = self.size(depth);
        (0..3).all(|a| self.anchor[a] <= cell[a] && cell[a] < self.anchor[a] + s)
    }

    /// Inclusive range of voxel ids covered by the octant.
    pub fn voxel_range(&self, depth: u8) -> (VoxelId, VoxelId) {
        let s = self.size(depth);
        let a = self.anchor;
        (VoxelId::from(a), VoxelId::from([a[0] + s - 1, a[1] + s - 1, a[2] + s - 1]))
    }

    /// Closed boxes share at least one point.
    pub fn touches(&self, other: &Octant, depth: u8) -> bool {
        let (s, t) = (self.size(depth), other.size(depth));
        (0..3).all(|a| self.anchor[a] <= other.anchor[a] + t && other.anchor[a] <= self.anchor[a] + s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefineFlag {
    Refine,
    NoChange,
}

/// Voxel containing a point given in grid coordinates (mm).
pub fn compute_3d_id(p: [f64; 3], grid: &VoxelGrid) -> Result<VoxelId, OctreeError> {
    Ok(grid.locate(p)?)
}

/// Smallest voxel level whose root cube covers the grid.
pub fn required_depth(grid: &VoxelGrid) -> Result<u8, OctreeError> {
    let n = *grid.dims.iter().max().expect("three dims");
    let d = n.next_power_of_two().trailing_zeros();
    if d > MAX_DEPTH as u32 {
        return Err(OctreeError::TooDeep { required: d });
    }
    Ok(d as u8)
}

const NEIGHBOR_DIRS: [[i64; 3]; 26] = {
    let mut dirs = [[0i64; 3]; 26];
    let mut n = 0;
    let mut i = 0;
    while i < 27 {
        let d = [(i % 3) as i64 - 1, (i / 3 % 3) as i64 - 1, (i / 9) as i64 - 1];
        if !(d[0] == 0 && d[1] == 0 && d[2] == 0) {
            dirs[n] = d;
            n += 1;
        }
        i += 1;
    }
    dirs
};

/// Read-only view over a sorted, tiling leaf array.
#[derive(Clone, Copy)]
pub(crate) struct LeafView<'a> {
    pub leaves: &'a [Octant],
    pub depth: u8,
}

impl LeafView<'_> {
    fn root_size(&self) -> u32 {
        1 << self.depth
    }

    /// Index of the leaf containing a finest-level cell.
    fn leaf_at(&self, cell: [u32; 3]) -> usize {
        let m = morton::encode(cell);
        self.leaves.partition_point(|o| o.morton() <= m) - 1
    }

    /// Leaves whose closed box contains the lattice point, in Morton order.
    fn leaves_touching(&self, p: NodeCoord) -> Vec<usize> {
        let r = self.root_size();
        let mut out = Vec::with_capacity(8);
        for d in 0..8u32 {
            let mut cell = [0u32; 3];
            let mut ok = true;
            for a in 0..3 {
                let back = d >> a & 1;
                if (back == 1 && p[a] == 0) || (back == 0 && p[a] == r) {
                    ok = false;
                    break;
                }
                cell[a] = p[a] - back;
            }
            if ok {
                out.push(self.leaf_at(cell));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Same-size region displaced by `d` octant widths, if inside the root.
    fn shifted_anchor(&self, o: &Octant, d: [i64; 3]) -> Option<[u32; 3]> {
        let s = o.size(self.depth) as i64;
        let r = self.root_size() as i64;
        let mut a = [0u32; 3];
        for ax in 0..3 {
            let v = o.anchor[ax] as i64 + d[ax] * s;
            if v < 0 || v >= r {
                return None;
            }
            a[ax] = v as u32;
        }
        Some(a)
    }
}

/// The adaptive octree mesh together with leaf activity and its node table.
#[derive(Debug, Clone, PartialEq)]
pub struct OctreeMesh {
    grid: VoxelGrid,
    depth: u8,
    base_level: u8,
    leaves: Vec<Octant>,
    active: Vec<bool>,
    nodes: NodeTable,
}

impl OctreeMesh {
    /// Uniform mesh at `base_level` over the tight power-of-two cube of `grid`.
    pub fn new(grid: VoxelGrid, base_level: u8) -> Result<Self, OctreeError> {
        let depth = required_depth(&grid)?;
        Self::with_depth(grid, depth, base_level)
    }

    pub fn with_depth(grid: VoxelGrid, depth: u8, base_level: u8) -> Result<Self, OctreeError> {
        let required = required_depth(&grid)?;
        if depth > MAX_DEPTH {
            return Err(OctreeError::TooDeep { required: depth as u32 });
        }
        if depth < required {
            return Err(OctreeError::TooShallow { depth, required });
        }
        if base_level > depth {
            return Err(OctreeError::BaseLevel { base: base_level, depth });
        }
        let n = 1u32 << base_level;
        let s = 1u32 << (depth - base_level);
        let mut leaves: Vec<Octant> = (0..n * n * n)
            .map(|c| Octant::new([(c % n) * s, (c / n % n) * s, (c / (n * n)) * s], base_level))
            .collect();
        leaves.sort_unstable_by_key(Octant::morton_key);
        let mut mesh = OctreeMesh {
            grid,
            depth,
            base_level,
            active: vec![false; leaves.len()],
            leaves,
            nodes: NodeTable::default(),
        };
        mesh.rebuild_nodes();
        Ok(mesh)
    }

    /// Mesh from an explicit leaf set; the leaves must tile the root cube.
    pub fn from_leaves(grid: VoxelGrid, depth: u8, mut leaves: Vec<Octant>) -> Result<Self, OctreeError> {
        let required = required_depth(&grid)?;
        if depth < required {
            return Err(OctreeError::TooShallow { depth, required });
        }
        if depth > MAX_DEPTH {
            return Err(OctreeError::TooDeep { required: depth as u32 });
        }
        leaves.sort_unstable_by_key(Octant::morton_key);
        let mut next = 0u64;
        for o in &leaves {
            let s = o.size(depth) as u64;
            if o.level > depth || (0..3).any(|a| o.anchor[a] as u64 % s != 0) {
                return Err(OctreeError::BadTiling(format!("misaligned octant {o:?}")));
            }
            if o.morton() != next {
                return Err(OctreeError::BadTiling(format!("gap or overlap at {o:?}")));
            }
            next += s * s * s;
        }
        if next != 1u64 << (3 * depth as u32) {
            return Err(OctreeError::BadTiling("leaves do not cover the root".into()));
        }
        let base_level = leaves.iter().map(|o| o.level).min().unwrap_or(0);
        let mut mesh = OctreeMesh {
            grid,
            depth,
            base_level,
            active: vec![false; leaves.len()],
            leaves,
            nodes: NodeTable::default(),
        };
        mesh.rebuild_nodes();
        Ok(mesh)
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    /// Voxel level: leaves at this level cover exactly one voxel.
    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub fn base_level(&self) -> u8 {
        self.base_level
    }

    pub fn leaves(&self) -> &[Octant] {
        &self.leaves
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn nodes(&self) -> &NodeTable {
        &self.nodes
    }

    pub fn is_active(&self, leaf: usize) -> bool {
        self.active[leaf]
    }

    pub fn active_leaves(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i)
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Edge length of the root cube in voxels.
    pub fn root_size(&self) -> u32 {
        1 << self.depth
    }

    pub(crate) fn view(&self) -> LeafView<'_> {
        LeafView {
            leaves: &self.leaves,
            depth: self.depth,
        }
    }

    /// Leaf containing the finest-level cell (voxel lattice coordinates).
    pub fn leaf_at(&self, cell: [u32; 3]) -> usize {
        debug_assert!(cell.iter().all(|&c| c < self.root_size()));
        self.view().leaf_at(cell)
    }

    /// Leaf containing an arbitrary lattice point; points on shared faces
    /// resolve to the leaf on the upper side, and the root's upper boundary
    /// to the last cell.
    pub fn leaf_at_point(&self, p: NodeCoord) -> usize {
        let r = self.root_size();
        self.leaf_at(p.map(|c| c.min(r - 1)))
    }

    pub fn leaf_containing(&self, v: VoxelId) -> Result<usize, OctreeError> {
        if !self.grid.contains(v) {
            return Err(OctreeError::VoxelOutOfBounds(v));
        }
        Ok(self.leaf_at(v.as_array()))
    }

    /// Leaves touching a lattice point.
    pub fn leaves_touching(&self, p: NodeCoord) -> Vec<usize> {
        self.view().leaves_touching(p)
    }

    /// Refinement flags for activating voxel `v`: the leaf whose voxel range
    /// encloses `v` is flagged when it is coarser than the voxel level.
    pub fn refine_flags(&self, v: VoxelId) -> Result<Vec<RefineFlag>, OctreeError> {
        if !self.grid.contains(v) {
            return Err(OctreeError::VoxelOutOfBounds(v));
        }
        let id = v.as_array();
        Ok(self
            .leaves
            .iter()
            .map(|e| {
                let (lo, hi) = e.voxel_range(self.depth);
                let (lo, hi) = (lo.as_array(), hi.as_array());
                let enclosed = (0..3).all(|a| lo[a] <= id[a] && id[a] <= hi[a]);
                if enclosed && e.level < self.depth {
                    RefineFlag::Refine
                } else {
                    RefineFlag::NoChange
                }
            })
            .collect())
    }

    /// Refine one level at a time around `v` until its leaf reaches the voxel
    /// level, restoring balance after every pass. Returns whether the mesh
    /// changed.
    pub fn refine(&mut self, v: VoxelId) -> Result<bool, OctreeError> {
        let mut changed = false;
        loop {
            let flags = self.refine_flags(v)?;
            let flagged: Vec<usize> = flags
                .iter()
                .enumerate()
                .filter(|(_, f)| **f == RefineFlag::Refine)
                .map(|(i, _)| i)
                .collect();
            if flagged.is_empty() {
                break;
            }
            let children = self.split(&flagged);
            self.balance_from(children);
            changed = true;
        }
        if changed {
            self.rebuild_nodes();
        }
        Ok(changed)
    }

    /// Split every flagged leaf into its eight children.
    pub fn construct(&mut self, flags: &[RefineFlag]) {
        assert_eq!(flags.len(), self.leaves.len(), "one flag per leaf");
        let flagged: Vec<usize> = (0..flags.len()).filter(|&i| flags[i] == RefineFlag::Refine).collect();
        if flagged.is_empty() {
            return;
        }
        self.split(&flagged);
        self.rebuild_nodes();
    }

    /// Minimal refinement restoring full 2:1 balance. Returns the number of
    /// leaves split.
    pub fn enforce_balance(&mut self) -> usize {
        let all = self.leaves.clone();
        let n = self.balance_from(all);
        if n > 0 {
            self.rebuild_nodes();
        }
        n
    }

    /// Splits leaves at the given sorted indices, keeping Morton order, and
    /// returns the new children.
    fn split(&mut self, sorted: &[usize]) -> Vec<Octant> {
        let depth = self.depth;
        let mut leaves = Vec::with_capacity(self.leaves.len() + 7 * sorted.len());
        let mut active = Vec::with_capacity(leaves.capacity());
        let mut children = Vec::with_capacity(8 * sorted.len());
        let mut next = sorted.iter().peekable();
        for (i, o) in self.leaves.iter().enumerate() {
            if next.peek() == Some(&&i) {
                next.next();
                assert!(o.level < depth, "cannot split a voxel-level leaf");
                debug_assert!(!self.active[i]);
                let kids = o.children(depth);
                leaves.extend_from_slice(&kids);
                active.extend([false; 8]);
                children.extend_from_slice(&kids);
            } else {
                leaves.push(*o);
                active.push(self.active[i]);
            }
        }
        self.leaves = leaves;
        self.active = active;
        children
    }

    /// Ripple balance starting from leaves that may be too fine for their
    /// neighbors.
    fn balance_from(&mut self, mut queue: Vec<Octant>) -> usize {
        let mut splits = 0;
        while !queue.is_empty() {
            let view = self.view();
            let mut coarse: Vec<usize> = Vec::new();
            for o in &queue {
                if o.level < 2 {
                    continue;
                }
                for d in NEIGHBOR_DIRS {
                    if let Some(a) = view.shifted_anchor(o, d) {
                        let n = view.leaf_at(a);
                        if view.leaves[n].level + 1 < o.level {
                            coarse.push(n);
                        }
                    }
                }
            }
            coarse.sort_unstable();
            coarse.dedup();
            if coarse.is_empty() {
                break;
            }
            splits += coarse.len();
            queue = self.split(&coarse);
        }
        splits
    }

    fn rebuild_nodes(&mut self) {
        self.nodes = NodeTable::build(self.view());
    }

    /// Mark the leaves of printed voxels active. Activation is monotone:
    /// previously active leaves stay active. Returns the active count.
    pub fn classify<'a>(&mut self, printed: impl IntoIterator<Item = &'a VoxelId>) -> Result<usize, OctreeError> {
        for &v in printed {
            let leaf = self.leaf_containing(v)?;
            let level = self.leaves[leaf].level;
            if level != self.depth {
                return Err(OctreeError::NotRefined {
                    voxel: v,
                    level,
                    depth: self.depth,
                });
            }
            self.active[leaf] = true;
        }
        Ok(self.active_count())
    }

    /// All leaves sharing a face, edge or corner with `leaf`, found by
    /// Morton-range search in the sorted array.
    pub fn leaf_neighbors(&self, leaf: usize) -> Vec<usize> {
        let view = self.view();
        let o = self.leaves[leaf];
        let s = o.size(self.depth) as u64;
        let mut out = Vec::new();
        for d in NEIGHBOR_DIRS {
            let Some(a) = view.shifted_anchor(&o, d) else {
                continue;
            };
            let n = view.leaf_at(a);
            if self.leaves[n].level <= o.level {
                out.push(n);
                continue;
            }
            // region is subdivided; its leaves form one contiguous key range
            let end = morton::encode(a) + s * s * s;
            out.extend(
                (n..self.leaves.len())
                    .take_while(|&m| self.leaves[m].morton() < end)
                    .filter(|&m| self.leaves[m].touches(&o, self.depth)),
            );
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Debug listing, one leaf per line:
    /// `morton_key level anchor_i anchor_j anchor_k active`.
    pub fn dump(&self) -> String {
        let mut s = String::with_capacity(self.leaves.len() * 24);
        for (o, &a) in self.leaves.iter().zip(&self.active) {
            let [i, j, k] = o.anchor;
            let _ = writeln!(s, "{} {} {} {} {} {}", o.key, o.level, i, j, k, a as u8);
        }
        s
    }

    /// Hanging-node constraints among the leaves selected by `member`, for
    /// the given candidate nodes.
    pub fn constraints_among(
        &self,
        member: impl Fn(usize) -> bool,
        candidates: impl IntoIterator<Item = usize>,
    ) -> std::collections::BTreeMap<usize, Constraint> {
        hanging_constraints(self.view(), &self.nodes, member, candidates)
    }
}
