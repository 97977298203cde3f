use std::collections::BTreeMap;

use super::{LeafView, Octant};

/// Lattice point in finest-level (voxel) units.
pub type NodeCoord = [u32; 3];

/// Sort key for nodes: z-major, then y, then x.
pub fn node_key(p: NodeCoord) -> u64 {
    (p[2] as u64) << 34 | (p[1] as u64) << 17 | p[0] as u64
}

/// A hanging node expressed as a convex combination of free nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub masters: Vec<(usize, f64)>,
}

/// Unique leaf corners with per-leaf connectivity and the hanging-node
/// constraints of the full mesh.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodeTable {
    coords: Vec<NodeCoord>,
    keys: Vec<u64>,
    leaf_nodes: Vec<[u32; 8]>,
    hanging: Vec<Option<Constraint>>,
}

impl NodeTable {
    pub(super) fn build(view: LeafView<'_>) -> Self {
        let mut keyed: Vec<(u64, NodeCoord)> = view
            .leaves
            .iter()
            .flat_map(|o| (0..8).map(move |c| o.corner(c, view.depth)))
            .map(|p| (node_key(p), p))
            .collect();
        keyed.sort_unstable_by_key(|e| e.0);
        keyed.dedup_by_key(|e| e.0);
        let keys: Vec<u64> = keyed.iter().map(|e| e.0).collect();
        let coords: Vec<NodeCoord> = keyed.into_iter().map(|e| e.1).collect();

        let lookup = |p: NodeCoord| keys.binary_search(&node_key(p)).expect("leaf corner is a node");
        let leaf_nodes: Vec<[u32; 8]> = view
            .leaves
            .iter()
            .map(|o| std::array::from_fn(|c| lookup(o.corner(c, view.depth)) as u32))
            .collect();

        let mut table = NodeTable {
            coords,
            keys,
            leaf_nodes,
            hanging: Vec::new(),
        };
        let all = hanging_constraints(view, &table, |_| true, 0..table.len());
        let mut hanging = vec![None; table.len()];
        for (n, c) in all {
            hanging[n] = Some(c);
        }
        table.hanging = hanging;
        table
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coord(&self, n: usize) -> NodeCoord {
        self.coords[n]
    }

    pub fn coords(&self) -> &[NodeCoord] {
        &self.coords
    }

    pub fn index_of(&self, p: NodeCoord) -> Option<usize> {
        self.keys.binary_search(&node_key(p)).ok()
    }

    /// Node indices of a leaf's corners; corner `c` has offset
    /// `(c & 1, c >> 1 & 1, c >> 2 & 1)`.
    pub fn leaf_nodes(&self, leaf: usize) -> [usize; 8] {
        self.leaf_nodes[leaf].map(|n| n as usize)
    }

    /// Constraint of a node that hangs in the full mesh.
    pub fn hanging(&self, n: usize) -> Option<&Constraint> {
        self.hanging[n].as_ref()
    }

    pub fn hanging_count(&self) -> usize {
        self.hanging.iter().filter(|h| h.is_some()).count()
    }
}

/// Trilinear weight of corner `c` of `o` at lattice point `p` on its closed box.
pub(crate) fn corner_weight(o: &Octant, depth: u8, c: usize, p: NodeCoord) -> f64 {
    let size = o.size(depth) as f64;
    let a = o.anchor();
    (0..3)
        .map(|ax| {
            let xi = (p[ax] - a[ax]) as f64 / size;
            if c >> ax & 1 == 1 {
                xi
            } else {
                1.0 - xi
            }
        })
        .product()
}

/// Hanging-node constraints restricted to the leaves selected by `member`.
///
/// A candidate node hangs when it lies on the boundary of a member leaf
/// without being one of its corners; it is then tied to the trilinear
/// interpolant of the coarsest such leaf. Chains (masters that hang
/// themselves) are closed so every constraint references free nodes only.
pub(crate) fn hanging_constraints(
    view: LeafView<'_>,
    table: &NodeTable,
    member: impl Fn(usize) -> bool,
    candidates: impl IntoIterator<Item = usize>,
) -> BTreeMap<usize, Constraint> {
    let mut raw: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for n in candidates {
        let p = table.coord(n);
        let mut best: Option<usize> = None;
        for leaf in view.leaves_touching(p) {
            if !member(leaf) {
                continue;
            }
            let o = &view.leaves[leaf];
            if o.is_corner(p, view.depth) {
                continue;
            }
            if best.map_or(true, |b| o.level() < view.leaves[b].level()) {
                best = Some(leaf);
            }
        }
        if let Some(leaf) = best {
            let o = &view.leaves[leaf];
            let masters = (0..8)
                .filter_map(|c| {
                    let w = corner_weight(o, view.depth, c, p);
                    (w > 0.0).then(|| (table.leaf_nodes(leaf)[c], w))
                })
                .collect();
            raw.insert(n, masters);
        }
    }

    let mut closed: BTreeMap<usize, Constraint> = BTreeMap::new();
    for &n in raw.keys() {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        resolve(&raw, n, 1.0, &mut acc, 0);
        closed.insert(
            n,
            Constraint {
                masters: acc.into_iter().collect(),
            },
        );
    }
    closed
}

fn resolve(raw: &BTreeMap<usize, Vec<(usize, f64)>>, n: usize, scale: f64, acc: &mut BTreeMap<usize, f64>, depth: usize) {
    assert!(depth < 64, "cyclic hanging-node constraints");
    for &(m, w) in &raw[&n] {
        if raw.contains_key(&m) {
            resolve(raw, m, scale * w, acc, depth + 1);
        } else {
            *acc.entry(m).or_insert(0.0) += scale * w;
        }
    }
}
