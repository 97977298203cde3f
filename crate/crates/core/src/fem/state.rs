use std::collections::BTreeSet;

use super::{BoundarySpec, FemError};
use crate::octree::{corner_weight, OctreeMesh};
use crate::schedule::VoxelId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

/// Nodal temperatures on an octree mesh plus activation bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalState {
    temperature: Vec<f64>,
    time: f64,
    active_nodes: Vec<bool>,
    activated: BTreeSet<VoxelId>,
    fresh: Vec<VoxelId>,
}

impl ThermalState {
    /// Every node at the ambient placeholder, time zero.
    pub fn new(mesh: &OctreeMesh, bcs: &BoundarySpec) -> Self {
        let mut s = ThermalState {
            temperature: vec![bcs.t_ambient; mesh.nodes().len()],
            time: 0.0,
            active_nodes: Vec::new(),
            activated: BTreeSet::new(),
            fresh: Vec::new(),
        };
        s.refresh_active_nodes(mesh);
        s
    }

    pub fn temperatures(&self) -> &[f64] {
        &self.temperature
    }

    pub fn temperatures_mut(&mut self) -> &mut [f64] {
        &mut self.temperature
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn advance_time(&mut self, dt: f64) {
        self.time += dt;
    }

    pub fn len(&self) -> usize {
        self.temperature.len()
    }

    pub fn is_empty(&self) -> bool {
        self.temperature.is_empty()
    }

    pub fn is_active_node(&self, n: usize) -> bool {
        self.active_nodes[n]
    }

    pub fn active_node_count(&self) -> usize {
        self.active_nodes.iter().filter(|&&a| a).count()
    }

    pub fn activated(&self) -> &BTreeSet<VoxelId> {
        &self.activated
    }

    /// Voxels activated since the last call.
    pub fn take_fresh(&mut self) -> Vec<VoxelId> {
        std::mem::take(&mut self.fresh)
    }

    pub fn fresh(&self) -> &[VoxelId] {
        &self.fresh
    }

    /// Recompute which nodes belong to an active element.
    pub fn refresh_active_nodes(&mut self, mesh: &OctreeMesh) {
        let mut flags = vec![false; mesh.nodes().len()];
        for leaf in mesh.active_leaves() {
            for n in mesh.nodes().leaf_nodes(leaf) {
                flags[n] = true;
            }
        }
        self.active_nodes = flags;
    }

    /// Put every node outside the active region back to `t_ambient`.
    pub fn reset_inactive(&mut self, t_ambient: f64) {
        for (t, &a) in self.temperature.iter_mut().zip(&self.active_nodes) {
            if !a {
                *t = t_ambient;
            }
        }
    }

    /// Min, arithmetic mean and max over active nodes.
    pub fn active_stats(&self) -> Option<FieldStats> {
        let mut count = 0usize;
        let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for (&t, &a) in self.temperature.iter().zip(&self.active_nodes) {
            if a {
                count += 1;
                min = min.min(t);
                max = max.max(t);
                sum += t;
            }
        }
        (count > 0).then(|| FieldStats {
            min,
            mean: sum / count as f64,
            max,
        })
    }

    fn check(&self, mesh: &OctreeMesh) -> Result<(), FemError> {
        if self.temperature.len() != mesh.nodes().len() {
            return Err(FemError::SizeMismatch {
                state: self.temperature.len(),
                mesh: mesh.nodes().len(),
            });
        }
        Ok(())
    }
}

/// Impose the deposition temperature on the eight nodes of `v`'s element.
/// Returns the node indices.
pub fn activate_voxel(
    state: &mut ThermalState,
    mesh: &OctreeMesh,
    v: VoxelId,
    bcs: &BoundarySpec,
) -> Result<[usize; 8], FemError> {
    state.check(mesh)?;
    let leaf = mesh.leaf_containing(v)?;
    if !mesh.is_active(leaf) || mesh.leaves()[leaf].level() != mesh.depth() {
        return Err(FemError::NotActive(v));
    }
    if !state.activated.insert(v) {
        return Err(FemError::AlreadyActivated(v));
    }
    let nodes = mesh.nodes().leaf_nodes(leaf);
    for n in nodes {
        state.temperature[n] = bcs.t_deposit;
        state.active_nodes[n] = true;
    }
    state.fresh.push(v);
    Ok(nodes)
}

/// Carry nodal values onto a refined mesh. Coincident nodes are copied;
/// new nodes take the trilinear interpolant of the old leaf containing them.
pub fn transfer_solution(old_mesh: &OctreeMesh, old_state: &ThermalState, new_mesh: &OctreeMesh) -> ThermalState {
    let old_nodes = old_mesh.nodes();
    let depth = old_mesh.depth();
    let temperature = new_mesh
        .nodes()
        .coords()
        .iter()
        .map(|&p| match old_nodes.index_of(p) {
            Some(n) => old_state.temperature[n],
            None => {
                let leaf = old_mesh.leaf_at_point(p);
                let o = &old_mesh.leaves()[leaf];
                let corners = old_nodes.leaf_nodes(leaf);
                (0..8)
                    .map(|c| corner_weight(o, depth, c, p) * old_state.temperature[corners[c]])
                    .sum()
            }
        })
        .collect();
    let mut s = ThermalState {
        temperature,
        time: old_state.time,
        active_nodes: Vec::new(),
        activated: old_state.activated.clone(),
        fresh: old_state.fresh.clone(),
    };
    s.refresh_active_nodes(new_mesh);
    s
}
