use std::collections::BTreeMap;
use std::sync::Arc;

use super::element::element_matrices;
use super::solver::{pcg, CsrMatrix, SolveStats};
use super::{BoundarySpec, FemError, MassKind, MaterialParams, ThermalState};
use crate::octree::{Constraint, OctreeMesh};

const NONE: u32 = u32::MAX;

/// Everything the assembly needs besides the mesh.
#[derive(Debug, Clone)]
pub struct AssemblyOptions<'a> {
    /// Leaves to assemble over, normally the active ones.
    pub elements: &'a [usize],
    pub material: MaterialParams,
    pub bcs: BoundarySpec,
    pub mass: MassKind,
    pub dt: f64,
    /// Nodes at z = 0 are held at `bcs.t_bed`.
    pub bed: bool,
    /// Additional Dirichlet nodes `(mesh node, value)`; bed values win.
    pub fixed: &'a [(usize, f64)],
    /// Leaves carrying the latent source.
    pub sources: &'a [usize],
}

/// One backward-Euler step `(M + dt K) T' = M T + dt F` restricted to the
/// unknown nodes, with Dirichlet values moved to the right-hand side.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: Arc<CsrMatrix>,
    pub rhs: Vec<f64>,
    /// Prescribed `(mesh node, value)` pairs.
    pub dirichlet: Vec<(usize, f64)>,
    /// Hanging mesh nodes with masters given as mesh nodes.
    pub hanging: BTreeMap<usize, Constraint>,
    /// Mesh node of each unknown.
    pub unknowns: Arc<Vec<usize>>,
}

/// Matrices of one active configuration, built once and reused for every
/// step until the active set or the mesh changes.
#[derive(Debug, Clone)]
pub struct Discretization {
    dt: f64,
    /// Mesh node of each reduced (non-hanging) dof.
    dofs: Vec<usize>,
    /// Reduced dof of each unknown.
    unknown_dofs: Arc<Vec<usize>>,
    unknown_nodes: Arc<Vec<usize>>,
    /// Reduced dof and value of each Dirichlet node.
    prescribed: Vec<(usize, f64)>,
    hanging: BTreeMap<usize, Constraint>,
    /// `M + dt K` on unknown rows and columns.
    a_uu: Arc<CsrMatrix>,
    /// `M + dt K` on unknown rows, prescribed columns (indexed by dof).
    a_ud: CsrMatrix,
    /// Mass on unknown rows, all dof columns.
    m_u: CsrMatrix,
    /// Row sums of the reduced consistent mass.
    lumped: Vec<f64>,
    /// `dt F` on unknown rows.
    load: Vec<f64>,
}

fn accumulate(row: &mut Vec<(usize, f64, f64)>, col: usize, m: f64, k: f64) {
    match row.iter_mut().find(|e| e.0 == col) {
        Some(e) => {
            e.1 += m;
            e.2 += k;
        }
        None => row.push((col, m, k)),
    }
}

impl Discretization {
    /// `None` when there are no elements to assemble.
    pub fn new(mesh: &OctreeMesh, opt: &AssemblyOptions<'_>) -> Result<Option<Self>, FemError> {
        opt.material.validate()?;
        opt.bcs.validate()?;
        if !(opt.dt > 0.0 && opt.dt.is_finite()) {
            return Err(FemError::InvalidTimeStep(opt.dt));
        }
        if opt.elements.is_empty() {
            return Ok(None);
        }
        let nodes = mesh.nodes();
        let depth = mesh.depth();
        // the root cube is the unit of length
        let unit = mesh.root_size() as f64;

        let mut member = vec![false; mesh.len()];
        let mut in_system = vec![false; nodes.len()];
        for &e in opt.elements {
            member[e] = true;
            for n in nodes.leaf_nodes(e) {
                in_system[n] = true;
            }
        }
        let system_nodes: Vec<usize> = (0..nodes.len()).filter(|&n| in_system[n]).collect();
        let hanging = mesh.constraints_among(|l| member[l], system_nodes.iter().copied());

        let mut dof_of = vec![NONE; nodes.len()];
        let mut dofs = Vec::new();
        for &n in &system_nodes {
            if !hanging.contains_key(&n) {
                dof_of[n] = dofs.len() as u32;
                dofs.push(n);
            }
        }
        let ndof = dofs.len();

        let mut value: Vec<Option<f64>> = vec![None; ndof];
        for &(n, v) in opt.fixed {
            if dof_of[n] != NONE {
                value[dof_of[n] as usize] = Some(v);
            }
        }
        if opt.bed {
            for (d, &n) in dofs.iter().enumerate() {
                if nodes.coord(n)[2] == 0 {
                    value[d] = Some(opt.bcs.t_bed);
                }
            }
        }

        // reduced element maps: local corner -> [(dof, weight)]
        let expand = |n: usize| -> Vec<(usize, f64)> {
            match hanging.get(&n) {
                Some(c) => c.masters.iter().map(|&(m, w)| (dof_of[m] as usize, w)).collect(),
                None => vec![(dof_of[n] as usize, 1.0)],
            }
        };

        let rho_cp = opt.material.rho * opt.material.cp;
        let mut rows: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); ndof];
        let mut load_full = vec![0.0; ndof];
        let mut is_source = vec![false; mesh.len()];
        for &e in opt.sources {
            is_source[e] = true;
        }
        for &e in opt.elements {
            let h = mesh.leaves()[e].size(depth) as f64 / unit;
            let (me, ke) = element_matrices(h, rho_cp, opt.material.kappa);
            let local: Vec<Vec<(usize, f64)>> = nodes.leaf_nodes(e).iter().map(|&n| expand(n)).collect();
            for a in 0..8 {
                for b in 0..8 {
                    for &(ra, wa) in &local[a] {
                        for &(rb, wb) in &local[b] {
                            let w = wa * wb;
                            accumulate(&mut rows[ra], rb, w * me[a][b], w * ke[a][b]);
                        }
                    }
                }
            }
            if is_source[e] && opt.material.latent_source > 0.0 {
                let f = opt.material.latent_source * h * h * h / 8.0;
                for l in &local {
                    for &(r, w) in l {
                        load_full[r] += w * f;
                    }
                }
            }
        }

        if !hanging.is_empty() {
            // condensation sums the same products in different orders on
            // either side of the diagonal
            for i in 0..ndof {
                for p in 0..rows[i].len() {
                    let (j, m, k) = rows[i][p];
                    if j > i {
                        let q = rows[j].iter().position(|e| e.0 == i).expect("symmetric pattern");
                        let (mt, kt) = (rows[j][q].1, rows[j][q].2);
                        let (ms, ks) = (0.5 * (m + mt), 0.5 * (k + kt));
                        rows[i][p] = (j, ms, ks);
                        rows[j][q] = (i, ms, ks);
                    }
                }
            }
        }

        let lumped: Vec<f64> = rows.iter().map(|r| r.iter().map(|e| e.1).sum()).collect();

        let mut unknown_of = vec![NONE; ndof];
        let mut unknown_dofs = Vec::new();
        let mut prescribed = Vec::new();
        for d in 0..ndof {
            match value[d] {
                Some(v) => prescribed.push((d, v)),
                None => {
                    unknown_of[d] = unknown_dofs.len() as u32;
                    unknown_dofs.push(d);
                }
            }
        }

        let dt = opt.dt;
        let mut a_uu_rows = Vec::with_capacity(unknown_dofs.len());
        let mut a_ud_rows = Vec::with_capacity(unknown_dofs.len());
        let mut m_u_rows = Vec::with_capacity(unknown_dofs.len());
        for &d in &unknown_dofs {
            let mut uu = Vec::with_capacity(rows[d].len());
            let mut ud = Vec::new();
            let mut mu = Vec::new();
            for &(c, m, k) in &rows[d] {
                let m = match opt.mass {
                    MassKind::Consistent => m,
                    MassKind::Lumped if c == d => lumped[d],
                    MassKind::Lumped => 0.0,
                };
                if m != 0.0 {
                    mu.push((c, m));
                }
                let a = m + dt * k;
                if unknown_of[c] != NONE {
                    uu.push((unknown_of[c] as usize, a));
                } else if a != 0.0 {
                    ud.push((c, a));
                }
            }
            a_uu_rows.push(uu);
            a_ud_rows.push(ud);
            m_u_rows.push(mu);
        }
        let load = unknown_dofs.iter().map(|&d| dt * load_full[d]).collect();
        let unknown_nodes = unknown_dofs.iter().map(|&d| dofs[d]).collect();

        Ok(Some(Discretization {
            dt,
            a_uu: Arc::new(CsrMatrix::from_rows(a_uu_rows)),
            a_ud: CsrMatrix::from_rows_rect(a_ud_rows, ndof),
            m_u: CsrMatrix::from_rows_rect(m_u_rows, ndof),
            unknown_dofs: Arc::new(unknown_dofs),
            unknown_nodes: Arc::new(unknown_nodes),
            prescribed,
            hanging,
            lumped,
            load,
            dofs,
        }))
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn unknown_count(&self) -> usize {
        self.unknown_dofs.len()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.a_uu
    }

    pub fn hanging(&self) -> &BTreeMap<usize, Constraint> {
        &self.hanging
    }

    /// Mesh nodes with prescribed values.
    pub fn dirichlet(&self) -> Vec<(usize, f64)> {
        self.prescribed.iter().map(|&(d, v)| (self.dofs[d], v)).collect()
    }

    /// Thermal energy `1^T M T` of the assembled region.
    pub fn energy(&self, state: &ThermalState) -> f64 {
        let t = state.temperatures();
        self.dofs.iter().zip(&self.lumped).map(|(&n, &m)| m * t[n]).sum()
    }

    /// System for the step leaving `state`; `with_source` adds the latent load.
    pub fn system(&self, state: &ThermalState, with_source: bool) -> LinearSystem {
        let t = state.temperatures();
        let mut full: Vec<f64> = self.dofs.iter().map(|&n| t[n]).collect();
        let mut rhs = self.m_u.mul(&full);
        // prescribed values at the new time level
        for &(d, v) in &self.prescribed {
            full[d] = v;
        }
        for (i, r) in rhs.iter_mut().enumerate() {
            let mut coupling = 0.0;
            for (c, a) in self.a_ud.row(i) {
                coupling += a * full[c];
            }
            *r -= coupling;
            if with_source {
                *r += self.load[i];
            }
        }
        LinearSystem {
            matrix: Arc::clone(&self.a_uu),
            rhs,
            dirichlet: self.dirichlet(),
            hanging: self.hanging.clone(),
            unknowns: Arc::clone(&self.unknown_nodes),
        }
    }

    /// Advance `state` by one step.
    pub fn step(&self, state: &mut ThermalState, with_source: bool, tol: f64, max_iter_factor: usize) -> Result<SolveStats, FemError> {
        let sys = self.system(state, with_source);
        let stats = solve(&sys, state, tol, max_iter_factor)?;
        state.advance_time(self.dt);
        Ok(stats)
    }
}

/// Solve `sys`, warm-started from `state`, and write the result back: the
/// unknowns, the prescribed values and the reconstructed hanging nodes.
pub fn solve(sys: &LinearSystem, state: &mut ThermalState, tol: f64, max_iter_factor: usize) -> Result<SolveStats, FemError> {
    let t = state.temperatures_mut();
    let mut x: Vec<f64> = sys.unknowns.iter().map(|&n| t[n]).collect();
    let n = x.len();
    let stats = if n == 0 {
        SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        }
    } else {
        pcg(&sys.matrix, &sys.rhs, &mut x, tol, (max_iter_factor * n).max(1))?
    };
    for (&node, &v) in sys.unknowns.iter().zip(&x) {
        t[node] = v;
    }
    for &(node, v) in &sys.dirichlet {
        t[node] = v;
    }
    for (&node, c) in &sys.hanging {
        t[node] = c.masters.iter().map(|&(m, w)| w * t[m]).sum();
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::solver::dense_solve;
    use crate::octree::Octant;
    use crate::schedule::{VoxelGrid, VoxelId};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn block(dims: [usize; 3], base_level: u8) -> OctreeMesh {
        let mut m = OctreeMesh::new(VoxelGrid::unit(dims).unwrap(), base_level).unwrap();
        let mut all = Vec::new();
        for k in 0..dims[2] as u32 {
            for j in 0..dims[1] as u32 {
                for i in 0..dims[0] as u32 {
                    all.push(VoxelId::new(i, j, k));
                }
            }
        }
        for v in &all {
            m.refine(*v).unwrap();
        }
        m.classify(&all).unwrap();
        m
    }

    fn opts<'a>(elements: &'a [usize], fixed: &'a [(usize, f64)]) -> AssemblyOptions<'a> {
        AssemblyOptions {
            elements,
            material: MaterialParams::from_alpha(1.0).unwrap(),
            bcs: BoundarySpec::default(),
            mass: MassKind::Lumped,
            dt: 1.0,
            bed: true,
            fixed,
            sources: &[],
        }
    }

    #[test]
    fn empty_active_set_signals_no_system() {
        let m = OctreeMesh::new(VoxelGrid::unit([2, 2, 2]).unwrap(), 0).unwrap();
        assert!(Discretization::new(&m, &opts(&[], &[])).unwrap().is_none());
    }

    #[test]
    fn fully_prescribed_element() {
        let m = block([1, 1, 1], 0);
        let nodes = m.nodes().leaf_nodes(0);
        let fixed: Vec<(usize, f64)> = nodes.iter().enumerate().map(|(c, &n)| (n, 1.5 + c as f64)).collect();
        let mut o = opts(&[0], &fixed);
        o.bed = false;
        let d = Discretization::new(&m, &o).unwrap().unwrap();
        assert_eq!(d.unknown_count(), 0);
        let mut s = ThermalState::new(&m, &o.bcs);
        d.step(&mut s, false, 1e-12, 10).unwrap();
        for (n, v) in fixed {
            assert_eq!(s.temperatures()[n], v);
        }
    }

    #[test]
    fn column_relaxes_to_bed_temperature() {
        let m = block([1, 1, 2], 0);
        let elems: Vec<usize> = m.active_leaves().collect();
        let o = opts(&elems, &[]);
        let d = Discretization::new(&m, &o).unwrap().unwrap();
        let mut s = ThermalState::new(&m, &o.bcs);
        s.temperatures_mut().fill(2.0);
        for _ in 0..200 {
            d.step(&mut s, false, 1e-14, 10).unwrap();
        }
        for n in 0..s.len() {
            if s.is_active_node(n) {
                assert!((s.temperatures()[n] - 1.0).abs() < 1e-10);
            }
        }
    }

    /// Independent dense assembly over the full node set, Dirichlet rows
    /// replaced by identity.
    fn dense_step(m: &OctreeMesh, elems: &[usize], t: &[f64], dt: f64, consistent: bool) -> Vec<f64> {
        let n = m.nodes().len();
        let mut mm = vec![vec![0.0; n]; n];
        let mut kk = vec![vec![0.0; n]; n];
        for &e in elems {
            let h = m.leaves()[e].size(m.depth()) as f64 / m.root_size() as f64;
            let (me, ke) = element_matrices(h, 1.0, 1.0);
            let ln = m.nodes().leaf_nodes(e);
            for a in 0..8 {
                for b in 0..8 {
                    mm[ln[a]][ln[b]] += me[a][b];
                    kk[ln[a]][ln[b]] += ke[a][b];
                }
            }
        }
        if !consistent {
            for i in 0..n {
                let s: f64 = mm[i].iter().sum();
                mm[i].fill(0.0);
                mm[i][i] = s;
            }
        }
        let mut a = vec![vec![0.0; n]; n];
        let mut b = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = mm[i][j] + dt * kk[i][j];
                b[i] += mm[i][j] * t[j];
            }
        }
        for i in 0..n {
            let used = mm[i][i] != 0.0;
            if !used || m.nodes().coord(i)[2] == 0 {
                a[i].fill(0.0);
                a[i][i] = 1.0;
                b[i] = if used { 1.0 } else { t[i] };
            }
        }
        dense_solve(&a, &b)
    }

    #[test]
    fn eight_element_block_matches_dense_reference() {
        let m = block([2, 2, 2], 1);
        let elems: Vec<usize> = m.active_leaves().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mass in [MassKind::Lumped, MassKind::Consistent] {
            let mut o = opts(&elems, &[]);
            o.mass = mass;
            o.dt = 0.37;
            let d = Discretization::new(&m, &o).unwrap().unwrap();
            assert!(d.matrix().is_symmetric());
            let mut s = ThermalState::new(&m, &o.bcs);
            for t in s.temperatures_mut() {
                *t = rng.gen_range(1.0..2.0);
            }
            let reference = dense_step(&m, &elems, s.temperatures(), 0.37, mass == MassKind::Consistent);
            d.step(&mut s, false, 1e-14, 10).unwrap();
            for (u, v) in s.temperatures().iter().zip(&reference) {
                assert!((u - v).abs() < 1e-10, "{mass:?}: {u} vs {v}");
            }
        }
    }

    #[test]
    fn stiffness_times_linear_field_is_boundary_flux() {
        // brick of 3x2x2 elements in a root of edge 4, field T = z, no
        // Dirichlet: K T equals the outward flux through top and bottom faces
        let m = block([3, 2, 2], 0);
        let elems: Vec<usize> = m.active_leaves().collect();
        let mut o = opts(&elems, &[]);
        o.bed = false;
        let d1 = Discretization::new(&m, &o).unwrap().unwrap();
        let d2 = Discretization::new(&m, &AssemblyOptions { dt: 2.0, ..o.clone() }).unwrap().unwrap();
        let n = d1.unknown_count();
        let h = 0.25;
        let z: Vec<f64> = d1.unknown_nodes.iter().map(|&node| m.nodes().coord(node)[2] as f64 * h).collect();
        let (a1z, a2z) = (d1.matrix().mul(&z), d2.matrix().mul(&z));
        for i in 0..n {
            let kz = a2z[i] - a1z[i];
            let p = m.nodes().coord(d1.unknown_nodes[i]);
            let faces = |p: [u32; 3]| -> f64 {
                // number of boundary quarter-faces around a node on a z face
                let ex = if p[0] == 0 || p[0] == 3 { 1.0 } else { 2.0 };
                let ey = if p[1] == 0 || p[1] == 2 { 1.0 } else { 2.0 };
                ex * ey * 0.25 * h * h
            };
            let expect = match p[2] {
                0 => -faces(p),
                2 => faces(p),
                _ => 0.0,
            };
            assert!((kz - expect).abs() < 1e-14, "node {p:?}: {kz} vs {expect}");
        }
    }

    #[test]
    fn hanging_nodes_condensed() {
        // coarse and fine elements assembled together; constant field stays
        // constant and hanging values follow their masters
        let g = VoxelGrid::unit([4, 4, 4]).unwrap();
        let root = Octant::new([0; 3], 0);
        let mut leaves: Vec<Octant> = root.children(2)[1..].to_vec();
        leaves.extend(root.children(2)[0].children(2));
        let m = OctreeMesh::from_leaves(g, 2, leaves).unwrap();
        let elems: Vec<usize> = (0..m.len()).collect();
        let mut o = opts(&elems, &[]);
        o.bed = false;
        let d = Discretization::new(&m, &o).unwrap().unwrap();
        assert!(!d.hanging().is_empty());
        assert!(d.matrix().is_symmetric());
        let mut s = ThermalState::new(&m, &o.bcs);
        s.temperatures_mut().fill(1.25);
        let e0 = d.energy(&s);
        assert!((e0 - 1.25).abs() < 1e-14);
        d.step(&mut s, false, 1e-14, 10).unwrap();
        assert!(s.temperatures().iter().all(|t| (t - 1.25).abs() < 1e-12));
        // random field: energy conserved, hanging nodes consistent
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for t in s.temperatures_mut() {
            *t = rng.gen_range(1.0..2.0);
        }
        d.step(&mut s, false, 1e-14, 10).unwrap();
        let e1 = d.energy(&s);
        d.step(&mut s, false, 1e-14, 10).unwrap();
        assert!((d.energy(&s) - e1).abs() < 1e-10 * e1);
        for (&n, c) in d.hanging() {
            let v: f64 = c.masters.iter().map(|&(mn, w)| w * s.temperatures()[mn]).sum();
            assert!((s.temperatures()[n] - v).abs() < 1e-15);
        }
    }

    #[test]
    fn latent_source_adds_energy() {
        let m = block([1, 1, 1], 0);
        let mut o = opts(&[0], &[]);
        o.bed = false;
        o.material.latent_source = 4.0;
        o.sources = &[0];
        o.dt = 0.5;
        let d = Discretization::new(&m, &o).unwrap().unwrap();
        let mut s = ThermalState::new(&m, &o.bcs);
        s.temperatures_mut().fill(1.0);
        d.step(&mut s, true, 1e-14, 10).unwrap();
        assert!((d.energy(&s) - 3.0).abs() < 1e-12);
        d.step(&mut s, false, 1e-14, 10).unwrap();
        assert!((d.energy(&s) - 3.0).abs() < 1e-12);
    }
}
