//! Print simulation: refine, classify, activate and advance the heat
//! equation voxel by voxel.

use std::time::Instant;

use thiserror::Error;

use crate::fem::{
    activate_voxel, transfer_solution, AssemblyOptions, BoundarySpec, DepositMode, Discretization, FemError,
    FieldStats, MassKind, MaterialParams, ThermalState,
};
use crate::octree::{required_depth, OctreeError, OctreeMesh, MAX_DEPTH};
use crate::schedule::{apply_sparsity, ScheduleError, SparsityPolicy, VoxelSchedule};

pub type SinkError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Octree(#[from] OctreeError),
    #[error("voxel {ordinal}: {source}")]
    Voxel {
        ordinal: usize,
        #[source]
        source: FemError,
    },
    #[error("cool-down: {0}")]
    Cooldown(#[source] FemError),
    #[error("snapshot {label}: {source}")]
    Sink {
        label: String,
        #[source]
        source: SinkError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Voxel level of the octree; `None` uses the smallest level covering
    /// the grid.
    pub voxel_level: Option<u8>,
    /// Level of the initial uniform mesh; clamped to the voxel level.
    pub base_level: u8,
    pub steps_per_voxel: usize,
    pub dt: f64,
    /// Extra steps after the last voxel.
    pub cooldown_steps: usize,
    pub material: MaterialParams,
    pub bcs: BoundarySpec,
    pub deposit_mode: DepositMode,
    pub mass: MassKind,
    pub tolerance: f64,
    pub max_iter_factor: usize,
    /// Print-completion fractions that trigger a snapshot.
    pub snapshot_fractions: Vec<f64>,
    /// Snapshot after every k-th voxel; 0 disables.
    pub snapshot_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            voxel_level: None,
            base_level: 2,
            steps_per_voxel: 3,
            dt: 1.0,
            cooldown_steps: 0,
            material: MaterialParams {
                kappa: 0.0008,
                rho: 1.0,
                cp: 1.0,
                latent_source: 0.0,
            },
            bcs: BoundarySpec::default(),
            deposit_mode: DepositMode::Initial,
            mass: MassKind::Lumped,
            tolerance: 1e-12,
            max_iter_factor: 10,
            snapshot_fractions: vec![0.3, 0.6, 1.0],
            snapshot_every: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), DriverError> {
        let bad = |m: String| Err(DriverError::Config(m));
        if self.steps_per_voxel == 0 {
            return bad("steps_per_voxel must be at least 1".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return bad(format!("solver tolerance must lie in (0, 1), got {}", self.tolerance));
        }
        if self.max_iter_factor == 0 {
            return bad("max_iter_factor must be at least 1".into());
        }
        if let Some(l) = self.voxel_level {
            if l > MAX_DEPTH {
                return bad(format!("voxel_level {l} exceeds {MAX_DEPTH}"));
            }
        }
        if let Some(f) = self.snapshot_fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return bad(format!("snapshot fraction {f} outside (0, 1]"));
        }
        self.material.validate().map_err(|e| DriverError::Config(e.to_string()))?;
        self.bcs.validate().map_err(|e| DriverError::Config(e.to_string()))?;
        Ok(())
    }

    /// Initial octree for a schedule's grid.
    pub fn initial_mesh(&self, schedule: &VoxelSchedule) -> Result<OctreeMesh, DriverError> {
        let grid = *schedule.grid();
        let required = required_depth(&grid)?;
        let depth = self.voxel_level.unwrap_or(required);
        if depth < required {
            return Err(DriverError::Config(format!(
                "voxel_level {depth} is too small for a {}x{}x{} grid (needs {required})",
                grid.dims[0], grid.dims[1], grid.dims[2]
            )));
        }
        Ok(OctreeMesh::with_depth(grid, depth, self.base_level.min(depth))?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelRecord {
    /// 1-based position in the schedule.
    pub ordinal: usize,
    pub leaves: usize,
    pub active_elements: usize,
    pub nodes: usize,
    pub solver_iters: usize,
    pub wall_ms: f64,
}

/// Field statistics when a completion fraction was reached.
#[derive(Debug, Clone, PartialEq)]
pub struct StageStats {
    pub fraction: f64,
    pub printed: usize,
    pub stats: FieldStats,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimReport {
    pub grid_dims: [usize; 3],
    pub records: Vec<VoxelRecord>,
    pub stages: Vec<StageStats>,
    pub final_stats: Option<FieldStats>,
    pub final_time: f64,
    pub total_wall_ms: f64,
}

impl SimReport {
    pub fn print_voxels(&self) -> usize {
        self.records.len()
    }

    pub fn stage_mean(&self, fraction: f64) -> Option<f64> {
        self.stages
            .iter()
            .find(|s| (s.fraction - fraction).abs() < 1e-12)
            .map(|s| s.stats.mean)
    }
}

/// What a sink sees when a snapshot is due.
pub struct Snapshot<'a> {
    /// `030` style percentage for completion stages, `v000012` for the
    /// periodic cadence.
    pub label: String,
    pub printed: usize,
    pub mesh: &'a OctreeMesh,
    pub state: &'a ThermalState,
}

pub trait SnapshotSink {
    fn snapshot(&mut self, snap: &Snapshot<'_>) -> Result<(), SinkError>;
}

impl<F> SnapshotSink for F
where
    F: FnMut(&Snapshot<'_>) -> Result<(), SinkError>,
{
    fn snapshot(&mut self, snap: &Snapshot<'_>) -> Result<(), SinkError> {
        self(snap)
    }
}

/// Printed-voxel counts at which each completion fraction is reached.
fn stage_points(fractions: &[f64], n: usize) -> Vec<(f64, usize)> {
    if n == 0 {
        return Vec::new();
    }
    fractions
        .iter()
        .map(|&f| (f, ((f * n as f64 - 1e-9).ceil() as usize).clamp(1, n)))
        .collect()
}

pub fn stage_label(fraction: f64) -> String {
    format!("{:03}", (fraction * 100.0).round() as u32)
}

/// Simulate printing `schedule`. Returns the final mesh, state and report.
pub fn run(
    schedule: &VoxelSchedule,
    cfg: &SimConfig,
    sinks: &mut [&mut dyn SnapshotSink],
) -> Result<(OctreeMesh, ThermalState, SimReport), DriverError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut mesh = cfg.initial_mesh(schedule)?;
    let mut state = ThermalState::new(&mesh, &cfg.bcs);
    let n = schedule.len();
    let stages = stage_points(&cfg.snapshot_fractions, n);
    let mut report = SimReport {
        grid_dims: schedule.grid().dims,
        ..SimReport::default()
    };

    let mut emit = |label: String, printed: usize, mesh: &OctreeMesh, state: &ThermalState| -> Result<(), DriverError> {
        let snap = Snapshot {
            label,
            printed,
            mesh,
            state,
        };
        for sink in sinks.iter_mut() {
            sink.snapshot(&snap).map_err(|source| DriverError::Sink {
                label: snap.label.clone(),
                source,
            })?;
        }
        Ok(())
    };

    for (idx, &v) in schedule.order().iter().enumerate() {
        let ordinal = idx + 1;
        let t0 = Instant::now();
        let wrap = |source: FemError| DriverError::Voxel { ordinal, source };

        let leaf = mesh.leaf_containing(v)?;
        if mesh.leaves()[leaf].level() < mesh.depth() {
            let old = mesh.clone();
            mesh.refine(v)?;
            state = transfer_solution(&old, &state, &mesh);
        }
        mesh.classify(std::iter::once(&v))?;
        state.refresh_active_nodes(&mesh);
        state.reset_inactive(cfg.bcs.t_ambient);
        let deposited = activate_voxel(&mut state, &mesh, v, &cfg.bcs).map_err(wrap)?;

        let held: Vec<(usize, f64)> = match cfg.deposit_mode {
            DepositMode::Held => deposited.iter().map(|&n| (n, cfg.bcs.t_deposit)).collect(),
            DepositMode::Initial => Vec::new(),
        };
        let sources: Vec<usize> = state
            .fresh()
            .iter()
            .map(|&f| mesh.leaf_containing(f))
            .collect::<Result<_, _>>()?;
        let iters = dwell(&mesh, &mut state, cfg, &held, &sources, cfg.steps_per_voxel).map_err(wrap)?;

        report.records.push(VoxelRecord {
            ordinal,
            leaves: mesh.len(),
            active_elements: mesh.active_count(),
            nodes: mesh.nodes().len(),
            solver_iters: iters,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        });

        for &(f, at) in &stages {
            if at == ordinal {
                if let Some(stats) = state.active_stats() {
                    report.stages.push(StageStats {
                        fraction: f,
                        printed: ordinal,
                        stats,
                    });
                }
                emit(stage_label(f), ordinal, &mesh, &state)?;
            }
        }
        if cfg.snapshot_every > 0 && ordinal % cfg.snapshot_every == 0 {
            emit(format!("v{ordinal:06}"), ordinal, &mesh, &state)?;
        }
    }

    if cfg.cooldown_steps > 0 && mesh.active_count() > 0 {
        dwell(&mesh, &mut state, cfg, &[], &[], cfg.cooldown_steps).map_err(DriverError::Cooldown)?;
    }

    report.final_stats = state.active_stats();
    report.final_time = state.time();
    report.total_wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((mesh, state, report))
}

/// `steps` backward-Euler steps on the current active set. The latent load
/// of freshly printed voxels enters the first step only.
fn dwell(
    mesh: &OctreeMesh,
    state: &mut ThermalState,
    cfg: &SimConfig,
    fixed: &[(usize, f64)],
    sources: &[usize],
    steps: usize,
) -> Result<usize, FemError> {
    let elements: Vec<usize> = mesh.active_leaves().collect();
    let opt = AssemblyOptions {
        elements: &elements,
        material: cfg.material,
        bcs: cfg.bcs,
        mass: cfg.mass,
        dt: cfg.dt,
        bed: true,
        fixed,
        sources,
    };
    let Some(disc) = Discretization::new(mesh, &opt)? else {
        return Ok(0);
    };
    let mut iters = 0;
    for s in 0..steps {
        let with_source = s == 0 && !sources.is_empty();
        iters += disc.step(state, with_source, cfg.tolerance, cfg.max_iter_factor)?.iterations;
        if s == 0 {
            state.take_fresh();
        }
    }
    Ok(iters)
}

/// One row of a sparsity comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutcome {
    pub name: String,
    pub voxels: usize,
    /// Mean active temperature per completion fraction.
    pub means: Vec<(f64, f64)>,
    pub final_time: f64,
}

pub const COMPARISON_FRACTIONS: [f64; 3] = [0.3, 0.6, 1.0];

/// Run the same configuration on each thinned version of `base` and
/// collect mean active temperatures at 30, 60 and 100 % completion.
pub fn compare_sparsity(
    base: &VoxelSchedule,
    policies: &[(String, SparsityPolicy)],
    cfg: &SimConfig,
) -> Result<Vec<PolicyOutcome>, DriverError> {
    let mut cfg = cfg.clone();
    cfg.snapshot_fractions = COMPARISON_FRACTIONS.to_vec();
    cfg.snapshot_every = 0;
    policies
        .iter()
        .map(|(name, p)| {
            let s = apply_sparsity(base, p)?;
            let (_, _, report) = run(&s, &cfg, &mut [])?;
            Ok(PolicyOutcome {
                name: name.clone(),
                voxels: s.len(),
                means: report.stages.iter().map(|st| (st.fraction, st.stats.mean)).collect(),
                final_time: report.final_time,
            })
        })
        .collect()
}

/// Cap the global worker pool from `VOXTHERM_THREADS`, if set.
pub fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("VOXTHERM_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| format!("VOXTHERM_THREADS must be a positive integer, got {v:?}"))?;
    if n == 0 {
        return Err("VOXTHERM_THREADS must be at least 1".into());
    }
    // a second initialization keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{VoxelGrid, VoxelId};
    use crate::shapes::{raster_schedule, Shape};

    fn cuboid_432() -> VoxelSchedule {
        let shape = Shape::Cuboid { dims: [4, 4, 2] };
        raster_schedule(&shape, &VoxelGrid::unit([4, 4, 2]).unwrap()).unwrap()
    }

    #[test]
    fn empty_schedule() {
        let s = VoxelSchedule::new(VoxelGrid::unit([4, 4, 4]).unwrap(), vec![]).unwrap();
        let (mesh, state, report) = run(&s, &SimConfig::default(), &mut []).unwrap();
        assert_eq!(mesh.len(), 64);
        assert_eq!(state.time(), 0.0);
        assert!(report.records.is_empty());
        assert!(report.final_stats.is_none());
    }

    #[test]
    fn single_voxel_cools_to_bed() {
        let s = VoxelSchedule::new(VoxelGrid::unit([1, 1, 1]).unwrap(), vec![VoxelId::new(0, 0, 0)]).unwrap();
        let cfg = SimConfig {
            steps_per_voxel: 500,
            material: MaterialParams::from_alpha(0.1).unwrap(),
            ..SimConfig::default()
        };
        let (_, state, report) = run(&s, &cfg, &mut []).unwrap();
        let st = report.final_stats.unwrap();
        assert!((st.max - 1.0).abs() < 1e-3 && (st.min - 1.0).abs() < 1e-3);
        assert_eq!(state.time(), 500.0);
    }

    #[test]
    fn cuboid_run_bookkeeping() {
        let s = cuboid_432();
        let mut seen = Vec::new();
        let mut sink = |snap: &Snapshot<'_>| -> Result<(), SinkError> {
            let st = snap.state.active_stats().unwrap();
            assert!(st.min >= 1.0 - 1e-8 && st.max <= 2.0 + 1e-8);
            assert_eq!(snap.mesh.active_count(), snap.printed);
            seen.push(snap.label.clone());
            Ok(())
        };
        let cfg = SimConfig {
            snapshot_every: 1,
            ..SimConfig::default()
        };
        let (mesh, state, report) = run(&s, &cfg, &mut [&mut sink]).unwrap();
        assert_eq!(report.records.len(), 32);
        assert_eq!(mesh.active_count(), 32);
        assert_eq!(state.time(), 96.0);
        assert!(report.records.windows(2).all(|w| w[0].leaves <= w[1].leaves));
        assert!(report.records.iter().enumerate().all(|(i, r)| r.active_elements == i + 1));
        assert_eq!(seen.iter().filter(|l| !l.starts_with('v')).count(), 3);
        assert_eq!(seen.len(), 35);
        assert_eq!(report.stages.iter().map(|s| s.printed).collect::<Vec<_>>(), vec![10, 20, 32]);
    }

    #[test]
    fn held_mode_pins_deposit_during_dwell() {
        let s = VoxelSchedule::new(
            VoxelGrid::unit([1, 1, 2]).unwrap(),
            vec![VoxelId::new(0, 0, 0), VoxelId::new(0, 0, 1)],
        )
        .unwrap();
        let cfg = SimConfig {
            deposit_mode: DepositMode::Held,
            steps_per_voxel: 50,
            material: MaterialParams::from_alpha(1.0).unwrap(),
            ..SimConfig::default()
        };
        let (mesh, state, _) = run(&s, &cfg, &mut []).unwrap();
        // the last voxel's nodes stay at the deposit value, bed nodes win
        for (n, p) in mesh.nodes().coords().iter().enumerate() {
            if state.is_active_node(n) {
                let expect = if p[2] == 0 { 1.0 } else { 2.0 };
                assert_eq!(state.temperatures()[n], expect);
            }
        }
    }

    #[test]
    fn cooldown_extends_time() {
        let s = cuboid_432();
        let cfg = SimConfig {
            cooldown_steps: 10,
            ..SimConfig::default()
        };
        let (_, state, report) = run(&s, &cfg, &mut []).unwrap();
        assert_eq!(state.time(), 106.0);
        assert_eq!(report.final_time, 106.0);
    }

    #[test]
    fn stage_points_rounding() {
        assert_eq!(stage_points(&[0.3, 0.6, 1.0], 10), vec![(0.3, 3), (0.6, 6), (1.0, 10)]);
        assert_eq!(stage_points(&[0.3], 1), vec![(0.3, 1)]);
        assert!(stage_points(&[0.3], 0).is_empty());
        assert_eq!(stage_label(0.3), "030");
    }

    #[test]
    fn identical_policies_identical_results() {
        let shape = Shape::Cuboid { dims: [6, 6, 4] };
        let base = raster_schedule(&shape, &VoxelGrid::unit([6, 6, 4]).unwrap()).unwrap();
        let p = SparsityPolicy::medium(3);
        let out = compare_sparsity(
            &base,
            &[("a".into(), p), ("b".into(), p)],
            &SimConfig::default(),
        )
        .unwrap();
        assert_eq!(out[0].means, out[1].means);
        assert!(out[0].voxels < base.len());
    }
}
