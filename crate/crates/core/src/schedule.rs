//! Voxel-by-voxel print order construction.
//!
//! Extruding toolpath segments are sampled at equidistant points (spacing at
//! most half a voxel, endpoints included) and each sample is mapped to the
//! voxel containing it. Where two consecutive samples land in voxels that
//! differ along more than one axis, the voxels between them are recovered from
//! the exact order in which the segment crosses the voxel planes, so a
//! straight segment never skips a voxel it passes through.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::gcode::{Toolpath, ToolpathSegment};

/// Tolerance, in voxel units, for points sitting on the grid boundary.
const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("invalid voxel grid: {0}")]
    InvalidGrid(String),
    #[error("point ({}, {}, {}) lies outside the voxel grid", .point[0], .point[1], .point[2])]
    OutOfBounds { point: [f64; 3] },
    #[error("extruding segment {index} from {start:?} to {end:?} leaves the voxel grid")]
    SegmentOutOfBounds {
        index: usize,
        start: [f64; 3],
        end: [f64; 3],
    },
    #[error("voxel ({}, {}, {}) is outside the grid", .0.i, .0.j, .0.k)]
    VoxelOutOfBounds(VoxelId),
    #[error("voxel ({}, {}, {}) appears more than once", .0.i, .0.j, .0.k)]
    Duplicate(VoxelId),
    #[error("invalid sparsity policy: {0}")]
    InvalidPolicy(String),
    #[error("schedule file line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Uniform Cartesian voxel grid of the build volume. One voxel edge is one
/// non-dimensional length unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGrid {
    pub origin: [f64; 3],
    pub voxel_size: f64,
    pub dims: [usize; 3],
}

impl VoxelGrid {
    pub fn new(origin: [f64; 3], voxel_size: f64, dims: [usize; 3]) -> Result<Self, ScheduleError> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(ScheduleError::InvalidGrid(format!(
                "voxel size must be positive, got {voxel_size}"
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(ScheduleError::InvalidGrid(format!(
                "all dimensions must be at least 1, got {dims:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(ScheduleError::InvalidGrid("origin must be finite".into()));
        }
        Ok(VoxelGrid {
            origin,
            voxel_size,
            dims,
        })
    }

    /// Unit voxels at the origin.
    pub fn unit(dims: [usize; 3]) -> Result<Self, ScheduleError> {
        Self::new([0.0; 3], 1.0, dims)
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn contains(&self, v: VoxelId) -> bool {
        (v.i as usize) < self.dims[0] && (v.j as usize) < self.dims[1] && (v.k as usize) < self.dims[2]
    }

    /// Point in voxel units relative to the grid origin.
    pub fn to_lattice(&self, p: [f64; 3]) -> [f64; 3] {
        [
            (p[0] - self.origin[0]) / self.voxel_size,
            (p[1] - self.origin[1]) / self.voxel_size,
            (p[2] - self.origin[2]) / self.voxel_size,
        ]
    }

    pub fn voxel_center(&self, v: VoxelId) -> [f64; 3] {
        let idx = [v.i, v.j, v.k];
        let mut c = [0.0; 3];
        for a in 0..3 {
            c[a] = self.origin[a] + (idx[a] as f64 + 0.5) * self.voxel_size;
        }
        c
    }

    fn lattice_in_bounds(&self, q: [f64; 3]) -> bool {
        (0..3).all(|a| q[a] >= -BOUNDARY_EPS && q[a] <= self.dims[a] as f64 + BOUNDARY_EPS)
    }

    /// Voxel containing a lattice point; points on the upper boundary belong
    /// to the last voxel.
    fn lattice_voxel(&self, q: [f64; 3]) -> [u32; 3] {
        let mut idx = [0u32; 3];
        for a in 0..3 {
            let f = q[a].floor().max(0.0) as usize;
            idx[a] = f.min(self.dims[a] - 1) as u32;
        }
        idx
    }

    /// Voxel containing the point `p` (mm).
    pub fn locate(&self, p: [f64; 3]) -> Result<VoxelId, ScheduleError> {
        let q = self.to_lattice(p);
        if !self.lattice_in_bounds(q) {
            return Err(ScheduleError::OutOfBounds { point: p });
        }
        Ok(VoxelId::from(self.lattice_voxel(q)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelId {
    pub i: u32,
    pub j: u32,
    pub k: u32,
}

impl VoxelId {
    pub const fn new(i: u32, j: u32, k: u32) -> Self {
        VoxelId { i, j, k }
    }

    pub fn as_array(self) -> [u32; 3] {
        [self.i, self.j, self.k]
    }
}

impl From<[u32; 3]> for VoxelId {
    fn from(a: [u32; 3]) -> Self {
        VoxelId::new(a[0], a[1], a[2])
    }
}

/// Duplicate-free, in-bounds print order on a voxel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelSchedule {
    grid: VoxelGrid,
    order: Vec<VoxelId>,
}

impl VoxelSchedule {
    pub fn new(grid: VoxelGrid, order: Vec<VoxelId>) -> Result<Self, ScheduleError> {
        let mut seen = HashSet::with_capacity(order.len());
        for &v in &order {
            if !grid.contains(v) {
                return Err(ScheduleError::VoxelOutOfBounds(v));
            }
            if !seen.insert(v) {
                return Err(ScheduleError::Duplicate(v));
            }
        }
        Ok(VoxelSchedule { grid, order })
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn order(&self) -> &[VoxelId] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Number of populated layers (highest occupied k plus one).
    pub fn layers_used(&self) -> usize {
        self.order.iter().map(|v| v.k as usize + 1).max().unwrap_or(0)
    }

    /// Serialize to the text schedule format: a `grid` header line followed
    /// by one `i j k` triple per line in print order.
    pub fn to_text(&self) -> String {
        let g = &self.grid;
        let mut s = String::with_capacity(16 * (self.order.len() + 1));
        let _ = writeln!(
            s,
            "grid {} {} {} {} {} {} {}",
            g.dims[0], g.dims[1], g.dims[2], g.voxel_size, g.origin[0], g.origin[1], g.origin[2]
        );
        for v in &self.order {
            let _ = writeln!(s, "{} {} {}", v.i, v.j, v.k);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ScheduleError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(ScheduleError::Format {
            line: 1,
            message: "missing grid header".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 8 || fields[0] != "grid" {
            return Err(ScheduleError::Format {
                line: 1,
                message: "expected 'grid nx ny nz voxel_size origin_x origin_y origin_z'".into(),
            });
        }
        let bad = |what: &str| ScheduleError::Format {
            line: 1,
            message: format!("invalid {what}"),
        };
        let mut dims = [0usize; 3];
        for a in 0..3 {
            dims[a] = fields[1 + a].parse().map_err(|_| bad("grid dimension"))?;
        }
        let voxel_size: f64 = fields[4].parse().map_err(|_| bad("voxel size"))?;
        let mut origin = [0.0; 3];
        for a in 0..3 {
            origin[a] = fields[5 + a].parse().map_err(|_| bad("origin"))?;
        }
        let grid = VoxelGrid::new(origin, voxel_size, dims).map_err(|e| ScheduleError::Format {
            line: 1,
            message: e.to_string(),
        })?;

        let mut order = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(ScheduleError::Format {
                    line: line_no,
                    message: "expected 'i j k'".into(),
                });
            }
            let mut ijk = [0u32; 3];
            for a in 0..3 {
                ijk[a] = parts[a].parse().map_err(|_| ScheduleError::Format {
                    line: line_no,
                    message: format!("invalid index '{}'", parts[a]),
                })?;
            }
            order.push(VoxelId::from(ijk));
        }
        VoxelSchedule::new(grid, order).map_err(|e| ScheduleError::Format {
            line: 0,
            message: e.to_string(),
        })
    }
}

/// Voxels visited by one extruding segment, in first-visit order with
/// consecutive repeats removed.
pub fn rasterize_segment(seg: &ToolpathSegment, grid: &VoxelGrid) -> Result<Vec<VoxelId>, ScheduleError> {
    let qa = grid.to_lattice(seg.start);
    let qb = grid.to_lattice(seg.end);
    if !grid.lattice_in_bounds(qa) || !grid.lattice_in_bounds(qb) {
        return Err(ScheduleError::SegmentOutOfBounds {
            index: 0,
            start: seg.start,
            end: seg.end,
        });
    }
    let d = [qb[0] - qa[0], qb[1] - qa[1], qb[2] - qa[2]];
    let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let n = (len / 0.5).ceil() as usize;

    let at = |s: usize| -> [f64; 3] {
        if s == n {
            return qb;
        }
        let t = s as f64 / n as f64;
        [qa[0] + t * d[0], qa[1] + t * d[1], qa[2] + t * d[2]]
    };

    let mut prev_q = qa;
    let mut prev = grid.lattice_voxel(qa);
    let mut out = vec![VoxelId::from(prev)];
    for s in 1..=n {
        let q = at(s);
        let cur = grid.lattice_voxel(q);
        if cur != prev {
            step_between(prev_q, q, prev, cur, &mut out);
        }
        prev_q = q;
        prev = cur;
    }
    Ok(out)
}

/// Emit the voxels from `from` to `to` (exclusive of `from`) in the order the
/// straight path `qa -> qb` crosses the separating planes. Each axis differs
/// by at most one index because samples are at most half a voxel apart.
fn step_between(qa: [f64; 3], qb: [f64; 3], from: [u32; 3], to: [u32; 3], out: &mut Vec<VoxelId>) {
    let mut crossings: Vec<(f64, usize)> = Vec::with_capacity(3);
    for a in 0..3 {
        if from[a] != to[a] {
            let plane = from[a].max(to[a]) as f64;
            let dq = qb[a] - qa[a];
            let t = if dq == 0.0 { 0.0 } else { ((plane - qa[a]) / dq).clamp(0.0, 1.0) };
            crossings.push((t, a));
        }
    }
    crossings.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

    let mut cur = from;
    let mut i = 0;
    while i < crossings.len() {
        let t0 = crossings[i].0;
        while i < crossings.len() && crossings[i].0 - t0 <= 1e-12 {
            cur[crossings[i].1] = to[crossings[i].1];
            i += 1;
        }
        let v = VoxelId::from(cur);
        if out.last() != Some(&v) {
            out.push(v);
        }
    }
}

/// Concatenate per-segment rasterizations in toolpath order and keep only
/// the first occurrence of every voxel.
pub fn build_schedule(tp: &Toolpath, grid: &VoxelGrid) -> Result<VoxelSchedule, ScheduleError> {
    let mut seen = HashSet::new();
    let mut order = Vec::new();
    for (index, seg) in tp.segments.iter().enumerate() {
        if !seg.extruding {
            continue;
        }
        let voxels = rasterize_segment(seg, grid).map_err(|e| match e {
            ScheduleError::SegmentOutOfBounds { start, end, .. } => {
                ScheduleError::SegmentOutOfBounds { index, start, end }
            }
            other => other,
        })?;
        for v in voxels {
            if seen.insert(v) {
                order.push(v);
            }
        }
    }
    Ok(VoxelSchedule { grid: *grid, order })
}

/// Sparse-infill transform: inside a band of layers, print one row out of
/// every `skip + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityPolicy {
    pub band_lo: f64,
    pub band_hi: f64,
    /// Rows skipped per printed row.
    pub skip: usize,
    /// Keep the first and last voxel of dropped rows as a thin shell.
    pub preserve_row_ends: bool,
}

impl Default for SparsityPolicy {
    fn default() -> Self {
        Self::dense()
    }
}

impl SparsityPolicy {
    pub fn new(band_lo: f64, band_hi: f64, skip: usize, preserve_row_ends: bool) -> Result<Self, ScheduleError> {
        let p = SparsityPolicy {
            band_lo,
            band_hi,
            skip,
            preserve_row_ends,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn dense() -> Self {
        SparsityPolicy {
            band_lo: 0.0,
            band_hi: 1.0,
            skip: 0,
            preserve_row_ends: true,
        }
    }

    /// Sparse infill in the middle 50% of the layers.
    pub fn medium(skip: usize) -> Self {
        SparsityPolicy {
            band_lo: 0.25,
            band_hi: 0.75,
            skip,
            preserve_row_ends: true,
        }
    }

    /// Sparse infill in the middle 75% of the layers.
    pub fn high(skip: usize) -> Self {
        SparsityPolicy {
            band_lo: 0.125,
            band_hi: 0.875,
            skip,
            preserve_row_ends: true,
        }
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if !(0.0 <= self.band_lo && self.band_lo <= self.band_hi && self.band_hi <= 1.0) {
            return Err(ScheduleError::InvalidPolicy(format!(
                "band [{}, {}] must satisfy 0 <= lo <= hi <= 1",
                self.band_lo, self.band_hi
            )));
        }
        Ok(())
    }
}

pub fn apply_sparsity(s: &VoxelSchedule, p: &SparsityPolicy) -> Result<VoxelSchedule, ScheduleError> {
    p.validate()?;
    if p.skip == 0 {
        return Ok(s.clone());
    }
    let nz_used = s.layers_used() as f64;
    let lo = p.band_lo * nz_used;
    let hi = p.band_hi * nz_used;
    let in_band = |k: u32| (k as f64) >= lo && (k as f64) <= hi;

    // row ordinal = rank of distinct j within the layer
    let mut rows: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    // (k, j) -> positions of first and last voxel in print order
    let mut ends: BTreeMap<(u32, u32), (usize, usize)> = BTreeMap::new();
    for (pos, v) in s.order.iter().enumerate() {
        if in_band(v.k) {
            rows.entry(v.k).or_default().insert(v.j);
            ends.entry((v.k, v.j))
                .and_modify(|e| e.1 = pos)
                .or_insert((pos, pos));
        }
    }
    let ordinal: BTreeMap<(u32, u32), usize> = rows
        .iter()
        .flat_map(|(&k, js)| js.iter().enumerate().map(move |(r, &j)| ((k, j), r)))
        .collect();

    let order = s
        .order
        .iter()
        .enumerate()
        .filter(|(pos, v)| {
            if !in_band(v.k) {
                return true;
            }
            let key = (v.k, v.j);
            if ordinal[&key] % (p.skip + 1) == 0 {
                return true;
            }
            let (first, last) = ends[&key];
            p.preserve_row_ends && (*pos == first || *pos == last)
        })
        .map(|(_, v)| *v)
        .collect();
    Ok(VoxelSchedule { grid: s.grid, order })
}
