//! Reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashSet;

use rand::Rng;
use voxtherm::gcode::{Toolpath, ToolpathSegment};
use voxtherm::octree::{Octant, OctreeMesh};
use voxtherm::schedule::{VoxelGrid, VoxelId};

fn size(o: &Octant, depth: u8) -> u64 {
    1u64 << (depth - o.level())
}

/// Closed boxes share at least one point.
pub fn boxes_touch(a: &Octant, b: &Octant, depth: u8) -> bool {
    let (sa, sb) = (size(a, depth), size(b, depth));
    (0..3).all(|ax| {
        let (a0, b0) = (a.anchor()[ax] as u64, b.anchor()[ax] as u64);
        a0 <= b0 + sb && b0 <= a0 + sa
    })
}

fn interiors_overlap(a: &Octant, b: &Octant, depth: u8) -> bool {
    let (sa, sb) = (size(a, depth), size(b, depth));
    (0..3).all(|ax| {
        let (a0, b0) = (a.anchor()[ax] as u64, b.anchor()[ax] as u64);
        a0 < b0 + sb && b0 < a0 + sa
    })
}

/// Exhaustive structural checks of a mesh; returns the first violation.
pub fn check_mesh(m: &OctreeMesh) -> Result<(), String> {
    let d = m.depth();
    let leaves = m.leaves();
    let root = 1u64 << d;
    let volume: u64 = leaves.iter().map(|o| size(o, d).pow(3)).sum();
    if volume != root.pow(3) {
        return Err(format!("leaf volume {volume} != root volume {}", root.pow(3)));
    }
    for o in leaves {
        let s = size(o, d);
        if o.anchor().iter().any(|&a| a as u64 % s != 0 || a as u64 + s > root) {
            return Err(format!("misplaced leaf {o:?}"));
        }
    }
    if let Some(w) = leaves.windows(2).find(|w| w[0].morton_key() >= w[1].morton_key()) {
        return Err(format!("Morton order broken at {:?}", w[1]));
    }
    for i in 0..leaves.len() {
        for j in i + 1..leaves.len() {
            let (a, b) = (&leaves[i], &leaves[j]);
            if interiors_overlap(a, b, d) {
                return Err(format!("overlap {a:?} {b:?}"));
            }
            if a.level().abs_diff(b.level()) > 1 && boxes_touch(a, b, d) {
                return Err(format!("2:1 violation {a:?} {b:?}"));
            }
        }
    }
    for l in m.active_leaves() {
        if leaves[l].level() != d {
            return Err(format!("active leaf {:?} above voxel level", leaves[l]));
        }
    }
    Ok(())
}

/// First-visit schedule from dense sampling of every extruding segment.
pub fn sampled_schedule(tp: &Toolpath, grid: &VoxelGrid, per_voxel: usize) -> Vec<VoxelId> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for s in tp.segments.iter().filter(|s| s.extruding) {
        let len = s.length();
        let n = ((len / grid.voxel_size * per_voxel as f64).ceil() as usize).max(1);
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let p: [f64; 3] = std::array::from_fn(|a| s.start[a] + t * (s.end[a] - s.start[a]));
            let v: [u32; 3] = std::array::from_fn(|a| {
                let q = ((p[a] - grid.origin[a]) / grid.voxel_size).floor();
                (q.max(0.0) as usize).min(grid.dims[a] - 1) as u32
            });
            let v = VoxelId::from(v);
            if seen.insert(v) {
                out.push(v);
            }
        }
    }
    out
}

/// Shortest non-zero piece of a segment between consecutive voxel-plane
/// crossings, in voxel units.
pub fn shortest_chord(s: &ToolpathSegment, grid: &VoxelGrid) -> f64 {
    let len = s.length() / grid.voxel_size;
    if len == 0.0 {
        return f64::INFINITY;
    }
    let mut ts = vec![0.0, 1.0];
    for a in 0..3 {
        let q0 = (s.start[a] - grid.origin[a]) / grid.voxel_size;
        let q1 = (s.end[a] - grid.origin[a]) / grid.voxel_size;
        if q0 == q1 {
            continue;
        }
        let (lo, hi) = (q0.min(q1), q0.max(q1));
        let mut k = lo.floor() + 1.0;
        while k < hi {
            ts.push((k - q0) / (q1 - q0));
            k += 1.0;
        }
    }
    ts.sort_by(f64::total_cmp);
    ts.windows(2)
        .map(|w| (w[1] - w[0]) * len)
        .filter(|&c| c > 0.0)
        .fold(f64::INFINITY, f64::min)
}

/// Random polyline of extruding and travel moves inside the grid.
pub fn random_toolpath<R: Rng>(rng: &mut R, grid: &VoxelGrid, segments: usize) -> Toolpath {
    let ext = |a: usize| grid.dims[a] as f64 * grid.voxel_size;
    let point = |rng: &mut R| -> [f64; 3] { std::array::from_fn(|a| grid.origin[a] + rng.gen_range(0.0..ext(a))) };
    let mut p = point(rng);
    let mut segs = Vec::new();
    for _ in 0..segments {
        let q = match rng.gen_range(0..4) {
            // in-layer move, the common slicer case
            0 | 1 => {
                let mut q = point(rng);
                q[2] = p[2];
                q
            }
            _ => point(rng),
        };
        segs.push(ToolpathSegment {
            start: p,
            end: q,
            extruding: rng.gen_bool(0.8),
            feedrate: None,
        });
        p = q;
    }
    Toolpath::from_segments(segs)
}

/// Exact solution on the unit slab with `T(0) = 1`, `T(1) = 2` and initial
/// field `1 + z + 4 z (1 - z)`, unit diffusivity.
pub fn slab_exact(z: f64, t: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let mut w = 0.0;
    let mut n = 1;
    while n < 400 {
        let nf = n as f64;
        w += 32.0 / (nf * nf * nf * pi * pi * pi) * (nf * pi * z).sin() * (-nf * nf * pi * pi * t).exp();
        n += 2;
    }
    1.0 + z + w
}

pub fn slab_initial(z: f64) -> f64 {
    1.0 + z + 4.0 * z * (1.0 - z)
}
