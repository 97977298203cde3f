//! Procedural test parts: layer-by-layer boustrophedon raster schedules for
//! simple solids, and G-code that reproduces any schedule when voxelized.

use std::fmt::Write as _;

use thiserror::Error;

use crate::schedule::{VoxelGrid, VoxelId, VoxelSchedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    #[error("shape {shape} does not fit in a {}x{}x{} grid", .grid[0], .grid[1], .grid[2])]
    DoesNotFit { shape: String, grid: [usize; 3] },
    #[error("invalid shape parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Box of `dims` voxels.
    Cuboid { dims: [usize; 3] },
    /// Ball of `radius` voxel units, resting on the bed.
    Sphere { radius: f64 },
}

impl Shape {
    /// Smallest grid holding the shape.
    pub fn tight_dims(&self) -> [usize; 3] {
        match *self {
            Shape::Cuboid { dims } => dims,
            Shape::Sphere { radius } => {
                let d = (2.0 * radius).ceil().max(1.0) as usize;
                [d, d, d]
            }
        }
    }

    fn describe(&self) -> String {
        match self {
            Shape::Cuboid { dims } => format!("cuboid {}x{}x{}", dims[0], dims[1], dims[2]),
            Shape::Sphere { radius } => format!("sphere r={radius}"),
        }
    }

    /// Solid voxels of the shape, centered in x/y and resting on z = 0.
    fn membership(&self, grid: &VoxelGrid) -> Result<Vec<bool>, ShapeError> {
        let [nx, ny, nz] = grid.dims;
        let need = self.tight_dims();
        if (0..3).any(|a| need[a] > grid.dims[a]) {
            return Err(ShapeError::DoesNotFit {
                shape: self.describe(),
                grid: grid.dims,
            });
        }
        let mut solid = vec![false; nx * ny * nz];
        match *self {
            Shape::Cuboid { dims } => {
                if dims.iter().any(|&d| d == 0) {
                    return Err(ShapeError::InvalidParameter("cuboid dimensions must be positive".into()));
                }
                let off = [(nx - dims[0]) / 2, (ny - dims[1]) / 2, 0];
                for k in 0..dims[2] {
                    for j in 0..dims[1] {
                        for i in 0..dims[0] {
                            solid[(i + off[0]) + nx * ((j + off[1]) + ny * (k + off[2]))] = true;
                        }
                    }
                }
            }
            Shape::Sphere { radius } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(ShapeError::InvalidParameter("sphere radius must be positive".into()));
                }
                let c = [nx as f64 / 2.0, ny as f64 / 2.0, radius];
                for k in 0..nz {
                    for j in 0..ny {
                        for i in 0..nx {
                            let p = [i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5];
                            let r2: f64 = (0..3).map(|a| (p[a] - c[a]).powi(2)).sum();
                            solid[i + nx * (j + ny * k)] = r2 <= radius * radius;
                        }
                    }
                }
            }
        }
        Ok(solid)
    }
}

/// Raster schedule of a shape: layers bottom-up, rows in increasing j, and
/// the x direction alternating from row to row within each layer.
pub fn raster_schedule(shape: &Shape, grid: &VoxelGrid) -> Result<VoxelSchedule, ShapeError> {
    let solid = shape.membership(grid)?;
    let [nx, ny, nz] = grid.dims;
    let mut order = Vec::new();
    for k in 0..nz {
        let mut row = 0usize;
        for j in 0..ny {
            let cells: Vec<usize> = (0..nx).filter(|&i| solid[i + nx * (j + ny * k)]).collect();
            if cells.is_empty() {
                continue;
            }
            let forward = row % 2 == 0;
            let iter: Box<dyn Iterator<Item = &usize>> = if forward {
                Box::new(cells.iter())
            } else {
                Box::new(cells.iter().rev())
            };
            order.extend(iter.map(|&i| VoxelId::new(i as u32, j as u32, k as u32)));
            row += 1;
        }
    }
    Ok(VoxelSchedule::new(*grid, order).expect("raster schedule is duplicate-free and in bounds"))
}

/// G-code whose voxelization on the schedule's grid reproduces the schedule.
///
/// Consecutive voxels that form a straight x-run become one extruding move
/// between voxel centers; everything else is reached by travel moves.
pub fn schedule_to_gcode(s: &VoxelSchedule) -> String {
    let grid = s.grid();
    let mut out = String::new();
    let _ = writeln!(out, "; voxel raster, {} voxels", s.len());
    let _ = writeln!(
        out,
        "; grid {} {} {} {} {} {} {}",
        grid.dims[0], grid.dims[1], grid.dims[2], grid.voxel_size, grid.origin[0], grid.origin[1], grid.origin[2]
    );
    out.push_str("G21\nG90\nM82\nG92 E0\n");

    let order = s.order();
    let mut pos = [0.0f64; 3];
    let mut e = 0.0f64;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        let step = order
            .get(start + 1)
            .filter(|n| n.j == order[start].j && n.k == order[start].k && order[start].i.abs_diff(n.i) == 1)
            .map(|n| n.i as i64 - order[start].i as i64);
        if let Some(step) = step {
            while end + 1 < order.len() {
                let (a, b) = (order[end], order[end + 1]);
                if b.j == a.j && b.k == a.k && b.i as i64 - a.i as i64 == step {
                    end += 1;
                } else {
                    break;
                }
            }
        }
        let from = grid.voxel_center(order[start]);
        let to = grid.voxel_center(order[end]);
        if from != pos {
            let _ = writeln!(out, "G0 X{} Y{} Z{}", from[0], from[1], from[2]);
        }
        e += 0.05 * (end - start + 1) as f64;
        if start == end {
            let _ = writeln!(out, "G1 E{e:.5}");
        } else {
            let _ = writeln!(out, "G1 X{} Y{} Z{} E{e:.5}", to[0], to[1], to[2]);
        }
        pos = to;
        start = end + 1;
    }
    out
}
