//! Command-line front end.

use std::ffi::OsString;
use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use crate::driver::{self, SinkError, Snapshot};
use crate::gcode::parse_gcode;
use crate::io::{read_file, report_csv, vtk_string, write_file, ConfigFile};
use crate::octree::OctreeMesh;
use crate::schedule::{apply_sparsity, build_schedule, SparsityPolicy, VoxelGrid, VoxelSchedule};
use crate::shapes::{raster_schedule, schedule_to_gcode, Shape};

#[derive(Debug, Parser)]
#[command(name = "voxtherm", version, about = "Voxel print schedules and thermal simulation on adaptive octrees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert G-code into a voxel print schedule.
    Voxelize {
        /// G-code file, `-` for standard input.
        gcode: PathBuf,
        /// Voxel edge length in G-code units.
        #[arg(long, default_value_t = 1.0)]
        voxel_size: f64,
        /// Grid size in voxels; derived from the extrusion bounds if omitted.
        #[arg(long, num_args = 3, value_names = ["NX", "NY", "NZ"])]
        dims: Option<Vec<usize>>,
        /// Grid origin; x and y snap to the voxel lattice below the part and
        /// z is the bed (0) if omitted.
        #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], allow_negative_numbers = true)]
        origin: Option<Vec<f64>>,
        /// Output schedule file (standard output if omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the thermal simulation of a schedule.
    Simulate {
        /// TOML configuration; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        schedule: PathBuf,
        /// Output directory for snapshots and report.csv.
        #[arg(short, long)]
        output: PathBuf,
        /// Geometry name for the report summary (schedule file stem by default).
        #[arg(long)]
        geometry: Option<String>,
    },
    /// Generate a procedural part as a schedule or as G-code.
    Gen {
        #[arg(long, value_enum)]
        shape: ShapeKind,
        /// Cuboid size in voxels.
        #[arg(long, num_args = 3, value_names = ["NX", "NY", "NZ"])]
        dims: Option<Vec<usize>>,
        /// Sphere radius in voxels.
        #[arg(long)]
        radius: Option<f64>,
        /// Grid size; the tight size of the shape if omitted.
        #[arg(long, num_args = 3, value_names = ["NX", "NY", "NZ"])]
        grid: Option<Vec<usize>>,
        #[arg(long, value_enum, default_value_t = Emit::Schedule)]
        emit: Emit,
        /// Print one row out of every SKIP + 1 inside the sparse band.
        #[arg(long)]
        skip: Option<usize>,
        /// Sparse band as fractions of the part height.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.25, 0.75])]
        band: Vec<f64>,
        /// Drop the end voxels of skipped rows too.
        #[arg(long)]
        no_row_ends: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Build the octree for a schedule and print its statistics.
    MeshInfo {
        schedule: PathBuf,
        #[arg(long, default_value_t = 2)]
        base_level: u8,
        /// Print the leaf listing.
        #[arg(long)]
        dump: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ShapeKind {
    Cuboid,
    Sphere,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Emit {
    Gcode,
    Schedule,
}

/// Entry point; returns the process exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Voxelize {
            gcode,
            voxel_size,
            dims,
            origin,
            output,
        } => voxelize(&gcode, voxel_size, dims, origin, output.as_deref()),
        Command::Simulate {
            config,
            schedule,
            output,
            geometry,
        } => simulate(config.as_deref(), &schedule, &output, geometry),
        Command::Gen {
            shape,
            dims,
            radius,
            grid,
            emit,
            skip,
            band,
            no_row_ends,
            output,
        } => {
            let shape = match shape {
                ShapeKind::Cuboid => {
                    let d = dims.context("gen: --dims is required for a cuboid")?;
                    Shape::Cuboid { dims: [d[0], d[1], d[2]] }
                }
                ShapeKind::Sphere => Shape::Sphere {
                    radius: radius.context("gen: --radius is required for a sphere")?,
                },
            };
            let grid_dims = grid.map(|g| [g[0], g[1], g[2]]).unwrap_or_else(|| shape.tight_dims());
            let grid = VoxelGrid::unit(grid_dims).context("gen: grid")?;
            let mut s = raster_schedule(&shape, &grid).context("gen")?;
            if let Some(skip) = skip {
                let p = SparsityPolicy::new(band[0], band[1], skip, !no_row_ends).context("gen: sparsity")?;
                s = apply_sparsity(&s, &p).context("gen: sparsity")?;
            }
            let text = match emit {
                Emit::Gcode => schedule_to_gcode(&s),
                Emit::Schedule => s.to_text(),
            };
            emit_text(&text, output.as_deref(), "gen")
        }
        Command::MeshInfo {
            schedule,
            base_level,
            dump,
        } => mesh_info(&schedule, base_level, dump),
    }
}

fn emit_text(text: &str, output: Option<&Path>, stage: &str) -> Result<()> {
    match output {
        Some(p) => write_file(p, text).with_context(|| format!("{stage}: writing output")),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .with_context(|| format!("{stage}: writing standard output"))
        }
    }
}

fn load_schedule(path: &Path, stage: &str) -> Result<VoxelSchedule> {
    let text = read_file(path).with_context(|| format!("{stage}: reading schedule"))?;
    VoxelSchedule::from_text(&text).with_context(|| format!("{stage}: parsing schedule {}", path.display()))
}

/// Grid enclosing the extruded material: x and y snapped down to the voxel
/// lattice, z starting at the bed.
fn auto_grid(tp: &crate::gcode::Toolpath, h: f64, origin: Option<[f64; 3]>) -> Result<VoxelGrid> {
    let Some(b) = tp.bounds else {
        bail!("voxelize: the G-code has no extruding moves");
    };
    let origin = origin.unwrap_or([(b.min[0] / h).floor() * h, (b.min[1] / h).floor() * h, 0.0]);
    let dims: [usize; 3] = std::array::from_fn(|a| (((b.max[a] - origin[a]) / h - 1e-9).ceil().max(1.0)) as usize);
    Ok(VoxelGrid::new(origin, h, dims)?)
}

fn voxelize(
    gcode: &Path,
    h: f64,
    dims: Option<Vec<usize>>,
    origin: Option<Vec<f64>>,
    output: Option<&Path>,
) -> Result<()> {
    let text = if gcode == Path::new("-") {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .context("voxelize: reading standard input")?;
        s
    } else {
        read_file(gcode).context("voxelize: reading G-code")?
    };
    let tp = parse_gcode(&text).with_context(|| format!("voxelize: parsing {}", gcode.display()))?;
    let origin = origin.map(|o| [o[0], o[1], o[2]]);
    let grid = match dims {
        Some(d) => VoxelGrid::new(origin.unwrap_or([0.0; 3]), h, [d[0], d[1], d[2]]).context("voxelize: grid")?,
        None => auto_grid(&tp, h, origin)?,
    };
    let s = build_schedule(&tp, &grid).context("voxelize")?;
    emit_text(&s.to_text(), output, "voxelize")
}

fn simulate(config: Option<&Path>, schedule: &Path, out_dir: &Path, geometry: Option<String>) -> Result<()> {
    driver::configure_threads().map_err(anyhow::Error::msg)?;
    let cfg_file = match config {
        Some(p) => {
            let text = read_file(p).context("simulate: reading config")?;
            ConfigFile::parse(&text).with_context(|| format!("simulate: parsing config {}", p.display()))?
        }
        None => ConfigFile::default(),
    };
    let cfg = cfg_file.sim_config();
    let s = load_schedule(schedule, "simulate")?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("simulate: creating {}", out_dir.display()))?;

    let include_inactive = cfg_file.output.include_inactive;
    let mut sink = |snap: &Snapshot<'_>| -> Result<(), SinkError> {
        let path = out_dir.join(format!("snapshot_{}.vtk", snap.label));
        write_file(&path, &vtk_string(snap.mesh, snap.state, include_inactive))?;
        Ok(())
    };
    let (_, state, report) = driver::run(&s, &cfg, &mut [&mut sink]).context("simulate")?;

    let geometry = geometry.unwrap_or_else(|| {
        schedule
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "part".into())
    });
    write_file(&out_dir.join("report.csv"), &report_csv(&report, &geometry)).context("simulate: writing report")?;

    println!(
        "printed {} voxels, t = {}, {:.3} s",
        report.print_voxels(),
        state.time(),
        report.total_wall_ms / 1e3
    );
    if let Some(st) = report.final_stats {
        println!("active temperature min {:.6} mean {:.6} max {:.6}", st.min, st.mean, st.max);
    }
    Ok(())
}

fn mesh_info(path: &Path, base_level: u8, dump: bool) -> Result<()> {
    let s = load_schedule(path, "mesh-info")?;
    let cfg = driver::SimConfig {
        base_level,
        ..driver::SimConfig::default()
    };
    let mut mesh: OctreeMesh = cfg.initial_mesh(&s).context("mesh-info")?;
    for &v in s.order() {
        mesh.refine(v).context("mesh-info")?;
    }
    mesh.classify(s.order()).context("mesh-info")?;
    let g = s.grid();
    let mut out = format!(
        "grid {}x{}x{}\nvoxels {}\nlayers {}\ndepth {}\nbase_level {}\nleaves {}\nactive {}\nnodes {}\nhanging {}\n",
        g.dims[0],
        g.dims[1],
        g.dims[2],
        s.len(),
        s.layers_used(),
        mesh.depth(),
        mesh.base_level(),
        mesh.len(),
        mesh.active_count(),
        mesh.nodes().len(),
        mesh.nodes().hanging_count()
    );
    if dump {
        out.push_str(&mesh.dump());
    }
    emit_text(&out, None, "mesh-info")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(cli_main(["voxtherm"]), 2);
        assert_eq!(cli_main(["voxtherm", "frobnicate"]), 2);
        assert_eq!(cli_main(["voxtherm", "gen", "--shape", "cube"]), 2);
    }

    #[test]
    fn help_exits_0() {
        assert_eq!(cli_main(["voxtherm", "simulate", "--help"]), 0);
    }

    #[test]
    fn missing_schedule_exit_1() {
        let code = cli_main(["voxtherm", "mesh-info", "/nonexistent/s.txt"]);
        assert_eq!(code, 1);
    }
}
