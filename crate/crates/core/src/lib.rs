//! Voxel-by-voxel print schedules from G-code and transient thermal
//! simulation of the print on an incrementally refined octree mesh.

pub mod cli;
pub mod driver;
pub mod fem;
pub mod gcode;
pub mod io;
pub mod octree;
pub mod schedule;
pub mod shapes;

pub use cli::cli_main;
