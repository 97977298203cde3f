//! File formats: run configuration, VTK snapshots and CSV reports.

pub mod config;
pub mod report;
pub mod vtk;

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub fn write_file(path: &Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_file(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub use config::ConfigFile;
pub use report::{report_csv, strip_wall_time, write_report, REPORT_HEADER};
pub use vtk::{parse_vtk, vtk_string, write_vtk, VtkData};
