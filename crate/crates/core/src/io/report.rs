//! Per-voxel CSV report.

use std::fmt::Write as _;
use std::path::Path;

use super::{write_file, IoError};
use crate::driver::SimReport;

pub const REPORT_HEADER: &str = "voxel_ordinal,leaves,active_elements,nodes,solver_iters,wall_ms";

/// CSV text; non-empty reports end with a `#` summary line naming the
/// geometry, grid resolution, printed voxel count and total wall time.
pub fn report_csv(report: &SimReport, geometry: &str) -> String {
    let mut s = String::with_capacity(40 * (report.records.len() + 2));
    s.push_str(REPORT_HEADER);
    s.push('\n');
    for r in &report.records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:.3}",
            r.ordinal, r.leaves, r.active_elements, r.nodes, r.solver_iters, r.wall_ms
        );
    }
    if !report.records.is_empty() {
        let [nx, ny, nz] = report.grid_dims;
        let _ = writeln!(
            s,
            "# geometry={geometry},resolution={nx}x{ny}x{nz},print_voxels={},time_s={:.3}",
            report.print_voxels(),
            report.total_wall_ms / 1e3
        );
    }
    s
}

pub fn write_report(report: &SimReport, geometry: &str, path: &Path) -> Result<(), IoError> {
    write_file(path, &report_csv(report, geometry))
}

/// Report text with the wall-time column and summary field blanked, for
/// comparing runs.
pub fn strip_wall_time(csv: &str) -> String {
    csv.lines()
        .map(|l| {
            if let Some(i) = l.find(",time_s=") {
                format!("{},time_s=", &l[..i])
            } else if l.starts_with('#') || l == REPORT_HEADER {
                l.to_string()
            } else {
                match l.rfind(',') {
                    Some(i) => format!("{},", &l[..i]),
                    None => l.to_string(),
                }
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}
