//! Legacy ASCII VTK unstructured-grid snapshots and a small reader.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{write_file, IoError};
use crate::fem::ThermalState;
use crate::octree::OctreeMesh;

pub const VTK_HEXAHEDRON: u8 = 12;

// node-table corner index for each VTK hexahedron vertex
const VTK_ORDER: [usize; 8] = [0, 1, 3, 2, 4, 5, 7, 6];

/// Snapshot text: one hexahedron per active leaf (every leaf with
/// `include_inactive`), point temperatures, cell level and activity.
/// Coordinates are in root-cube units.
pub fn vtk_string(mesh: &OctreeMesh, state: &ThermalState, include_inactive: bool) -> String {
    let cells: Vec<usize> = (0..mesh.len()).filter(|&l| include_inactive || mesh.is_active(l)).collect();
    let nodes = mesh.nodes();
    let mut point_of = vec![u32::MAX; nodes.len()];
    for &l in &cells {
        for n in nodes.leaf_nodes(l) {
            point_of[n] = 0;
        }
    }
    let mut points = Vec::new();
    for (n, p) in point_of.iter_mut().enumerate() {
        if *p == 0 {
            *p = points.len() as u32;
            points.push(n);
        }
    }
    let unit = mesh.root_size() as f64;

    let mut s = String::with_capacity(64 * (points.len() + cells.len()) + 256);
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "voxtherm snapshot t={}", state.time());
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} float", points.len());
    for &n in &points {
        let p = nodes.coord(n);
        let _ = writeln!(s, "{} {} {}", p[0] as f64 / unit, p[1] as f64 / unit, p[2] as f64 / unit);
    }
    let _ = writeln!(s, "CELLS {} {}", cells.len(), 9 * cells.len());
    for &l in &cells {
        let ln = nodes.leaf_nodes(l);
        s.push('8');
        for c in VTK_ORDER {
            let _ = write!(s, " {}", point_of[ln[c]]);
        }
        s.push('\n');
    }
    let _ = writeln!(s, "CELL_TYPES {}", cells.len());
    for _ in &cells {
        let _ = writeln!(s, "{VTK_HEXAHEDRON}");
    }
    let _ = writeln!(s, "POINT_DATA {}", points.len());
    s.push_str("SCALARS temperature float 1\nLOOKUP_TABLE default\n");
    for &n in &points {
        let _ = writeln!(s, "{}", state.temperatures()[n]);
    }
    let _ = writeln!(s, "CELL_DATA {}", cells.len());
    s.push_str("SCALARS level int 1\nLOOKUP_TABLE default\n");
    for &l in &cells {
        let _ = writeln!(s, "{}", mesh.leaves()[l].level());
    }
    s.push_str("SCALARS active int 1\nLOOKUP_TABLE default\n");
    for &l in &cells {
        let _ = writeln!(s, "{}", mesh.is_active(l) as u8);
    }
    s
}

pub fn write_vtk(mesh: &OctreeMesh, state: &ThermalState, path: &Path, include_inactive: bool) -> Result<(), IoError> {
    write_file(path, &vtk_string(mesh, state, include_inactive))
}

/// Parsed legacy VTK unstructured grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VtkData {
    pub title: String,
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub cell_types: Vec<u8>,
    pub point_scalars: BTreeMap<String, Vec<f64>>,
    pub cell_scalars: BTreeMap<String, Vec<f64>>,
}

/// Reads the subset of the legacy format produced by [`vtk_string`].
pub fn parse_vtk(text: &str) -> Result<VtkData, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    if !header.starts_with("# vtk DataFile") {
        return Err(format!("bad header {header:?}"));
    }
    let title = lines.next().ok_or("missing title")?.to_string();
    if lines.next().map(str::trim) != Some("ASCII") {
        return Err("only ASCII files are supported".into());
    }
    let mut tok = lines.flat_map(str::split_whitespace).peekable();
    let mut next = |what: &str| tok.next().ok_or_else(|| format!("unexpected end of file reading {what}"));
    let mut data = VtkData {
        title,
        ..VtkData::default()
    };
    fn num<T: std::str::FromStr>(s: &str) -> Result<T, String> {
        s.parse().map_err(|_| format!("bad number {s:?}"))
    }
    if next("DATASET")? != "DATASET" || next("type")? != "UNSTRUCTURED_GRID" {
        return Err("expected DATASET UNSTRUCTURED_GRID".into());
    }
    let mut section = "";
    let mut count = 0usize;
    loop {
        let Ok(word) = next("keyword") else { break };
        match word {
            "POINTS" => {
                let n: usize = num(next("point count")?)?;
                next("point type")?;
                for _ in 0..n {
                    let p = [num(next("x")?)?, num(next("y")?)?, num(next("z")?)?];
                    data.points.push(p);
                }
            }
            "CELLS" => {
                let n: usize = num(next("cell count")?)?;
                let _size: usize = num(next("cell size")?)?;
                for _ in 0..n {
                    let k: usize = num(next("cell arity")?)?;
                    let cell = (0..k).map(|_| num(next("cell index")?)).collect::<Result<Vec<usize>, _>>()?;
                    if let Some(bad) = cell.iter().find(|&&i| i >= data.points.len()) {
                        return Err(format!("cell index {bad} out of range"));
                    }
                    data.cells.push(cell);
                }
            }
            "CELL_TYPES" => {
                let n: usize = num(next("type count")?)?;
                for _ in 0..n {
                    data.cell_types.push(num(next("cell type")?)?);
                }
            }
            "POINT_DATA" | "CELL_DATA" => {
                section = if word == "POINT_DATA" { "point" } else { "cell" };
                count = num(next("data count")?)?;
            }
            "SCALARS" => {
                let name = next("scalar name")?.to_string();
                next("scalar type")?;
                let mut w = next("components or lookup")?;
                if w != "LOOKUP_TABLE" {
                    w = next("lookup")?;
                }
                if w != "LOOKUP_TABLE" {
                    return Err("expected LOOKUP_TABLE".into());
                }
                next("table name")?;
                let values = (0..count).map(|_| num(next("scalar")?)).collect::<Result<Vec<f64>, _>>()?;
                match section {
                    "point" => data.point_scalars.insert(name, values),
                    "cell" => data.cell_scalars.insert(name, values),
                    _ => return Err("SCALARS before POINT_DATA or CELL_DATA".into()),
                };
            }
            other => return Err(format!("unsupported keyword {other:?}")),
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{activate_voxel, BoundarySpec};
    use crate::schedule::{VoxelGrid, VoxelId};

    #[test]
    fn single_element() {
        let mut m = OctreeMesh::new(VoxelGrid::unit([2, 2, 2]).unwrap(), 0).unwrap();
        let v = VoxelId::new(1, 0, 0);
        m.refine(v).unwrap();
        m.classify(&[v]).unwrap();
        let bcs = BoundarySpec::default();
        let mut s = ThermalState::new(&m, &bcs);
        activate_voxel(&mut s, &m, v, &bcs).unwrap();
        let d = parse_vtk(&vtk_string(&m, &s, false)).unwrap();
        assert_eq!(d.points.len(), 8);
        assert_eq!(d.cells, vec![vec![0, 1, 3, 2, 4, 5, 7, 6]]);
        assert_eq!(d.cell_types, vec![12]);
        assert_eq!(d.points[0], [0.5, 0.0, 0.0]);
        assert_eq!(d.points[7], [1.0, 0.5, 0.5]);
        assert_eq!(d.point_scalars["temperature"], vec![2.0; 8]);
        assert_eq!(d.cell_scalars["level"], vec![1.0]);
        assert_eq!(d.cell_scalars["active"], vec![1.0]);

        let all = parse_vtk(&vtk_string(&m, &s, true)).unwrap();
        assert_eq!(all.cells.len(), 8);
        assert_eq!(all.points.len(), 27);
        assert_eq!(all.cell_scalars["active"].iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn empty_mesh_is_valid() {
        let m = OctreeMesh::new(VoxelGrid::unit([4, 4, 4]).unwrap(), 1).unwrap();
        let s = ThermalState::new(&m, &BoundarySpec::default());
        let text = vtk_string(&m, &s, false);
        let d = parse_vtk(&text).unwrap();
        assert!(d.points.is_empty() && d.cells.is_empty());
        assert!(text.contains("CELLS 0 0\n"));
    }

    #[test]
    fn reader_rejects_garbage() {
        assert!(parse_vtk("hello").is_err());
        assert!(parse_vtk("# vtk DataFile Version 3.0\nx\nBINARY\n").is_err());
    }
}
