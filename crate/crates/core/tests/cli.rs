use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use voxtherm::schedule::VoxelSchedule;

fn voxtherm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voxtherm")).args(args).output().unwrap()
}

fn piped(args: &[&str], input: &[u8]) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_voxtherm"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_then_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("block.txt");
    let out = dir.path().join("out");
    ok(&voxtherm(&["gen", "--shape", "cuboid", "--dims", "4", "4", "2", "-o", p(&sched)]));
    let summary = ok(&voxtherm(&["simulate", "--schedule", p(&sched), "-o", p(&out)]));
    assert!(summary.contains("printed 32 voxels"), "{summary}");
    for label in ["030", "060", "100"] {
        assert!(out.join(format!("snapshot_{label}.vtk")).is_file());
    }
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 34);
    assert!(report.lines().last().unwrap().starts_with("# geometry=block,resolution=4x4x2,print_voxels=32,"));
}

#[test]
fn simulate_with_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("s.txt");
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[schedule]\nsteps_per_voxel = 1\n\n[output]\nsnapshot_fractions = [0.5]\nsnapshot_every = 2\n").unwrap();
    ok(&voxtherm(&["gen", "--shape", "cuboid", "--dims", "2", "2", "1", "-o", p(&sched)]));
    let out = dir.path().join("out");
    ok(&voxtherm(&["simulate", "--config", p(&cfg), "--schedule", p(&sched), "-o", p(&out), "--geometry", "tiny"]));
    let mut names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["report.csv", "snapshot_050.vtk", "snapshot_v000002.vtk", "snapshot_v000004.vtk"]);
}

#[test]
fn bad_config_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("s.txt");
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[solver]\ntolerence = 1e-9\n").unwrap();
    ok(&voxtherm(&["gen", "--shape", "cuboid", "--dims", "1", "1", "1", "-o", p(&sched)]));
    let out = voxtherm(&["simulate", "--config", p(&cfg), "--schedule", p(&sched), "-o", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tolerence"));
}

#[test]
fn missing_schedule_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    let out = voxtherm(&["simulate", "--schedule", p(&missing), "-o", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:") && err.contains("nope.txt"), "{err}");
}

#[test]
fn gcode_round_trip_through_stdin() {
    let gcode = ok(&voxtherm(&["gen", "--shape", "cuboid", "--dims", "4", "4", "2", "--emit", "gcode"]));
    let text = ok(&piped(&["voxelize", "-"], gcode.as_bytes()));
    let s = VoxelSchedule::from_text(&text).unwrap();
    assert_eq!(s.len(), 32);
    assert_eq!(s.grid().dims, [4, 4, 2]);
    let direct = ok(&voxtherm(&["gen", "--shape", "cuboid", "--dims", "4", "4", "2"]));
    assert_eq!(text, direct);
}

#[test]
fn voxelize_with_explicit_grid() {
    let gcode = "G21\nG90\nM82\nG1 Z0.5 F600\nG1 X0.5 Y0.5\nG1 X3.5 Y0.5 E1\n";
    let text = ok(&piped(&["voxelize", "-", "--dims", "4", "2", "2", "--voxel-size", "1"], gcode.as_bytes()));
    let s = VoxelSchedule::from_text(&text).unwrap();
    let ids: Vec<[u32; 3]> = s.order().iter().map(|v| v.as_array()).collect();
    assert_eq!(ids, [[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]]);
}

#[test]
fn sparse_gen_and_mesh_info() {
    let dir = tempfile::tempdir().unwrap();
    let dense = dir.path().join("dense.txt");
    let sparse = dir.path().join("sparse.txt");
    ok(&voxtherm(&["gen", "--shape", "cuboid", "--dims", "8", "8", "8", "-o", p(&dense)]));
    ok(&voxtherm(&["gen", "--shape", "cuboid", "--dims", "8", "8", "8", "--skip", "3", "-o", p(&sparse)]));
    let info = |f: &Path| {
        let out = ok(&voxtherm(&["mesh-info", p(f)]));
        let v = out.lines().find_map(|l| l.strip_prefix("voxels ")).unwrap().parse::<usize>().unwrap();
        (v, out)
    };
    let (nd, text) = info(&dense);
    let (ns, _) = info(&sparse);
    assert_eq!(nd, 512);
    assert!(ns < nd);
    assert!(text.contains("active 512"));
    let dump = ok(&voxtherm(&["mesh-info", p(&dense), "--base-level", "1", "--dump"]));
    assert!(dump.lines().count() > 11);
}

#[test]
fn help_for_every_subcommand() {
    for sub in ["voxelize", "simulate", "gen", "mesh-info"] {
        let out = ok(&voxtherm(&[sub, "--help"]));
        assert!(out.contains("Usage"), "{sub}");
    }
    ok(&voxtherm(&["--version"]));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(voxtherm(&[]).status.code(), Some(2));
    assert_eq!(voxtherm(&["gen", "--shape", "torus"]).status.code(), Some(2));
    assert_eq!(voxtherm(&["gen", "--shape", "cuboid"]).status.code(), Some(1));
}
