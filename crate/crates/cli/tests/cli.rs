use std::process::{Command, Output};

fn perifrax(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perifrax"))
        .args(args)
        .env_remove("PERIFRAX_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SMALL: &str = r#"
name = "tiny"
[mesh]
nx = 10
ny = 10
lx = 0.1
ly = 0.1
[time]
dt = 0.01
steps = 4
[thermal]
density = 1.0
specific_heat = 1.0
conductivity = 1.0
[[thermal.dirichlet]]
boundary = "top"
value = 1.0
[mechanics]
youngs_modulus = 1.0
poissons_ratio = 0.25
thermal_expansion = 0.01
plane = "plane_strain"
[[mechanics.displacement]]
boundary = "bottom"
component = "y"
value = 0.0
[[mechanics.displacement]]
boundary = "left"
component = "x"
value = 0.0
[peridynamics]
horizon_ratio = 3.0
[output]
frame_every = 2
[[output.probes]]
name = "top_uy"
point = [0.05, 0.1]
field = "u_y"
"#;

#[test]
fn validate_shipped_scenario() {
    let o = perifrax(&["validate", "timoshenko_plate"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("τ0 = "), "{text}");
    assert!(text.contains("10201 nodes"));
}

#[test]
fn scenarios_are_listed() {
    let o = perifrax(&["scenarios"]);
    assert!(o.status.success());
    let names: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(names.len(), 10);
    assert!(names.iter().any(|n| n == "cruciform"));
}

#[test]
fn sweep_angle_table() {
    let o = perifrax(&["sweep-angle"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(text.lines().next(), Some("angle_deg,d1,d2,d"));
    assert_eq!(rows.len(), 19);
    assert_eq!(rows[0][0], "0");
    assert_eq!(rows[18][0], "90");
    assert_eq!(rows[18][1], rows[0][2]);
    assert_eq!(rows[0][1], rows[18][2]);
}

#[test]
fn oracle_series_reaches_steady_state() {
    let o = perifrax(&["oracle-series", "--times", "20", "--heights", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((row[2] - 1.0).abs() < 1e-12);
    assert!((row[3] - 0.016 * 5.0 / 3.0).abs() < 1e-9);
}

#[test]
fn run_writes_outputs_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("out");
    let o = perifrax(&["run", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["tiny_000000.vtk", "tiny_000002.vtk", "tiny_000004.vtk", "probes.csv", "history.csv", "state.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let probes = std::fs::read_to_string(out.join("probes.csv")).unwrap();
    assert_eq!(probes.lines().count(), 6);
    assert!(probes.starts_with("step,time,top_uy\n"));

    // resume from the final state of a shorter run and compare the end state
    let short = dir.path().join("short");
    let o = perifrax(&["run", cfg.to_str().unwrap(), "-o", short.to_str().unwrap(), "--steps", "2"]);
    assert!(o.status.success());
    let resumed = dir.path().join("resumed");
    let state = short.join("state.json");
    let o = perifrax(&[
        "run",
        cfg.to_str().unwrap(),
        "-o",
        resumed.to_str().unwrap(),
        "--resume",
        state.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = std::fs::read_to_string(out.join("tiny_000004.vtk")).unwrap();
    let b = std::fs::read_to_string(resumed.join("tiny_000004.vtk")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn missing_config_exits_with_one() {
    let o = perifrax(&["run", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("neither a file nor a shipped scenario"));
}

#[test]
fn bad_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, SMALL.replace("nx = 10", "nx = 10\nnz = 3")).unwrap();
    let o = perifrax(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("nz") && err.contains("line"), "{err}");
}

#[test]
fn bad_thread_count_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_perifrax"))
        .arg("scenarios")
        .env("PERIFRAX_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
