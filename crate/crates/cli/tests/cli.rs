use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nonholo_cli::{EXIT_INPUT, EXIT_PASS, EXIT_TOLERANCE};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn nonholo(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonholo"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn run(name: &str, out: &Path) -> Output {
    nonholo(&["run", scenario(name).to_str().unwrap()], out)
}

#[test]
fn integrate_csv_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run("free_particle_integrate.toml", &a).status.code(), Some(EXIT_PASS));
    assert_eq!(run("free_particle_integrate.toml", &b).status.code(), Some(EXIT_PASS));
    let csv_a = std::fs::read(a.join("trajectory.csv")).unwrap();
    let csv_b = std::fs::read(b.join("trajectory.csv")).unwrap();
    assert!(!csv_a.is_empty());
    assert_eq!(csv_a, csv_b);
}

#[test]
fn integrate_csv_final_row_matches_closed_form_flow() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("free_particle_integrate.toml", dir.path()).status.code(), Some(EXIT_PASS));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,x_1,x_2,x_3,y_1,y_2,E,f_1,f_2");
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 2.0);
    // x1 = asinh(2), x2 = 2, x3 = √5 − 1
    let exact = [2.0f64.asinh(), 2.0, 5.0f64.sqrt() - 1.0];
    for (got, want) in last[1..4].iter().zip(exact) {
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
    assert_eq!(csv.lines().count(), 2002);
}

#[test]
fn restricted_complete_solution_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("free_particle_restricted.toml", dir.path());
    assert_eq!(out.status.code(), Some(EXIT_PASS));
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    for line in ["PASS: restricted:", "PASS: involution:", "PASS: conservation drift:"] {
        assert!(report.contains(line), "missing {line:?} in\n{report}");
    }
    assert_eq!(String::from_utf8(out.stdout).unwrap(), report);
}

#[test]
fn general_complete_solution_reports_involution_as_advisory() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("free_particle_general.toml", dir.path()).status.code(), Some(EXIT_PASS));
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("INFO: involution (advisory):"));
    assert!(report.contains("INFO: restricted:"));
    assert!(report.contains("PASS: general:"));
}

#[test]
fn non_solution_section_exits_with_tolerance_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("section_constant.toml", dir.path());
    assert_eq!(out.status.code(), Some(EXIT_TOLERANCE));
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("FAIL: general residual:"));
    assert!(report.contains("FAIL: flow deviation:"));
}

#[test]
fn tolerance_flag_overrides_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = nonholo(
        &["run", scenario("section_constant.toml").to_str().unwrap(), "--tolerance", "10"],
        dir.path(),
    );
    // the general residual now passes; the flow check keeps its own bound
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("PASS: general residual:"));
    assert_eq!(out.status.code(), Some(EXIT_TOLERANCE));
}

#[test]
fn unknown_system_is_an_input_error_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(scenario("free_particle_integrate.toml"))
        .unwrap()
        .replace("free-particle-nonholonomic", "pendulum");
    std::fs::write(&file, text).unwrap();
    let out_dir = dir.path().join("out");
    let out = nonholo(&["run", file.to_str().unwrap()], &out_dir);
    assert_eq!(out.status.code(), Some(EXIT_INPUT));
    assert!(String::from_utf8(out.stderr).unwrap().contains("unknown system"));
    assert!(!out_dir.exists());
}

#[test]
fn malformed_scenario_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    std::fs::write(&file, "system = [\n").unwrap();
    let out = nonholo(&["run", file.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(EXIT_INPUT));
    let missing = nonholo(&["run", "/nonexistent/scenario.toml"], &dir.path().join("out"));
    assert_eq!(missing.status.code(), Some(EXIT_INPUT));
}

#[test]
fn geometry_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = nonholo(&["geometry", "free-particle-nonholonomic", "--counts", "3,3,3"], dir.path());
    assert_eq!(out.status.code(), Some(EXIT_PASS));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("regular everywhere; bracket-generating rank 3 everywhere"));
    assert_eq!(text.matches("INFO: x = ").count(), 27);
    assert!(dir.path().join("geometry-free-particle-nonholonomic.txt").exists());

    let holo = nonholo(&["geometry", "holonomic-plane", "--random", "10", "--seed", "1"], dir.path());
    assert!(String::from_utf8(holo.stdout).unwrap().contains("rank 2 everywhere; C^A ≡ 0 (holonomic)"));

    let degenerate = nonholo(&["geometry", "degenerate-plane", "--counts", "2,2"], dir.path());
    let text = String::from_utf8(degenerate.stdout).unwrap();
    assert_eq!(text.matches("degenerate, min |eig G|").count(), 4);
    assert_eq!(degenerate.status.code(), Some(EXIT_PASS));

    let unknown = nonholo(&["geometry", "pendulum"], dir.path());
    assert_eq!(unknown.status.code(), Some(EXIT_INPUT));
    let random_without_seed = nonholo(&["geometry", "holonomic-plane", "--random", "3"], dir.path());
    assert_eq!(random_without_seed.status.code(), Some(EXIT_INPUT));
}

#[test]
fn geometry_scenarios_pass() {
    let dir = tempfile::tempdir().unwrap();
    for name in [
        "geometry_free_particle_nonholonomic.toml",
        "geometry_holonomic_plane.toml",
        "geometry_degenerate_plane.toml",
        "section_sqrt_family.toml",
    ] {
        assert_eq!(run(name, &dir.path().join(name)).status.code(), Some(EXIT_PASS), "{name}");
    }
}
