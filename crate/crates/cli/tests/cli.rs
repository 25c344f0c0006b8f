use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sbsde(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbsde"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn list_shows_five_builtins() {
    let dir = tempfile::tempdir().unwrap();
    let o = sbsde(&["list"], dir.path());
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    for name in ["affine_plus", "affine_minus_family", "ek_red", "ode_trichotomy", "nonlinear_exp"] {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn list_csv_is_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let o = sbsde(&["list", "--format", "csv"], dir.path());
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "name,claim,defaults");
    assert_eq!(lines.len(), 6);
}

#[test]
fn list_unknown_format_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&sbsde(&["list", "--format", "xml"], dir.path())), 1);
}

#[test]
fn affine_plus_nonzero_terminal_is_expected_nonexistence() {
    let dir = tempfile::tempdir().unwrap();
    let o = sbsde(&["run", "affine_plus", "--terminal", "1", "--out", "o"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("o");
    assert!(out.join("certificate.csv").exists());
    assert!(!out.join("solution.csv").exists());
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("outcome: no_solution (expected)"));
    assert!(report.contains("monotone_divergent: true"));
}

#[test]
fn ode_trichotomy_reports_limit_and_members() {
    let dir = tempfile::tempdir().unwrap();
    let o = sbsde(&["run", "ode_trichotomy", "--c", "2", "--out", "o"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("o");
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("classification: ConvergesTo(2.000000000)"), "{report}");
    let header = fs::read_to_string(out.join("solution.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap(), "t,Y_0,Y_1");
}

#[test]
fn ode_terminal_mismatch_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = sbsde(
        &["run", "ode_trichotomy", "--phi", "constant", "--phi_value", "1", "--c", "2", "--out", "o"],
        dir.path(),
    );
    assert_eq!(code(&o), 3);
    let report = fs::read_to_string(dir.path().join("o/report.txt")).unwrap();
    assert!(report.contains("ConvergesTo(0.0000000"), "{report}");
}

#[test]
fn nonlinear_exp_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = sbsde(&["run", "nonlinear_exp", "--alpha", "1", "--out", "o"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("o");
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("monotone_violation: 0.000000000000e0"));
    assert!(report.contains("bounds_ok: true"));
    assert!(report.contains("[config]") && report.contains("alpha = 1.0"));
    let scheme = fs::read_to_string(out.join("scheme.csv")).unwrap();
    assert_eq!(scheme.lines().count(), 9);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["outcome"], "solved");
    assert_eq!(summary["exit_code"], 0);
}

#[test]
fn unconverged_scheme_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = sbsde(&["run", "nonlinear_exp", "--schedule", "2,4", "--out", "o"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn malformed_config_names_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[grid]\nn = 101\nlambda_maximum = 4.0\n").unwrap();
    let o = sbsde(&["run", "affine_plus", "--config", "bad.toml"], dir.path());
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("line 3") && err.contains("lambda_maximum"), "{err}");
}

#[test]
fn config_file_and_overrides_layer() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "scenario = \"affine_minus_family\"\noutput_dir = \"from_file\"\n[family]\ny0 = [0.0, 2.0]\n",
    )
    .unwrap();
    let o = sbsde(&["run", "affine_minus_family", "--config", "run.toml", "--n", "201"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("from_file/solution.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,Y_0,Y_1");
    assert_eq!(csv.lines().count(), 203);
}

#[test]
fn scenario_mismatch_in_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "scenario = \"ek_red\"\n").unwrap();
    let o = sbsde(&["run", "affine_plus", "--config", "run.toml"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn bad_override_and_unknown_scenario_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&sbsde(&["run", "affine_plus", "--n", "many"], dir.path())), 1);
    assert_eq!(code(&sbsde(&["run", "affine_plus", "--threads", "0"], dir.path())), 1);
    assert_eq!(code(&sbsde(&["run", "no_such"], dir.path())), 1);
    assert_eq!(code(&sbsde(&["run", "affine_plus", "dangling"], dir.path())), 1);
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str, threads: &'static str| {
        vec![
            "run", "affine_plus", "--phi", "sin_w", "--paths", "4000", "--n", "65", "--lambda_max", "5", "--seed", "3", "--threads", threads,
            "--out", out,
        ]
    };
    assert_eq!(code(&sbsde(&args("a", "1"), dir.path())), 0);
    assert_eq!(code(&sbsde(&args("b", "3"), dir.path())), 0);
    let a = fs::read(dir.path().join("a/solution.csv")).unwrap();
    let b = fs::read(dir.path().join("b/solution.csv")).unwrap();
    assert_eq!(a, b);
}
