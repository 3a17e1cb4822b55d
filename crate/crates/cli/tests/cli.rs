use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rlmpc::config::DEFAULT_PLANT_TOML;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rlmpc"))
}

fn plant(dir: &TempDir) -> PathBuf {
    let path = dir.path().join("plant.toml");
    std::fs::write(&path, DEFAULT_PLANT_TOML).unwrap();
    path
}

fn exec(args: &[&str], plant: &Path) -> Output {
    bin().args(args).arg("--plant").arg(plant).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json_field(text: &str, key: &str) -> f64 {
    let v: serde_json::Value = serde_json::from_str(text).unwrap();
    v[key]
        .as_f64()
        .unwrap_or_else(|| panic!("{key} missing in {text}"))
}

#[test]
fn riccati_prints_ladder_and_writes_csv() {
    let dir = TempDir::new().unwrap();
    let p = plant(&dir);
    let out = dir.path().join("out");
    let o = exec(
        &["riccati", "--horizon", "3", "--out", out.to_str().unwrap()],
        &p,
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("5.1099947439"));
    let csv = std::fs::read_to_string(out.join("riccati.csv")).unwrap();
    let p22: f64 = csv
        .lines()
        .find(|l| l.starts_with("3,1,1,"))
        .unwrap()
        .rsplit(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((p22 - 5.109994744).abs() < 1e-6);
    assert!(csv.lines().any(|l| l == "1,0,0,1.0000000000000000e0"));
    assert!(csv.contains("2,0,1,5.5000000000000"));
}

#[test]
fn spliced_run_reports_reference_alpha() {
    let dir = TempDir::new().unwrap();
    let p = plant(&dir);
    let args = [
        "run",
        "--variant",
        "alg2",
        "--horizon",
        "3",
        "--alpha-bar",
        "0.5",
        "--x0",
        "0,1",
        "--convention",
        "published",
        "--no-timestamp",
    ];
    let o = exec(&args, &p);
    let text = stdout(&o);
    assert!((json_field(&text, "alpha_first_block") - 0.5136).abs() < 5e-5);
}

#[test]
fn origin_converges_immediately() {
    let dir = TempDir::new().unwrap();
    let p = plant(&dir);
    let out = dir.path().join("o");
    let args = [
        "run",
        "--variant",
        "alg1",
        "--horizon",
        "3",
        "--alpha-bar",
        "0.5",
        "--x0",
        "0,0",
        "--out",
        out.to_str().unwrap(),
        "--no-timestamp",
    ];
    let o = exec(&args, &p);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("certificates.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    let summary = std::fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("\"status\": \"converged\""));
    assert!(!summary.contains("timestamp"));
}

#[test]
fn watchdog_warns_at_a_failing_point() {
    let dir = TempDir::new().unwrap();
    let p = plant(&dir);
    // k = 24 on the 128-point circle fails selection at the first iterate
    let t = 2.0 * std::f64::consts::PI * 24.0 / 128.0;
    let x0 = format!("{},{}", t.cos(), t.sin());
    let args = [
        "run",
        "--variant",
        "alg3",
        "--horizon",
        "3",
        "--alpha-bar",
        "0.01",
        "--x0",
        &x0,
        "--no-timestamp",
    ];
    let o = exec(&args, &p);
    assert_eq!(o.status.code(), Some(4));
    assert!(json_field(&stdout(&o), "warning_count") >= 1.0);
}

#[test]
fn outputs_are_byte_identical_without_timestamp() {
    let dir = TempDir::new().unwrap();
    let p = plant(&dir);
    let mut files = Vec::new();
    for (name, workers) in [("a", "1"), ("b", "3")] {
        let out = dir.path().join(name);
        let args = [
            "sweep",
            "--variant",
            "alg4",
            "--horizon",
            "3",
            "--alpha-bar",
            "0.01",
            "--set",
            "unit-circle:32",
            "--workers",
            workers,
            "--no-timestamp",
            "--out",
            out.to_str().unwrap(),
        ];
        assert_eq!(exec(&args, &p).status.code(), Some(0));
        files.push((
            std::fs::read(out.join("sweep_points.csv")).unwrap(),
            std::fs::read(out.join("sweep_summary.json")).unwrap(),
        ));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn small_circle_gives_four_rows() {
    let dir = TempDir::new().unwrap();
    let p = plant(&dir);
    let out = dir.path().join("o");
    let args = [
        "sweep",
        "--variant",
        "alg1",
        "--horizon",
        "3",
        "--alpha-bar",
        "0.0",
        "--set",
        "unit-circle:4",
        "--out",
        out.to_str().unwrap(),
    ];
    assert_eq!(exec(&args, &p).status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("sweep_points.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "k,x1,x2,alpha_min_1step,alpha_min_mstep,alpha_cor3,warning,status"
    );
    assert_eq!(lines.count(), 4);
}

#[test]
fn horizon_table_has_one_row_per_horizon() {
    let dir = TempDir::new().unwrap();
    let p = plant(&dir);
    let args = [
        "horizon-table",
        "--alpha-bar",
        "0.01",
        "--control-horizon",
        "1",
        "--set",
        "unit-circle:16",
        "--horizons",
        "3,4,5",
    ];
    let o = exec(&args, &p);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "N,alpha_prop1_min,alpha_cor3_min");
    assert_eq!(rows.len(), 4);
    assert!(rows[3].starts_with("5,"));
}

#[test]
fn config_file_supplies_run_parameters() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    let text = format!(
        "{DEFAULT_PLANT_TOML}\n[run]\nvariant = \"alg2\"\nhorizon = 3\nalpha_bar = 0.5\nx0 = [1.0, 0.0]\nconvention = \"published\"\n"
    );
    std::fs::write(&cfg, text).unwrap();
    let o = bin()
        .args(["run", "--no-timestamp", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!((json_field(&stdout(&o), "alpha_first_block") - 0.7733).abs() < 5e-5);
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let dir = TempDir::new().unwrap();
    let p = plant(&dir);
    let cases: [&[&str]; 5] = [
        &[
            "sweep",
            "--horizon",
            "3",
            "--alpha-bar",
            "0.1",
            "--set",
            "unit-circle:0",
        ],
        &["run", "--horizon", "3", "--x0", "0,1"],
        &["run", "--horizon", "1", "--alpha-bar", "0.1", "--x0", "0,1"],
        &[
            "run",
            "--horizon",
            "3",
            "--alpha-bar",
            "0.1",
            "--x0",
            "0,1,2",
        ],
        &[
            "run",
            "--variant",
            "alg7",
            "--horizon",
            "3",
            "--alpha-bar",
            "0.1",
            "--x0",
            "0,1",
        ],
    ];
    for args in cases {
        let o = exec(args, &p);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[plant]\nstate_dim = 2\ncontrol_dim =\n").unwrap();
    let o = exec(&["riccati", "--horizon", "2"], &bad);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn missing_plant_is_a_config_error() {
    let o = bin().args(["riccati", "--horizon", "2"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reproduction_reports_every_check_and_writes_data() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("repro");
    let o = bin()
        .args(["reproduce-paper", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    let text = stdout(&o);
    let verdicts: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("PASS ") || l.starts_with("FAIL "))
        .collect();
    assert_eq!(verdicts.len(), 7, "{text}");
    assert!(text.contains("PASS riccati-values"));
    assert!(text.contains("PASS two-step-splice-values"));
    let all_pass = verdicts.iter().all(|l| l.starts_with("PASS"));
    assert_eq!(o.status.code(), Some(if all_pass { 0 } else { 4 }));
    for f in [
        "alpha_map_N3.csv",
        "alpha_map_N4.csv",
        "horizon_table.csv",
        "decrease_N3_m1.csv",
        "decrease_N3_m2.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let surface = std::fs::read_to_string(out.join("decrease_N3_m2.csv")).unwrap();
    assert_eq!(surface.lines().count(), 101 * 101 + 1);
}
