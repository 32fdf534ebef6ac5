//! End-to-end checks of the command-line surface.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use etdm_core::model::{Branch, Scenario};
use tempfile::TempDir;

fn etdm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_etdm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn generate(dir: &Path, name: &str, extra: &[&str]) -> std::path::PathBuf {
    let path = dir.join(name);
    let mut args = vec!["generate", "--out", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = etdm(&args);
    assert!(out.status.success(), "generate failed: {}", stderr(&out));
    path
}

fn load(path: &Path) -> Scenario {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_defaults_mirror_the_standard_setup() {
    let dir = TempDir::new().unwrap();
    let scenario = load(&generate(dir.path(), "s.json", &["--seed", "3"]));
    assert_eq!(scenario.rsus.len(), 60);
    assert_eq!(scenario.vehicles.len(), 251);
    assert_eq!(scenario.seed, 3);
    let count = |b: Branch| scenario.vehicles.iter().filter(|v| v.branch == b).count();
    assert_eq!((count(Branch::A), count(Branch::B), count(Branch::C)), (95, 94, 62));
}

#[test]
fn generate_splits_small_fleets_proportionally() {
    let dir = TempDir::new().unwrap();
    let scenario = load(&generate(dir.path(), "s.json", &["--vehicles", "50"]));
    let count = |b: Branch| scenario.vehicles.iter().filter(|v| v.branch == b).count();
    assert_eq!((count(Branch::A), count(Branch::B), count(Branch::C)), (19, 19, 12));
}

#[test]
fn generate_rejects_offsets_outside_coverage() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("s.json");
    let out = etdm(&[
        "generate",
        "--lane-offset-m",
        "20",
        "150",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("coverage"), "stderr: {}", stderr(&out));
}

#[test]
fn run_emits_one_labelled_report_row() {
    let dir = TempDir::new().unwrap();
    let scenario = generate(dir.path(), "s.json", &["--vehicles", "20", "--rsus", "30"]);
    for algorithm in ["etdm", "oa", "pta:0.7"] {
        let out = etdm(&["run", scenario.to_str().unwrap(), algorithm]);
        assert!(out.status.success(), "{algorithm}: {}", stderr(&out));
        let text = stdout(&out);
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("algorithm,seed,vehicles"));
        let row = lines.next().unwrap();
        assert!(row.starts_with(&format!("{algorithm},")), "row: {row}");
        assert_eq!(lines.next(), None);
    }
}

#[test]
fn run_rejects_out_of_range_pta_probability() {
    let dir = TempDir::new().unwrap();
    let scenario = generate(dir.path(), "s.json", &["--vehicles", "5"]);
    let out = etdm(&["run", scenario.to_str().unwrap(), "pta:1.5"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("out of [0, 1]"), "stderr: {}", stderr(&out));
}

#[test]
fn run_appends_rows_and_writes_details() {
    let dir = TempDir::new().unwrap();
    let scenario = generate(dir.path(), "s.json", &["--vehicles", "10", "--rsus", "30"]);
    let report = dir.path().join("report.csv");
    let detail = dir.path().join("detail.csv");
    for algorithm in ["etdm", "oa"] {
        let out = etdm(&[
            "run",
            scenario.to_str().unwrap(),
            algorithm,
            "--out",
            report.to_str().unwrap(),
            "--detail",
            detail.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let report = fs::read_to_string(&report).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines.len(), 3, "header plus one row per run: {report}");
    assert!(lines[1].starts_with("etdm,"));
    assert!(lines[2].starts_with("oa,"));

    let detail = fs::read_to_string(&detail).unwrap();
    assert_eq!(detail.lines().count(), 11, "header plus one row per vehicle");
    assert!(detail.starts_with("vehicle_id,completed,"));
}

#[test]
fn single_point_sweep_has_one_row_per_algorithm() {
    let dir = TempDir::new().unwrap();
    let scenario = generate(dir.path(), "s.json", &["--vehicles", "10", "--rsus", "30"]);
    let out = etdm(&[
        "sweep-volume",
        scenario.to_str().unwrap(),
        "--from-gb",
        "150",
        "--to-gb",
        "150",
        "--algorithms",
        "etdm,oa,pta:0.5",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 4, "header + 3 rows: {text}");
    for row in text.lines().skip(1) {
        let demand: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(demand, 150_000.0);
    }
}

#[test]
fn sweep_volume_rejects_an_empty_demand_range() {
    let dir = TempDir::new().unwrap();
    let scenario = generate(dir.path(), "s.json", &["--vehicles", "5"]);
    let out = etdm(&[
        "sweep-volume",
        scenario.to_str().unwrap(),
        "--from-gb",
        "300",
        "--to-gb",
        "140",
        "--algorithms",
        "etdm",
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("invalid demand sweep"));
}

#[test]
fn traffic_sweep_covers_the_requested_counts() {
    let dir = TempDir::new().unwrap();
    let scenario = generate(dir.path(), "s.json", &["--vehicles", "40", "--rsus", "30"]);
    let out = etdm(&[
        "sweep-traffic",
        scenario.to_str().unwrap(),
        "--from",
        "10",
        "--to",
        "40",
        "--step",
        "10",
        "--algorithms",
        "etdm,oa",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1 + 4 * 2, "4 counts x 2 algorithms: {text}");
    let vehicles: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|row| row.split(',').nth(2).unwrap())
        .collect();
    assert_eq!(vehicles, ["10", "10", "20", "20", "30", "30", "40", "40"]);
}

#[test]
fn single_vehicle_traffic_sweep_works() {
    let dir = TempDir::new().unwrap();
    let scenario = generate(dir.path(), "s.json", &["--vehicles", "10", "--rsus", "30"]);
    let out = etdm(&[
        "sweep-traffic",
        scenario.to_str().unwrap(),
        "--from",
        "1",
        "--to",
        "1",
        "--step",
        "1",
        "--algorithms",
        "etdm",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().count(), 2);
}

#[test]
fn feasibility_reports_the_worked_example() {
    let out = etdm(&[
        "feasibility",
        "--range-m",
        "100",
        "--offset-m",
        "60",
        "--v1",
        "20",
        "--v2",
        "20",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("contact_time_opposite_s=4"), "{text}");
    assert!(text.contains("contact_time_same_direction_s=infinite"), "{text}");
}

#[test]
fn feasibility_requires_its_flags() {
    let out = etdm(&["feasibility", "--range-m", "100"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("--offset-m"), "stderr: {err}");
}
