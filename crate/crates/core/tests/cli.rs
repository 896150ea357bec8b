use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ddpp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddpp"))
        .args(args)
        .env_remove("DDPP_SEED")
        .output()
        .expect("binary runs")
}

fn data(rel: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(rel)
        .display()
        .to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn field<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines()
        .find_map(|l| l.strip_prefix(key)?.strip_prefix(':'))
        .map(str::trim)
}

fn write_tiny(dir: &Path) -> String {
    let path = dir.join("tiny.inst");
    std::fs::write(
        &path,
        r#"{"label": "tiny", "m": 2, "B": 5.0, "costs": [2.0, 3.0], "intervals": [[8, 9], [10, 11]]}"#,
    )
    .unwrap();
    path.display().to_string()
}

fn variable_count(build_stdout: &str) -> usize {
    let model: serde_json::Value = serde_json::from_str(build_stdout).unwrap();
    model["variables"].as_array().unwrap().len()
}

#[test]
fn gen_is_deterministic_per_seed() {
    let args = ["--seed", "9", "gen", "--m", "4", "--N", "6", "--B", "30"];
    let a = ddpp(&args);
    let b = ddpp(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let c = ddpp(&["--seed", "10", "gen", "--m", "4", "--N", "6", "--B", "30"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn seed_can_come_from_the_environment() {
    let via_flag = ddpp(&["--seed", "5", "gen", "--m", "2", "--N", "3", "--B", "10"]);
    let via_env = Command::new(env!("CARGO_BIN_EXE_ddpp"))
        .args(["gen", "--m", "2", "--N", "3", "--B", "10"])
        .env("DDPP_SEED", "5")
        .output()
        .unwrap();
    assert_eq!(via_flag.stdout, via_env.stdout);
}

#[test]
fn usage_errors_exit_1() {
    let missing = ddpp(&["gen", "--m", "3", "--N", "5"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).contains("--B"));
    let bad = ddpp(&["build", &data("table7/n4.inst"), "--formulation", "3"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn invalid_instance_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.inst");
    std::fs::write(&path, r#"{"m": 2, "B": 5.0, "costs": [5.0], "intervals": [[8, 9]]}"#).unwrap();
    let out = ddpp(&["solve", "--solver", "exact", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let missing = ddpp(&["verify", "/nonexistent/x.inst"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn build_counts_variables() {
    let inst = data("table1/inst01.inst");
    let per_drone = ddpp(&["--slack-mode", "per-drone", "build", &inst]);
    assert_eq!(per_drone.status.code(), Some(0), "{}", stderr(&per_drone));
    assert_eq!(variable_count(&stdout(&per_drone)), 180);
    assert!(stderr(&per_drone).contains("# slack-mode: per-drone"));

    let q1 = ddpp(&["build", &inst, "--formulation", "1"]);
    let q2 = ddpp(&["build", &inst, "--formulation", "2"]);
    assert!(variable_count(&stdout(&q1)) > variable_count(&stdout(&q2)));
}

#[test]
fn build_writes_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("model.json");
    let status = ddpp(&["build", &data("table7/n4.inst"), "--out", out.to_str().unwrap()]);
    assert_eq!(status.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(variable_count(&text), 110);
}

#[test]
fn exact_solve_reports_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("exact.json");
    let out = ddpp(&[
        "solve",
        "--solver",
        "exact",
        &data("table7/n4.inst"),
        "--out",
        json.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(field(&text, "min_drones"), Some("3"));
    assert_eq!(field(&text, "min_h0"), Some("10"));
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(saved["min_h0"], 10.0);
    assert_eq!(saved["convention"], "open");
}

#[test]
fn sa_solve_prints_decoded_summary() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_tiny(dir.path());
    let samples = dir.path().join("samples.csv");
    let args = [
        "--reads",
        "20",
        "--sweeps",
        "100",
        "solve",
        &inst,
        "--out",
        samples.to_str().unwrap(),
    ];
    let out = ddpp(&args);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(field(&text, "triplet").is_some());
    assert!(field(&text, "drones").is_some());
    let rows = std::fs::read_to_string(&samples).unwrap();
    assert_eq!(rows.lines().filter(|l| !l.starts_with('#')).count(), 21);
    assert_eq!(ddpp(&args).stdout, out.stdout);
}

#[test]
fn brute_force_solves_small_models_and_refuses_large_ones() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_tiny(dir.path());
    let small = ddpp(&["solve", "--solver", "brute", &inst]);
    assert_eq!(small.status.code(), Some(0), "{}", stderr(&small));
    assert_eq!(field(&stdout(&small), "triplet"), Some("[1 1 1]"));

    let large = ddpp(&["solve", "--solver", "brute", &data("table7/n4.inst")]);
    assert_eq!(large.status.code(), Some(3));
}

#[test]
fn verify_passes_on_shipped_instances() {
    for inst in ["table7/n4.inst", "table1/inst01.inst"] {
        let out = ddpp(&["verify", &data(inst)]);
        assert_eq!(out.status.code(), Some(0), "{}{}", stdout(&out), stderr(&out));
        assert!(!stdout(&out).lines().any(|l| l.starts_with("FAIL")));
    }
}

#[test]
fn bench_on_empty_directory_warns() {
    let dir = tempfile::tempdir().unwrap();
    let reports = dir.path().join("reports");
    let out = ddpp(&["bench", dir.path().to_str().unwrap(), "--out-dir", reports.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("no .inst files"));
}

#[test]
fn bench_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    write_tiny(dir.path());
    let reports = dir.path().join("reports");
    let out = ddpp(&[
        "--reads",
        "10",
        "--sweeps",
        "50",
        "--runs",
        "2",
        "bench",
        dir.path().to_str().unwrap(),
        "--out-dir",
        reports.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary = std::fs::read_to_string(reports.join("summary.csv")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("instance,avg_time_s")));
    assert!(summary.lines().any(|l| l.starts_with("tiny,")));
    assert!(reports.join("tiny.csv").exists());
}
