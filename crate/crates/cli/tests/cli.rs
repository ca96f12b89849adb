use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn iraas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iraas"))
        .args(args)
        .env("IRAAS_LOG_LEVEL", "error")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn run_to(dir: &Path, scenario: &str, extra: &[&str]) -> PathBuf {
    let report = dir.join(format!("{scenario}.report.json"));
    let s = scenarios().join(scenario);
    let i = scenarios().join("intent_spf_latency.json");
    let mut args = vec![
        "run",
        "--scenario",
        s.to_str().unwrap(),
        "--intent",
        i.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = iraas(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    report
}

#[test]
fn run_then_query_routes() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_to(dir.path(), "poc.json", &[]);
    let r = report.to_str().unwrap();

    let o = iraas(&[
        "routes", "--report", r, "--src", "c1:s1", "--dst", "c1:s3", "--k", "2",
    ]);
    assert!(o.status.success());
    let lines: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("1  cost"));
    assert!(lines[1].starts_with("2  cost"));

    let o = iraas(&[
        "routes", "--report", r, "--src", "c1:s1", "--dst", "c1:s3", "--format", "machine",
    ]);
    let recs: Vec<serde_json::Value> = stdout(&o)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(recs.len(), 3);
    let ranks: Vec<u64> = recs.iter().map(|r| r["rank"].as_u64().unwrap()).collect();
    assert_eq!(ranks, [1, 2, 3]);
    assert_eq!(recs[0]["path"][0], "c1:s1");
    assert_eq!(recs[0]["path"].as_array().unwrap().last().unwrap(), "c1:s3");

    let o = iraas(&["routes", "--report", r, "--src", "c1:s1", "--dst", "c1:s42"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("UnknownPair"));
}

#[test]
fn telemetry_blocks_per_link() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_to(dir.path(), "poc.json", &[]);
    let r = report.to_str().unwrap();
    let o = iraas(&["telemetry", "--report", r, "--source", "c1-s2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    // s2 is the `a` end of s2-s3 and s2-s5
    assert_eq!(text.lines().filter(|l| l.starts_with("link ")).count(), 2);
    assert!(text.contains("latency"));

    let o = iraas(&["telemetry", "--report", r, "--source", "c1-s99"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("UnknownSource"));
}

#[test]
fn exit_codes() {
    let s = scenarios();
    let o = iraas(&[
        "run",
        "--scenario",
        s.join("poc.json").to_str().unwrap(),
        "--intent",
        s.join("intent_bad_weights.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("WeightSumViolation"));

    let o = iraas(&[
        "run",
        "--scenario",
        s.join("missing.json").to_str().unwrap(),
        "--intent",
        s.join("intent_spf_latency.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));

    let o = iraas(&[
        "routes",
        "--report",
        "/nonexistent/r.json",
        "--src",
        "a:b",
        "--dst",
        "a:c",
    ]);
    assert_eq!(o.status.code(), Some(3));

    let o = iraas(&["run", "--scenario"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn reports_byte_identical_across_runs_and_modes() {
    let dir = tempfile::tempdir().unwrap();
    let a = std::fs::read(run_to(dir.path(), "poc_fail_link.json", &[])).unwrap();
    let b = std::fs::read(run_to(dir.path(), "poc_fail_link.json", &[])).unwrap();
    let c = std::fs::read(run_to(dir.path(), "poc_fail_link.json", &["--distributed"])).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
    let d = std::fs::read(run_to(dir.path(), "poc_fail_link.json", &["--seed", "99"])).unwrap();
    assert_ne!(a, d);
}

#[test]
fn report_to_stdout() {
    let s = scenarios();
    let o = iraas(&[
        "run",
        "--scenario",
        s.join("poc_fail_link.json").to_str().unwrap(),
        "--intent",
        s.join("intent_spf_latency.json").to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["convergence"].as_array().unwrap().len(), 1);
    assert_eq!(v["convergence"][0]["recompute_delta"], 0);
}
