use std::process::Command;

use twolevel_pir::audit::AuditReport;
use twolevel_pir::capacity::{RateReport, CSV_HEADER};

const WORKED: [&str; 10] = ["--n", "4", "--t1", "2", "--k1", "2", "--t2", "1", "--k2", "4"];

fn tlpir(args: &[&str], seed_env: Option<&str>) -> (i32, String, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tlpir"));
    cmd.args(args);
    cmd.env_remove("PIR_SEED");
    if let Some(s) = seed_env {
        cmd.env("PIR_SEED", s);
    }
    let out = cmd.output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn with(cmd: &str, extra: &[&str]) -> Vec<String> {
    std::iter::once(cmd).chain(WORKED).chain(extra.iter().copied()).map(String::from).collect()
}

fn run(v: Vec<String>, seed_env: Option<&str>) -> (i32, String, String) {
    let refs: Vec<&str> = v.iter().map(String::as_str).collect();
    tlpir(&refs, seed_env)
}

#[test]
fn retrieve_exit_codes_and_text() {
    let (code, out, _) = run(with("retrieve", &["--scheme", "ns", "--target", "1", "--seed", "42"]), None);
    assert_eq!(code, 0);
    assert!(out.contains("downloaded 116 symbols, rate 16/29, recovery OK"));
    let (code, out, _) = run(with("retrieve", &["--scheme", "auto", "--target", "2"]), None);
    assert_eq!(code, 0);
    assert!(out.contains("tie"));
    let (code, _, err) = run(with("retrieve", &["--target", "5"]), None);
    assert_eq!(code, 2);
    assert!(err.contains("target 5"));
    let (code, out, _) = run(with("retrieve", &["--scheme", "nb", "--target", "4", "--transport", "tcp"]), None);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("via tcp"));
}

#[test]
fn seed_environment_variable() {
    let json = |env: Option<&str>, extra: &[&str]| {
        let mut args = vec!["--target", "1", "--format", "json"];
        args.extend_from_slice(extra);
        let (code, out, _) = run(with("retrieve", &args), env);
        assert_eq!(code, 0);
        serde_json::from_str::<serde_json::Value>(&out).unwrap()
    };
    assert_eq!(json(None, &[])["seed"], 42);
    assert_eq!(json(Some("7"), &[])["seed"], 7);
    assert_eq!(json(Some("7"), &["--seed", "3"])["seed"], 3);
    let (code, _, _) = run(with("retrieve", &["--target", "1"]), Some("seven"));
    assert_eq!(code, 2);
}

#[test]
fn rates_and_sweeps() {
    let (code, out, _) = tlpir(&["rates", "--n", "3", "--t1", "2", "--k1", "2", "--t2", "1", "--k2", "3"], None);
    assert_eq!(code, 0);
    assert!(out.contains("r_upper = 9/17"));
    assert!(out.contains("11/21"));
    let (code, _, _) = tlpir(&["rates", "--n", "3", "--t1", "1", "--k1", "2", "--t2", "2", "--k2", "3"], None);
    assert_eq!(code, 2);
    let (code, out, _) = tlpir(&["sweep", "--figure", "b", "--format", "json"], None);
    assert_eq!(code, 0);
    let rows: Vec<RateReport> = serde_json::from_str(&out).unwrap();
    assert_eq!(rows.len(), 9);
    assert_eq!(rows[0].r_ns, rows[0].r_upper);
    assert_eq!(rows[8].r_nb, rows[8].r_upper);
    let (code, out, _) = tlpir(&["sweep", "--figure", "a"], None);
    assert_eq!(code, 0);
    assert_eq!(out.lines().next(), Some(CSV_HEADER));
}

#[test]
fn audits() {
    let (code, out, _) = run(with("audit", &["--scheme", "ns", "--format", "json"]), None);
    assert_eq!(code, 0);
    let reports: Vec<AuditReport> = serde_json::from_str(&out).unwrap();
    assert_eq!(reports.len(), 2);
    assert!(reports.iter().all(|r| r.pass));
    assert_eq!(reports[0].colluding_sets, 6);
    let (code, out, _) = run(with("audit", &["--fixture", "broken", "--level", "low"]), None);
    assert_eq!(code, 1);
    assert!(out.contains("counterexample"));
}

#[test]
fn params_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("params.json");
    let (code, _, _) = run(with("params", &["--format", "json", "--out", path.to_str().unwrap()]), None);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["ns"]["table"]["M"], 6);
    assert_eq!(v["ns"]["message_len"], 64);
    assert_eq!(v["nb"]["t1"], 384);
    assert_eq!(v["nb"]["t2"], 320);
}
