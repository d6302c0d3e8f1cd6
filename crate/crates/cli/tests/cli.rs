use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use enercoord::report::{RunReport, TraceLog};

fn enercoord(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_enercoord")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn report(path: &Path) -> RunReport {
    RunReport::from_json(&fs::read_to_string(path).unwrap()).unwrap()
}

fn run_to(dir: &Path, name: &str, args: &[&str]) -> RunReport {
    let out = dir.join(name);
    let mut full = vec!["run"];
    full.extend_from_slice(args);
    full.extend_from_slice(&["--out", out.to_str().unwrap()]);
    let o = enercoord(&full);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    report(&out)
}

#[test]
fn gen_then_flow_reproduces_decoupled_cost() {
    let dir = tempfile::tempdir().unwrap();
    let gen = run_to(dir.path(), "gen.json", &["--scenario", "paper_sec4", "--algorithm", "gen"]);
    assert!(gen.lambda.unwrap().abs() < 1e-6);
    let g = dir.path().join("gen.json");
    let flow = run_to(
        dir.path(),
        "flow.json",
        &["--scenario", "paper_sec4", "--algorithm", "flow", "--pg-from", g.to_str().unwrap()],
    );
    assert!((flow.costs.flow - 1284.3).abs() <= 0.5, "{}", flow.costs.flow);
    assert_eq!(flow.flows.len(), 7);
}

#[test]
fn twoscale_agrees_with_joint_oracle() {
    let dir = tempfile::tempdir().unwrap();
    run_to(dir.path(), "two.json", &["--scenario", "paper_sec4", "--algorithm", "joint-twoscale"]);
    run_to(dir.path(), "qp.json", &["--scenario", "paper_sec4", "--algorithm", "oracle-joint"]);
    let a = dir.path().join("two.json");
    let b = dir.path().join("qp.json");
    let o = enercoord(&["compare", "--a", a.to_str().unwrap(), "--b", b.to_str().unwrap(), "--tol", "1e-3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn compare_with_itself_and_with_a_different_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    run_to(dir.path(), "gen.json", &["--scenario", "paper_sec4", "--algorithm", "gen"]);
    run_to(dir.path(), "joint.json", &["--scenario", "paper_sec4", "--algorithm", "oracle-joint"]);
    let g = dir.path().join("gen.json");
    let j = dir.path().join("joint.json");
    let same = enercoord(&["compare", "--a", g.to_str().unwrap(), "--b", g.to_str().unwrap(), "--tol", "0"]);
    assert_eq!(code(&same), 0);
    let stdout = String::from_utf8_lossy(&same.stdout);
    assert!(stdout.contains("p_g") && stdout.contains("abs 0.000e0"), "{stdout}");
    let diff = enercoord(&["compare", "--a", g.to_str().unwrap(), "--b", j.to_str().unwrap(), "--tol", "1e-3"]);
    assert_eq!(code(&diff), 1);
    assert!(String::from_utf8_lossy(&diff.stdout).contains("DIFF"));
}

#[test]
fn compare_rejects_shape_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    run_to(dir.path(), "a.json", &["--scenario", "paper_sec4", "--algorithm", "gen"]);
    run_to(dir.path(), "b.json", &["--scenario", "two_node", "--algorithm", "gen"]);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let o = enercoord(&["compare", "--a", a.to_str().unwrap(), "--b", b.to_str().unwrap(), "--tol", "1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn runs_are_deterministic_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for alg in ["gen", "joint-twoscale", "oracle-decoupled"] {
        run_to(dir.path(), "x.json", &["--scenario", "paper_sec4", "--algorithm", alg, "--mode", "message"]);
        let first = fs::read_to_string(dir.path().join("x.json")).unwrap();
        run_to(dir.path(), "x.json", &["--scenario", "paper_sec4", "--algorithm", alg, "--mode", "message"]);
        let second = fs::read_to_string(dir.path().join("x.json")).unwrap();
        assert_eq!(first, second, "{alg}");
        assert_eq!(RunReport::from_json(&first).unwrap().to_json(), first);
    }
}

#[test]
fn trace_is_written_as_csv() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    run_to(
        dir.path(),
        "r.json",
        &["--scenario", "paper_sec4", "--algorithm", "joint-twoscale", "--trace", trace.to_str().unwrap()],
    );
    let text = fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("t,variable,id,value\n"));
    let log = TraceLog::read_csv(text.as_bytes()).unwrap();
    assert!(!log.rows.is_empty());
    assert!(log.is_time_ordered());
}

#[test]
fn validate_echoes_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    fs::write(
        &path,
        r#"{"name": "pair", "nodes": [{"id": 7, "xi": 1, "zeta": 0, "p_desired": 1},
            {"id": 9, "xi": 2, "zeta": 1, "p_desired": 3}],
            "edges": [{"from": 7, "to": 9, "alpha": 1, "beta": 0}]}"#,
    )
    .unwrap();
    let o = enercoord(&["validate", "--scenario", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    for key in ["\"solver\"", "\"tol\"", "\"t_max\"", "\"eta\"", "\"gamma\""] {
        assert!(stdout.contains(key), "missing {key}:\n{stdout}");
    }
}

#[test]
fn invalid_scenarios_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(
        &path,
        r#"{"name": "bad", "nodes": [{"id": 1, "xi": 1, "zeta": 0, "p_desired": 1},
            {"id": 2, "xi": -1, "zeta": 0, "p_desired": 1}],
            "edges": [{"from": 1, "to": 2, "alpha": 0, "beta": 0}]}"#,
    )
    .unwrap();
    let o = enercoord(&["validate", "--scenario", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("alpha") && stderr.contains("xi"), "{stderr}");

    fs::write(&path, r#"{"name": "x", "nodes": [], "edges": [], "colour": 1}"#).unwrap();
    let o = enercoord(&["validate", "--scenario", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

#[test]
fn flow_without_balanced_input_is_a_precondition_failure() {
    let dir = tempfile::tempdir().unwrap();
    run_to(dir.path(), "two.json", &["--scenario", "two_node", "--algorithm", "gen"]);
    let mut r = report(&dir.path().join("two.json"));
    r.p_g = vec![5.0, 5.0];
    let path = dir.path().join("skewed.json");
    fs::write(&path, r.to_json()).unwrap();
    let o = enercoord(&["run", "--scenario", "two_node", "--algorithm", "flow", "--pg-from", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&enercoord(&["run", "--scenario", "two_node", "--algorithm", "bogus"])), 1);
    assert_eq!(code(&enercoord(&["frobnicate"])), 1);
    assert_eq!(code(&enercoord(&["--help"])), 0);
}

#[test]
fn divergent_recursion_writes_report_and_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = enercoord(&["run", "--scenario", "paper_sec4", "--algorithm", "joint-recursive", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert_eq!(report(&out).convergence.status, "diverged");
}

#[test]
fn generated_scenarios_are_reproducible_and_runnable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        assert_eq!(code(&enercoord(&["gen-scenario", "--nodes", "5", "--seed", "42", "--out", p.to_str().unwrap()])), 0);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let r = run_to(dir.path(), "r.json", &["--scenario", a.to_str().unwrap(), "--algorithm", "oracle-joint"]);
    assert_eq!(r.p_g.len(), 5);
}

#[test]
fn sweep_prints_one_line_per_scenario() {
    let o = enercoord(&["sweep", "--nodes", "4", "--count", "3", "--algorithm", "gen"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 3);
}
