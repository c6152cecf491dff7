use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn topology(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../topologies").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mwum-net")).args(args).env("MWUM_NET_THREADS", "1").output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().next().expect("output")).unwrap()
}

#[test]
fn capacity_reports_critical_tandem() {
    let t2 = topology("t2.json");
    let out = run(&["capacity", "--topology", t2.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["Leff"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(v["class"], "critical");
    assert_eq!(v["CRstar"], serde_json::json!([[1.0, 1.0]]));
    assert!((v["gamma"].as_f64().unwrap() - 0.5).abs() < 1e-9);
}

#[test]
fn capacity_reports_strict_tandem_without_resources() {
    let t2 = topology("t2.json");
    let v = json(&run(&["capacity", "--topology", t2.to_str().unwrap(), "--rho-scale", "0.8"]));
    assert_eq!(v["class"], "strict");
    assert!(v.get("CRstar").is_none());
}

#[test]
fn config_errors_exit_with_two() {
    assert_eq!(run(&["capacity", "--topology", "/nonexistent/t.json"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"queues\": []}").unwrap();
    assert_eq!(run(&["capacity", "--topology", bad.to_str().unwrap()]).status.code(), Some(2));
    let t2 = topology("t2.json");
    let out = dir.path().join("o");
    let args = ["fluid", "--topology", t2.to_str().unwrap(), "--horizon", "1", "--step", "1", "--out", out.to_str().unwrap()];
    assert_eq!(run(&args).status.code(), Some(2));
}

#[test]
fn simulate_requires_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let sq1 = topology("sq1.json");
    let out = run(&["simulate", "--topology", sq1.to_str().unwrap(), "--horizon", "50", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&[
        "simulate",
        "--topology",
        sq1.to_str().unwrap(),
        "--horizon",
        "50",
        "--allow-unseeded",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"].as_array().unwrap().len(), 1);
}

#[test]
fn simulate_output_is_reproducible() {
    let sq1 = topology("sq1.json");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let out = run(&[
            "simulate",
            "--topology",
            sq1.to_str().unwrap(),
            "--horizon",
            "200",
            "--seeds",
            "7",
            "--events",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    for f in ["sim_seed7.csv", "events_seed7.jsonl"] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between identical runs");
    }
    let csv = std::fs::read_to_string(dirs[0].path().join("sim_seed7.csv")).unwrap();
    assert!(csv.starts_with("t,kind,entity,N[0:l1/v],Q[l1/v]\n"));
    assert_eq!(csv.lines().count(), 202);
}

#[test]
fn compare_needs_seeds_and_two_scales() {
    let dir = tempfile::tempdir().unwrap();
    let sq1 = topology("sq1.json");
    let base = ["compare", "--topology", sq1.to_str().unwrap(), "--out", dir.path().to_str().unwrap()];
    let with = |extra: &[&str]| {
        let mut v: Vec<&str> = base.to_vec();
        v.extend_from_slice(extra);
        run(&v)
    };
    assert_eq!(with(&["--scales", "20,100"]).status.code(), Some(2));
    assert_eq!(with(&["--scales", "20", "--seeds", "1"]).status.code(), Some(2));
    let out = with(&["--scales", "1,5", "--seeds", "1", "--horizon", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let table = std::fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "r,runs,mean,max");
    let distance: f64 = rows[1].split(',').nth(2).unwrap().parse().unwrap();
    assert!(distance.is_finite() && distance >= 0.0);
}

#[test]
fn lift_of_zero_is_zero() {
    let t2 = topology("t2.json");
    let out = run(&["lift", "--topology", t2.to_str().unwrap(), "--n0", "0", "--q0", "0,0"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["lifted_q"], serde_json::json!([0.0, 0.0]));
    assert_eq!(v["distance"], 0.0);
}

#[test]
fn invariant_grid_marks_lifted_states() {
    let dir = tempfile::tempdir().unwrap();
    let states = dir.path().join("states.json");
    std::fs::write(&states, r#"[{"n":[1.0],"q":[2.0,1.0]},{"n":[1.0],"q":[1.0,1.0]}]"#).unwrap();
    let t2 = topology("t2.json");
    let out = run(&[
        "invariant",
        "--topology",
        t2.to_str().unwrap(),
        "--states",
        states.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("invariant.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0][3], "true");
    assert!(rows[0][4].parse::<f64>().unwrap() < 1e-6);
    assert_eq!(rows[1][3], "false");
    assert!(rows[1][4].parse::<f64>().unwrap() > 1e-6);
}

#[test]
fn lift_requires_a_critical_network() {
    let sq1 = topology("sq1.json");
    assert_eq!(run(&["lift", "--topology", sq1.to_str().unwrap(), "--n0", "1", "--q0", "1"]).status.code(), Some(2));
}

#[test]
fn balance_holds_on_critical_tandem() {
    let dir = tempfile::tempdir().unwrap();
    let t2 = topology("t2.json");
    let out = run(&["balance", "--topology", t2.to_str().unwrap(), "--horizon", "10", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["balance_holds"], true);
    assert!(dir.path().join("balance.csv").exists() && dir.path().join("manifest.json").exists());
}
