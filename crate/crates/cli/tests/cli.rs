use std::path::Path;
use std::process::{Command, Output};

const FAST: [&str; 4] = ["--epsilon", "0.05", "--budget", "18"];

fn presynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_presynth")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = presynth(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn gen_synth_verify_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let (c, s) = (p(dir.path(), "c.json"), p(dir.path(), "s.json"));
    ok(&["gen", "random:n=3,depth=3", "--seed", "5", "-o", &c]);
    ok(&[&["synth", c.as_str(), "-o", s.as_str()][..], &FAST].concat());
    let v: serde_json::Value = serde_json::from_str(&ok(&["verify", &c, &s, "--epsilon", "0.05"])).unwrap();
    assert_eq!(v["bound_ok"], true);
    assert_eq!(v["clifford_t"], true);
    let t: usize = ok(&["tcount", &s]).trim().parse().unwrap();
    assert!(t > 0);
}

#[test]
fn presyn_reports_strategies() {
    let dir = tempfile::tempdir().unwrap();
    let s = p(dir.path(), "s.json");
    let args = [&["presyn", "random:n=4,depth=4", "--seed", "3", "--strategy", "refine", "--compare", "-o", s.as_str()][..], &FAST].concat();
    let r: serde_json::Value = serde_json::from_str(&ok(&args)).unwrap();
    assert_eq!(r["schema"], 1);
    let results = r["results"].as_array().unwrap();
    assert_eq!(results[0]["strategy"], "none");
    assert_eq!(results[1]["strategy"], "refine");
    let t = results[1]["t_count"].as_u64().unwrap();
    assert!(t <= results[0]["t_count"].as_u64().unwrap());
    assert_eq!(ok(&["tcount", &s]).trim().parse::<u64>().unwrap(), t);
    // identical invocation gives identical circuits
    let again: serde_json::Value = serde_json::from_str(&ok(&args)).unwrap();
    assert_eq!(again["results"][1]["circuit"], results[1]["circuit"]);
}

#[test]
fn presyn_matchgate_uses_hat_count() {
    let dir = tempfile::tempdir().unwrap();
    let s = p(dir.path(), "s.json");
    let args = [&["presyn", "matchgate:n=3,gates=8,seed=2", "--strategy", "greedy", "-o", s.as_str()][..], &FAST].concat();
    let r: serde_json::Value = serde_json::from_str(&ok(&args)).unwrap();
    assert_eq!(r["matchgate"], true);
    let t = r["results"][0]["t_count"].as_u64().unwrap();
    assert_eq!(ok(&["tcount", &s, "--matchgate"]).trim().parse::<u64>().unwrap(), t);
}

#[test]
fn qasm_output_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let q = p(dir.path(), "c.qasm");
    ok(&["gen", "ising:n=3,steps=2,seed=1", "--format", "qasm", "-o", &q]);
    assert!(std::fs::read_to_string(&q).unwrap().starts_with("OPENQASM 2.0;"));
    ok(&["tcount", &q]);
}

#[test]
fn exit_codes() {
    assert_eq!(presynth(&["presyn", "nope:n=2"]).status.code(), Some(2));
    assert_eq!(presynth(&["presyn", "random:n=2", "--strategy", "fastest"]).status.code(), Some(2));
    assert_eq!(presynth(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = p(dir.path(), "bad.toml");
    std::fs::write(&bad, "tasks = 3").unwrap();
    assert_eq!(presynth(&["bench", "--config", &bad, "--out", &p(dir.path(), "o")]).status.code(), Some(2));
    // a different circuit fails verification
    let (a, b) = (p(dir.path(), "a.json"), p(dir.path(), "b.json"));
    ok(&["gen", "random:n=2,depth=3,seed=1", "-o", &a]);
    ok(&["gen", "random:n=2,depth=3,seed=2", "-o", &b]);
    assert_eq!(presynth(&["verify", &a, &b, "--epsilon", "1e-6"]).status.code(), Some(4));
}

#[test]
fn bench_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = p(dir.path(), "suite.toml");
    std::fs::write(
        &cfg,
        r#"
tasks = ["random:n=3,depth=3", "linear:n=3,blocks=1,kind=rxx_brick"]
seeds = [0, 1]
workers = 2
[run]
epsilon = 0.05
budget = 18
strategies = ["none", "greedy"]
"#,
    )
    .unwrap();
    let out = p(dir.path(), "out");
    ok(&["bench", "--config", &cfg, "--out", &out]);
    let reports = std::fs::read_to_string(Path::new(&out).join("reports.jsonl")).unwrap();
    assert_eq!(reports.lines().count(), 4);
    let svg = p(dir.path(), "fig.svg");
    ok(&["plot", &p(Path::new(&out), "summary.csv"), "-o", &svg]);
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<svg"));
}
