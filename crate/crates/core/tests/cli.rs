//! End-to-end runs of the command-line tool on the bundled reference data.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robust-dc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn body(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[test]
fn solve_writes_a_policy_for_every_slot_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data("reference.toml");
    let args = |out: &Path| {
        vec![
            "solve".to_string(),
            "--config".into(),
            s(&cfg).into(),
            "--horizon".into(),
            "24".into(),
            "--robust".into(),
            "off".into(),
            "--out".into(),
            s(out).into(),
        ]
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        std::fs::create_dir_all(out).unwrap();
        let argv = args(out);
        let res = run(&argv.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    }
    for file in ["policy.csv", "values.csv"] {
        let (x, y) = (std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap());
        assert_eq!(x, y, "{file} differs between identical runs");
        let text = String::from_utf8(x).unwrap();
        assert!(text.starts_with("# robust-dc "));
        assert!(text.lines().next().unwrap().contains("digest="));
    }
    let rows = body(&a.join("policy.csv"));
    assert_eq!(rows[0], "slot,mode,group,orthant,tau,value");
    let mut slots: Vec<usize> = rows[1..].iter().map(|r| r.split(',').next().unwrap().parse().unwrap()).collect();
    slots.dedup();
    assert_eq!(slots, (0..24).collect::<Vec<_>>());
}

#[test]
fn compare_emits_both_policies() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bands.csv");
    let cfg = data("reference.toml");
    let res = run(&[
        "--seed", "3", "compare", "--config", s(&cfg), "--robust", "off", "--runs", "50", "--out", s(&out),
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let rows = body(&out);
    assert_eq!(rows[0], "policy,slot,mean,std,lo1,hi1,lo2,hi2");
    for label in ["mdp", "mpc"] {
        let n = rows.iter().filter(|r| r.starts_with(&format!("{label},"))).count();
        assert_eq!(n, 25, "{label} needs 24 slot rows and a final row");
    }
}

#[test]
fn solve_then_simulate_round_trips_the_policy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data("reference.toml");
    let res = run(&["solve", "--config", s(&cfg), "--robust", "off", "--out", s(dir.path())]);
    assert_eq!(res.status.code(), Some(0));
    let stats = dir.path().join("stats.csv");
    let traj = dir.path().join("traj.csv");
    let policy = dir.path().join("policy.csv");
    let res = run(&[
        "simulate", "--config", s(&cfg), "--policy", s(&policy), "--runs", "20", "--robust", "off", "--out",
        s(&stats), "--trajectories", s(&traj), "--keep", "2",
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(body(&stats).len(), 1 + 25);
    assert_eq!(body(&traj).len(), 1 + 2 * 24);
}

#[test]
fn trace_generation_and_ingestion() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let model = dir.path().join("modes.toml");
    let res = run(&["gen-trace", "--model", s(&data("reference-modes.toml")), "--slots", "2000", "--out", s(&trace)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let res = run(&["ingest", "--trace", s(&trace), "--modes", "3", "--out", s(&model)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&model).unwrap();
    assert!(text.starts_with("# robust-dc "));

    // a trace missing one of the requested classes is rejected
    let res = run(&["ingest", "--trace", s(&trace), "--classes", "nosuch", "--out", s(&model)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("nosuch"));
}

#[test]
fn check_passes_on_the_reference_instance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("check.csv");
    let res = run(&["check", "--config", s(&data("reference.toml")), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(body(&out)[0], "check,value,ok");
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["solve"]).status.code(), Some(1));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let res = run(&["solve", "--config", "/definitely/missing.toml"]);
    assert_eq!(res.status.code(), Some(2));
    let res = run(&["solve", "--config", s(&data("reference.toml")), "--gamma", "1.5", "--robust", "off"]);
    assert_eq!(res.status.code(), Some(2));
}
