use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

fn uamr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uamr")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn origin() -> String {
    data("case_study_origin.json").display().to_string()
}

/// Two nodes joined by a link too long for the battery.
const UNREACHABLE: &str = r#"{
  "delta_t": 1,
  "battery": {"capacity": 6, "charge_step": 6, "charge_step_time": 1},
  "charge_dist": {"pmf": {"1": 1.0}},
  "rewards": {"r_t": -1, "r_d": -100, "r_a": 100},
  "demand": {"origin": "a", "destination": "b"},
  "nodes": [
    {"id": "a", "capacity": 1, "queue_min": 0, "queue_max": 0},
    {"id": "b", "capacity": 1, "queue_min": 0, "queue_max": 0}
  ],
  "links": [{"id": "a->b", "tail": "a", "head": "b", "x_lower": 5, "x_upper": 8}]
}"#;

#[test]
fn validate_reports_counts() {
    let o = uamr(&["validate", &origin()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "ok: 29 nodes, 137 links");
}

#[test]
fn validate_names_the_bad_node() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let text = UNREACHABLE.replace(
        r#"{"id": "b", "capacity": 1, "queue_min": 0, "queue_max": 0}"#,
        r#"{"id": "b", "capacity": 1, "queue_min": 0, "queue_max": 1, "queue_pmf": {"0": 0.5, "1": 0.2}}"#,
    );
    fs::write(&path, text).unwrap();
    let o = uamr(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains('b'), "{}", stderr(&o));
}

#[test]
fn missing_file_is_an_io_error() {
    let o = uamr(&["validate", "/nonexistent/network.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn solve_prints_a_summary() {
    let o = uamr(&["solve", &origin()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("6057 states"), "{out}");
    assert!(out.contains("1943 reachable"), "{out}");
    assert!(
        out.contains("worst-case route: dallas -> cleburne -> glen_rose -> gatesville -> georgetown -> austin"),
        "{out}"
    );
}

#[test]
fn both_methods_fly_the_same_route() {
    let route = |method: &str| {
        let o = uamr(&["solve", &origin(), "--method", method]);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
            .lines()
            .find(|l| l.starts_with("worst-case route"))
            .unwrap()
            .to_string()
    };
    assert_eq!(route("vi"), route("pi"));
}

#[test]
fn simulate_writes_stats_and_a_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let policy = dir.path().join("policy.csv");
    let stats = dir.path().join("stats.csv");
    let traj = dir.path().join("traj.csv");
    let o = uamr(&["solve", &origin(), "--out", policy.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = uamr(&[
        "simulate",
        &origin(),
        policy.to_str().unwrap(),
        "--episodes",
        "500",
        "--out",
        stats.to_str().unwrap(),
        "--trajectory",
        traj.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = fs::read_to_string(&stats).unwrap();
    assert!(s.lines().count() >= 2, "{s}");
    let t = fs::read_to_string(&traj).unwrap();
    assert!(t.lines().count() > 5, "{t}");
}

#[test]
fn simulate_rejects_a_partial_policy() {
    let dir = tempfile::tempdir().unwrap();
    let policy = dir.path().join("policy.csv");
    let o = uamr(&["solve", &origin(), "--out", policy.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let full = fs::read_to_string(&policy).unwrap();
    let head: Vec<&str> = full.lines().take(2).collect();
    fs::write(&policy, head.join("\n") + "\n").unwrap();
    let o = uamr(&["simulate", &origin(), policy.to_str().unwrap(), "--episodes", "10"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn safe_route_found_and_not_found() {
    let o = uamr(&["safe-route", &origin()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("route: dallas -> "), "{}", stdout(&o));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.json");
    fs::write(&path, UNREACHABLE).unwrap();
    let o = uamr(&["safe-route", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "none found");
}

#[test]
fn experiments_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str], name: &str| {
        let path = dir.path().join(name);
        let mut full = args.to_vec();
        full.extend(["--out", path.to_str().unwrap()]);
        let o = uamr(&full);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(&path).unwrap()
    };
    let net = origin();
    let q = ["experiment-qsafe", &net, "--qmax-range", "0..2"];
    assert_eq!(run(&q, "q1.csv"), run(&q, "q2.csv"));
    let c = ["experiment-charging", &net, "--tb-range", "6,30,60"];
    let first = run(&c, "c1.csv");
    assert_eq!(first, run(&c, "c2.csv"));
    assert_eq!(String::from_utf8(first).unwrap().lines().count(), 7);
}
