use std::fs;
use std::process::{Command, Output};

use omin::routing::{example_permutation, parse_permutation};
use omin::topology::{build_network, Topology};

fn omin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omin")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn example_file(dir: &tempfile::TempDir) -> String {
    let path = dir.path().join("example.perm");
    fs::write(&path, format!("# 8-input example\n{}", example_permutation().to_text())).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn schedule_exact_example() {
    let dir = tempfile::tempdir().unwrap();
    let perm = example_file(&dir);
    let o = omin(&["schedule", "--size", "8", "--perm", &perm, "--budget", "0", "--algorithm", "exact"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    let doc: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(lines.next(), Some("passes: 3"));
    assert_eq!(
        lines.collect::<Vec<_>>().len(),
        0,
        "nothing after the pass count"
    );
    assert_eq!(doc["passes"], serde_json::json!([[0, 1, 7], [2, 4, 5], [3, 6]]));
    assert_eq!(doc["violations"], serde_json::json!([]));
    let keys: Vec<&str> = text.split('"').skip(1).step_by(2).take(6).collect();
    assert_eq!(keys, ["size", "topology", "omega", "budget", "algorithm", "exact"]);
}

#[test]
fn schedule_writes_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let perm = example_file(&dir);
    let out = dir.path().join("sched.json");
    let o = omin(&[
        "schedule", "--size", "8", "--perm", &perm, "--budget", "unlimited", "--algorithm", "welsh-powell",
        "--output", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "passes: 1\n");
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(doc["budget"], "unlimited");
    assert_eq!(doc["algorithm"], "welsh-powell");
}

#[test]
fn conflicts_csv() {
    let dir = tempfile::tempdir().unwrap();
    let perm = example_file(&dir);
    let o = omin(&["conflicts", "--size", "8", "--perm", &perm]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "indexA,indexB,stages,kinds");
    assert_eq!(lines.len(), 13);
    assert_eq!(lines[1], "0,2,2,crosstalk");
    assert!(lines.contains(&"0,4,1,crosstalk"));
}

#[test]
fn route_table() {
    let dir = tempfile::tempdir().unwrap();
    let perm = example_file(&dir);
    let o = omin(&["route", "--size", "8", "--topology", "omega", "--perm", &perm]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "index,source,destination,stage,switch,in_port,out_port");
    assert_eq!(&lines[1..4], ["0,0,7,1,0,0,1", "0,0,7,2,1,0,1", "0,0,7,3,3,0,1"]);
    assert_eq!(lines.len(), 1 + 8 * 3);

    let o = omin(&["route", "--size", "8", "--topology", "baseline", "--perm", &perm, "--format", "json"]);
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 8);
}

#[test]
fn bandwidth_tables() {
    let o = omin(&["bandwidth", "--sizes", "4,8,16,32,64", "--mode", "analytic", "--load", "1.0"]);
    assert_eq!(
        stdout(&o),
        "size,mode,bw,stderr\n4,analytic,2.4375,0\n8,analytic,4.132324,0\n16,analytic,7.197392,0\n\
         32,analytic,12.775957,0\n64,analytic,23.001523,0\n"
    );
    let o = omin(&[
        "bandwidth", "--sizes", "8", "--mode", "simulate", "--crosstalk", "allow,budget=1,free", "--trials", "500",
        "--seed", "1",
    ]);
    let text = stdout(&o);
    let modes: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(modes, ["allow", "budget=1", "free"]);

    let o = omin(&["bandwidth", "--sizes", "8", "--mode", "simulate", "--trials", "100", "--format", "json"]);
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let keys: Vec<&String> = rows[0].as_object().unwrap().keys().collect();
    assert_eq!(keys.len(), 9);
    let raw = stdout(&o);
    let order: Vec<&str> = ["size", "topology", "load", "mode", "trials", "seed", "mean_bw", "stderr", "passability"]
        .into_iter()
        .collect();
    let mut pos = 0;
    for key in order {
        let at = raw[pos..].find(&format!("\"{key}\"")).expect(key);
        pos += at;
    }
}

#[test]
fn simulate_report() {
    let o = omin(&["simulate", "--size", "8", "--random-perms", "200", "--seed", "4", "--budget", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let results = report["results"].as_array().unwrap();
    let modes: Vec<&str> = results.iter().map(|r| r["mode"].as_str().unwrap()).collect();
    assert_eq!(modes, ["allow", "budget=1", "free"]);
    let hist = report["pass_histogram"].as_object().unwrap();
    assert_eq!(hist.values().map(|v| v.as_u64().unwrap()).sum::<u64>(), 200);
    assert!(hist.keys().all(|k| k.parse::<usize>().unwrap() >= 1));
}

#[test]
fn permute_round_trip() {
    let o = omin(&["permute", "--size", "16", "--seed", "8"]);
    assert_eq!(o.status.code(), Some(0));
    let net = build_network(16, Topology::Omega).unwrap();
    let perm = parse_permutation(&stdout(&o), &net).unwrap();
    assert!(!perm.is_partial());
    assert_eq!(perm.to_text(), stdout(&o));
}

#[test]
fn input_errors_exit_2() {
    let o = omin(&["schedule", "--size", "8", "--perm", "missing.perm", "--budget", "0", "--algorithm", "exact"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.contains("missing.perm"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.perm");
    fs::write(&bad, "0 1\n1 2 3\n").unwrap();
    let o = omin(&["route", "--size", "8", "--perm", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("line 2"));

    let o = omin(&["route", "--size", "8", "--perm", bad.to_str().unwrap(), "--random-seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
}
