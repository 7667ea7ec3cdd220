use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::{json, Value as Json};

const FRIEND_PURCHASES: &str = "MATCH (a:Buyer)-[:Knows]->(b:Buyer)-[:Buy]->(c:Item) RETURN c.price";

fn g0(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/g0").join(name)
}

fn flexgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flexgraph")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout_json(o: &Output) -> Json {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn write_profile(dir: &Path, profile: Json) -> String {
    let p = dir.join("profile.json");
    std::fs::write(&p, profile.to_string()).unwrap();
    p.to_str().unwrap().to_string()
}

fn g0_archive(dir: &Path) -> String {
    let out = dir.join("g0_archive");
    let o = flexgraph(&["convert", g0("csv_spec.json").to_str().unwrap(), out.to_str().unwrap(), "--chunk-rows", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out.to_str().unwrap().to_string()
}

#[test]
fn query_prints_three_rows() {
    let cfg = g0("g0.json");
    let o = flexgraph(&["query", "--config", cfg.to_str().unwrap(), "-q", FRIEND_PURCHASES]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["rows"], json!([[100.0], [50.0], [50.0]]));

    let o = flexgraph(&["query", "--config", cfg.to_str().unwrap(), "-q", FRIEND_PURCHASES, "--format", "table"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("c.price\n") && text.trim_end().ends_with("(3 rows)"), "{text}");
}

#[test]
fn profile_from_flags() {
    let spec = g0("csv_spec.json");
    let o = flexgraph(&["query", "--csv-spec", spec.to_str().unwrap(), "--store", "mvcc", "--engine", "oltp", "--shards", "3", "-q", FRIEND_PURCHASES]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn typo_exits_four_with_a_diagnostic() {
    let o = flexgraph(&["query", "--config", g0("g0.json").to_str().unwrap(), "-q", "MATCH (a:Buyer) RETUR a"]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("1:17:"));
    assert!(o.stdout.is_empty());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&flexgraph(&["frobnicate"])), 1);
    assert_eq!(code(&flexgraph(&["query", "-q", "MATCH (a) RETURN a"])), 1);
    let cfg = g0("g0.json");
    assert_eq!(code(&flexgraph(&["query", "--config", cfg.to_str().unwrap()])), 1);
    assert_eq!(code(&flexgraph(&["query", "--config", cfg.to_str().unwrap(), "-q", "x", "--params", "[1]"])), 1);
    assert_eq!(code(&flexgraph(&["--help"])), 0);
}

#[test]
fn config_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_profile(dir.path(), json!({"store": {"kind": "tape"}}));
    assert_eq!(code(&flexgraph(&["load", "--config", &bad])), 2);
    assert_eq!(code(&flexgraph(&["load", "--config", "/nonexistent/profile.json"])), 2);
    let missing = write_profile(dir.path(), json!({"store": {"kind": "immutable", "source": {"csv_spec": "nope.json"}}}));
    assert_eq!(code(&flexgraph(&["load", "--config", &missing])), 3);
}

#[test]
fn updates_against_a_read_only_profile_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let archive = g0_archive(dir.path());
    let ops = dir.path().join("ops.json");
    std::fs::write(&ops, json!({"ops": [{"op": "insert_edge", "etype": "Buy", "src": "C3", "dst": 1}]}).to_string()).unwrap();

    let declared = write_profile(dir.path(), json!({"store": {"kind": "archive", "source": {"archive_dir": archive}}, "engine": {"kind": "oltp", "shards": 2, "updates": true}}));
    let o = flexgraph(&["query", "--config", &declared, "-q", FRIEND_PURCHASES]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("mvcc"));

    let plain = write_profile(dir.path(), json!({"store": {"kind": "archive", "source": {"archive_dir": archive}}, "engine": {"kind": "oltp", "shards": 2}}));
    assert_eq!(code(&flexgraph(&["query", "--config", &plain, "-q", FRIEND_PURCHASES])), 0);
    assert_eq!(code(&flexgraph(&["query", "--config", &plain, "-q", FRIEND_PURCHASES, "--update", ops.to_str().unwrap()])), 2);
}

#[test]
fn mvcc_update_then_query() {
    let dir = tempfile::tempdir().unwrap();
    let ops = dir.path().join("ops.json");
    std::fs::write(&ops, json!({"ops": [{"op": "insert_edge", "etype": "Buy", "src": "C3", "dst": 1, "props": {"date": 10}}]}).to_string()).unwrap();
    let cfg = g0("g0_mvcc.json");
    let o = flexgraph(&["query", "--config", cfg.to_str().unwrap(), "-q", FRIEND_PURCHASES, "--update", ops.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["rows"].as_array().unwrap().len(), 4);
    let o = flexgraph(&["query", "--config", cfg.to_str().unwrap(), "-q", FRIEND_PURCHASES, "--update", ops.to_str().unwrap(), "--snapshot", "1"]);
    assert_eq!(stdout_json(&o)["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn every_store_kind_answers_alike() {
    let dir = tempfile::tempdir().unwrap();
    let archive = g0_archive(dir.path());
    let spec = g0("csv_spec.json");
    let q = "MATCH (b:Buyer)-[r:Buy]->(i:Item) WHERE i.price < 80 RETURN b.username, r.date ORDER BY r.date";
    let mut answers = Vec::new();
    for args in [
        vec!["--csv-spec", spec.to_str().unwrap(), "--store", "immutable"],
        vec!["--csv-spec", spec.to_str().unwrap(), "--store", "mvcc"],
        vec!["--archive-dir", &archive],
        vec!["--archive-dir", &archive, "--store", "immutable"],
        vec!["--archive-dir", &archive, "--store", "mvcc", "--engine", "oltp"],
    ] {
        let o = flexgraph(&[&["query", "-q", q][..], &args].concat());
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        answers.push(stdout_json(&o)["rows"].clone());
    }
    assert_eq!(answers[0], json!([["B2", 3], ["C3", 9]]));
    assert!(answers.iter().all(|a| *a == answers[0]));
}

#[test]
fn catalog_is_saved_and_reused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("catalog.json");
    let spec = g0("csv_spec.json");
    let o = flexgraph(&["catalog", "--csv-spec", spec.to_str().unwrap(), "--k", "3", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["k"], 3);
    let saved: Json = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(saved["k"], 3);

    let cfg = write_profile(dir.path(), json!({"store": {"kind": "immutable", "source": {"csv_spec": spec}}, "catalog": {"k": 2, "path": "catalog.json"}}));
    let o = flexgraph(&["query", "--config", &cfg, "-q", FRIEND_PURCHASES]);
    assert_eq!(code(&o), 0);
    std::fs::write(&path, "{}").unwrap();
    assert_eq!(code(&flexgraph(&["query", "--config", &cfg, "-q", FRIEND_PURCHASES])), 2);
}

#[test]
fn load_reports_sizes() {
    let o = flexgraph(&["load", "--config", g0("g0.json").to_str().unwrap()]);
    let v = stdout_json(&o);
    assert_eq!(v["vertices"], json!({"Buyer": 3, "Item": 2, "Seller": 1}));
    assert_eq!(v["edges"], json!({"Buy": 4, "Knows": 2, "Sell": 2}));
}

#[test]
fn analyze_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pr.csv");
    let cfg = g0("g0.json");
    let o = flexgraph(&["analyze", "pagerank", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let mut r = csv::Reader::from_path(&out).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["vtype", "idx", "score"]);
    let total: f64 = r.records().map(|rec| rec.unwrap()[2].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);

    let o = flexgraph(&["analyze", "bfs", "--config", cfg.to_str().unwrap(), "--src", "Buyer:0"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("Item,1,2\n") && text.contains("Seller,0,\n"), "{text}");
    assert_eq!(code(&flexgraph(&["analyze", "bfs", "--config", cfg.to_str().unwrap(), "--src", "Buyer:9"])), 1);
}

#[test]
fn repl_pins_snapshots() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_flexgraph"))
        .args(["repl", "--config", g0("g0_mvcc.json").to_str().unwrap(), "--format", "json"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let script = format!(
        "{FRIEND_PURCHASES}\n:update {}\n{FRIEND_PURCHASES}\n:snapshot 1\n{FRIEND_PURCHASES}\n:snapshot latest\n:backend batch\n{FRIEND_PURCHASES}\nMATCH (a:Nope) RETURN a\n:quit\n{FRIEND_PURCHASES}\n",
        json!({"ops": [{"op": "insert_edge", "etype": "Buy", "src": "C3", "dst": 1}]})
    );
    child.stdin.take().unwrap().write_all(script.as_bytes()).unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8(o.stdout).unwrap();
    let counts: Vec<usize> = stdout
        .lines()
        .filter_map(|l| serde_json::from_str::<Json>(l).ok())
        .map(|v| v["rows"].as_array().unwrap().len())
        .collect();
    assert_eq!(counts, [3, 4, 3, 4]);
    assert!(stdout.contains("committed version 2"));
    let stderr = String::from_utf8(o.stderr).unwrap();
    assert_eq!(stderr.lines().filter(|l| l.starts_with("error: ")).count(), 1, "{stderr}");
    assert!(stderr.contains("Nope"), "{stderr}");
}

#[test]
fn bench_prints_json_reports() {
    let o = flexgraph(&["bench", "--suite", "edge_scan", "--edges", "2000", "--runs", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let reports = stdout_json(&o);
    let stores: Vec<&str> = reports.as_array().unwrap().iter().map(|r| r["config"]["store"].as_str().unwrap()).collect();
    assert_eq!(stores, ["immutable", "mvcc", "archive"]);
    assert!(reports[0]["median"].as_f64().is_some());
}

#[test]
fn serve_subcommand_answers_http() {
    use std::io::{BufRead, BufReader};
    let mut child = Command::new(env!("CARGO_BIN_EXE_flexgraph"))
        .args(["serve", "--config", g0("g0.json").to_str().unwrap(), "--port", "0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let base = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("{line}")).to_string();
    let c = reqwest::blocking::Client::new();
    let health: Json = c.get(format!("{base}/healthz")).send().unwrap().json().unwrap();
    let body: Json = c.post(format!("{base}/query")).json(&json!({"text": FRIEND_PURCHASES})).send().unwrap().json().unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(health["status"], "ok");
    assert_eq!(body["rows"].as_array().unwrap().len(), 3);
}
