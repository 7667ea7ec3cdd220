use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::Command;
use std::sync::{mpsc, Arc};

use reqwest::blocking::Client;
use serde_json::{json, Value as Json};

use flexgraph_cli::{App, Profile};

const FRIEND_PURCHASES: &str = "MATCH (a:Buyer)-[:Knows]->(b:Buyer)-[:Buy]->(c:Item) RETURN c.price";
const FRIEND_PURCHASES_A1: &str = "MATCH (a:Buyer)-[:Knows]->(b:Buyer)-[:Buy]->(c:Item) WHERE a.username = \"A1\" RETURN c.price";

fn g0(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/g0").join(name)
}

/// Serves the profile on an ephemeral port from a background runtime.
fn spawn(profile: &str) -> String {
    let app = Arc::new(App::load(Profile::from_file(&g0(profile)).unwrap()).unwrap());
    let (tx, rx) = mpsc::channel::<SocketAddr>();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        rt.block_on(flexgraph_cli::http::serve(app, "127.0.0.1:0".parse().unwrap(), |a| tx.send(a).unwrap())).unwrap();
    });
    format!("http://{}", rx.recv().unwrap())
}

fn post(c: &Client, url: &str, body: Json) -> (u16, Json) {
    let r = c.post(url).json(&body).send().unwrap();
    (r.status().as_u16(), r.json().unwrap())
}

fn sorted_rows(body: &Json) -> Vec<String> {
    let mut rows: Vec<String> = body["rows"].as_array().unwrap().iter().map(|r| r.to_string()).collect();
    rows.sort();
    rows
}

fn get(c: &Client, url: &str) -> (u16, Json) {
    let r = c.get(url).send().unwrap();
    (r.status().as_u16(), r.json().unwrap())
}

#[test]
fn read_endpoints() {
    let base = spawn("g0.json");
    let c = Client::new();
    let (s, schema) = get(&c, &format!("{base}/schema"));
    assert_eq!(s, 200);
    assert_eq!(schema["vertex_types"].as_array().unwrap().len(), 3);
    let (s, h) = get(&c, &format!("{base}/healthz"));
    assert_eq!((s, h["status"].as_str(), h["store"].as_str()), (200, Some("ok"), Some("immutable")));
    let (s, stats) = get(&c, &format!("{base}/catalog/stats"));
    assert_eq!(s, 200);
    assert_eq!(stats["k"], 2);
    assert!(stats["pattern_count"].as_u64().unwrap() > 0);
    assert!(!stats["sample"].as_array().unwrap().is_empty());
}

#[test]
fn query_with_explain_shows_pushed_and_fused_plan() {
    let base = spawn("g0.json");
    let c = Client::new();
    let (s, body) = post(&c, &format!("{base}/query"), json!({"lang": "cypher", "text": FRIEND_PURCHASES, "explain": true}));
    assert_eq!(s, 200);
    assert_eq!(body["rows"], json!([[100.0], [50.0], [50.0]]));
    assert_eq!(body["columns"][0]["name"], "c.price");
    assert!(body["stats"]["intermediate_tuples"].as_u64().is_some());
    for stage in ["logical", "optimized", "physical"] {
        assert!(body["plan"][stage]["ops"].is_array(), "{stage}");
    }

    let (s, body) = post(&c, &format!("{base}/query"), json!({"text": FRIEND_PURCHASES_A1, "explain": true}));
    assert_eq!(s, 200);
    assert_eq!(body["rows"], json!([[100.0], [50.0]]));
    let ops = body["plan"]["optimized"]["ops"].as_array().unwrap();
    let kinds: Vec<&str> = ops.iter().map(|o| o["kind"].as_str().unwrap()).filter(|k| *k != "SINK").collect();
    assert_eq!(kinds, ["GET_VERTEX", "EXPAND_VERTEX", "EXPAND_VERTEX", "PROJECT"]);
    assert_eq!(ops[0]["pred"], "a.username = \"A1\"");
    assert!(ops.iter().filter(|o| o["kind"] == "EXPAND_VERTEX").all(|o| o["fused"] == true));
}

#[test]
fn error_statuses() {
    let base = spawn("g0.json");
    let c = Client::new();
    let url = format!("{base}/query");
    let (s, body) = post(&c, &url, json!({"text": "MATCH (a:Buyer) RETUR a"}));
    assert_eq!(s, 422);
    assert_eq!(body["error"]["kind"], "diagnostic");
    assert_eq!((body["error"]["line"].as_u64(), body["error"]["col"].as_u64()), (Some(1), Some(17)));

    let r = c.post(&url).header("content-type", "application/json").body("{not json").send().unwrap();
    assert_eq!(r.status().as_u16(), 400);
    let (s, _) = post(&c, &url, json!({"text": FRIEND_PURCHASES, "bogus": 1}));
    assert_eq!(s, 400);
    let (s, _) = post(&c, &url, json!({"lang": "steps"}));
    assert_eq!(s, 400);

    // Execution fails on the missing parameter; explain still returns plans.
    let (s, body) = post(&c, &url, json!({"text": "MATCH (a:Buyer) WHERE a.credits > $min RETURN a.username", "explain": true}));
    assert_eq!(s, 422);
    assert_eq!(body["error"]["kind"], "query");
    assert!(body["plan"]["physical"]["ops"].is_array());

    let (s, body) = post(&c, &format!("{base}/update"), json!({"ops": [{"op": "insert_edge", "etype": "Buy", "src": "C3", "dst": 1, "props": {"date": 10}}]}));
    assert_eq!(s, 409);
    assert!(body["error"]["message"].as_str().unwrap().contains("read-only"));
}

#[test]
fn steps_requests_and_params() {
    let base = spawn("g0.json");
    let c = Client::new();
    let steps = json!([
        {"step": "v", "label": "Buyer"},
        {"step": "has", "prop": "credits", "op": ">=", "value": {"$param": "min"}},
        {"step": "values", "prop": "username"}
    ]);
    let (s, body) = post(&c, &format!("{base}/query"), json!({"lang": "steps", "steps": steps, "params": {"min": 8}}));
    assert_eq!(s, 200, "{body}");
    let mut names: Vec<String> = body["rows"].as_array().unwrap().iter().map(|r| r[0].as_str().unwrap().to_string()).collect();
    names.sort();
    assert_eq!(names, ["A1", "C3"]);
}

#[test]
fn updates_on_mvcc_change_results_and_keep_old_snapshots() {
    let base = spawn("g0_mvcc.json");
    let c = Client::new();
    let q = format!("{base}/query");
    let (_, before) = post(&c, &q, json!({"text": FRIEND_PURCHASES}));
    assert_eq!(before["rows"].as_array().unwrap().len(), 3);
    let v0 = before["version"].as_u64().unwrap();

    let insert = json!({"ops": [{"op": "insert_edge", "etype": "Buy", "src": "C3", "dst": 1, "props": {"date": 10}}]});
    let (s, body) = post(&c, &format!("{base}/update"), insert);
    assert_eq!(s, 200);
    assert_eq!(body["version"].as_u64(), Some(v0 + 1));

    let (_, after) = post(&c, &q, json!({"text": FRIEND_PURCHASES}));
    let mut prices: Vec<f64> = after["rows"].as_array().unwrap().iter().map(|r| r[0].as_f64().unwrap()).collect();
    prices.sort_by(f64::total_cmp);
    assert_eq!(prices, [50.0, 50.0, 100.0, 100.0]);

    let (s, pinned) = post(&c, &q, json!({"text": FRIEND_PURCHASES, "snapshot_version": v0, "backend": "batch"}));
    assert_eq!(s, 200);
    assert_eq!(sorted_rows(&pinned), sorted_rows(&before));
    let (s, _) = post(&c, &q, json!({"text": FRIEND_PURCHASES, "snapshot_version": 999}));
    assert_eq!(s, 400);

    let dangling = json!({"ops": [{"op": "insert_edge", "etype": "Buy", "src": "nobody", "dst": 1}]});
    let (s, _) = post(&c, &format!("{base}/update"), dangling);
    assert_eq!(s, 422);
    let (s, _) = post(&c, &format!("{base}/update"), json!({"ops": [{"op": "teleport"}]}));
    assert_eq!(s, 400);
    let (_, h) = get(&c, &format!("{base}/healthz"));
    assert_eq!(h["version"].as_u64(), Some(v0 + 1));
}

#[test]
fn concurrent_http_queries_agree() {
    let base = spawn("g0_mvcc.json");
    let results: Vec<Vec<String>> = std::thread::scope(|s| {
        let hs: Vec<_> = (0..6)
            .map(|_| {
                s.spawn(|| {
                    let c = Client::new();
                    (0..15).map(|_| post(&c, &format!("{base}/query"), json!({"text": FRIEND_PURCHASES_A1})).1).map(|b| sorted_rows(&b)).collect::<Vec<_>>()
                })
            })
            .collect();
        hs.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(results.len(), 90);
    assert!(results.iter().all(|r| *r == ["[100.0]", "[50.0]"]));
}

#[test]
fn cli_and_http_rows_are_byte_identical() {
    let base = spawn("g0.json");
    for text in [FRIEND_PURCHASES, FRIEND_PURCHASES_A1, "MATCH (b:Buyer)-[r:Buy]->(i:Item) RETURN b, r, i.price ORDER BY i.price DESC, r.date"] {
        let (s, body) = post(&Client::new(), &format!("{base}/query"), json!({"text": text}));
        assert_eq!(s, 200);
        let out = Command::new(env!("CARGO_BIN_EXE_flexgraph"))
            .args(["query", "--config", g0("g0.json").to_str().unwrap(), "-q", text])
            .output()
            .unwrap();
        assert!(out.status.success());
        let cli: Json = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(cli["rows"].to_string(), body["rows"].to_string(), "{text}");
    }
}
