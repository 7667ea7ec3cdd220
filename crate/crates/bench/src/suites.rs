//! Benchmark suites. Each returns machine-readable reports.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use flexgraph_core::model::Value;
use flexgraph_core::optimizer::{catalog_build, OptimizerConfig};
use flexgraph_core::pipeline::{Pipeline, Prepared, Query};
use flexgraph_core::retrieval::SnapshotRef;
use flexgraph_core::runtime::{Backend, QueryResult};
use flexgraph_core::store::{build_immutable, GraphTables};
use flexgraph_core::testkit::{g0_schema, random_homogeneous, random_marketplace};

use crate::graphs::{edge_scan, StoreSet};
use crate::report::{timed, Report};

pub const FRIEND_PURCHASES_SELECTIVE: &str =
    r#"MATCH (a:Buyer)-[:Knows]->(b:Buyer)-[:Buy]->(c:Item) WHERE a.username = "U17" RETURN c.price"#;
pub const POINT_QUERY: &str = "MATCH (a:Buyer)-[:Knows]->(b:Buyer) WHERE a.username = $u RETURN b.username";

/// Buyer/Item graph with roughly `edges` edges, half Knows and half Buy.
pub fn marketplace(edges: usize) -> GraphTables {
    random_marketplace(11, (edges / 10).max(10), (edges / 20).max(5), edges / 2, edges - edges / 2)
}

pub fn bench_edge_scan(edges: usize, runs: usize) -> Vec<Report> {
    let (schema, tables) = random_homogeneous(1, (edges / 10).max(10), edges);
    let set = StoreSet::from_tables(&schema, &tables, 64 * 1024);
    set.snapshots()
        .into_iter()
        .map(|(name, snap)| {
            let (ms, n) = timed(runs, || edge_scan(snap.as_ref()).expect("scan"));
            let rates = ms.iter().map(|m| n as f64 / (m / 1e3)).collect();
            Report::new("edge_scan_edges_per_sec", json!({"store": name, "edges": n}), rates)
        })
        .collect()
}

/// Runs a prepared query `runs` times; returns wall-clock samples and the
/// last result.
pub fn run_prepared(p: &Pipeline, prep: &Prepared, snap: &SnapshotRef, params: &HashMap<String, Value>, runs: usize) -> (Vec<f64>, QueryResult) {
    timed(runs, || p.execute(prep, snap, params).expect("query runs"))
}

pub fn toggles() -> Vec<(&'static str, OptimizerConfig)> {
    let all = OptimizerConfig::default();
    vec![
        ("all", all.clone()),
        ("no_filter_push", OptimizerConfig { filter_push: false, ..all.clone() }),
        ("no_fusion", OptimizerConfig { fusion: false, ..all.clone() }),
        ("no_cbo", OptimizerConfig { cbo: false, ..all.clone() }),
        ("none", OptimizerConfig::none()),
    ]
}

pub fn bench_rbo_cbo(edges: usize, runs: usize) -> Vec<Report> {
    let snap = build_immutable(&g0_schema(), &marketplace(edges)).expect("build").snapshot();
    let catalog = catalog_build(snap.as_ref(), 3).expect("catalog");
    let queries = [
        ("friend_purchases_selective", FRIEND_PURCHASES_SELECTIVE),
        ("cheap_items_of_friends", "MATCH (a:Buyer)-[:Knows]->(b:Buyer)-[:Buy]->(c:Item) WHERE c.price < 5.0 AND a.credits > 18 RETURN a.username, c.id"),
        ("co_buyers", "MATCH (a:Buyer)-[:Buy]->(i:Item)<-[:Buy]-(b:Buyer) WHERE i.price > 195.0 RETURN a.username, b.username"),
    ];
    let mut out = Vec::new();
    for (qname, text) in queries {
        for (tname, cfg) in toggles() {
            let p = Pipeline::new(catalog.clone(), Backend::Batch, 1).with_optimizer(cfg);
            let dag = p.parse(&Query::Cypher(text.into()), snap.schema()).expect("parses");
            let prep = p.prepare(dag, &snap, None).expect("prepares");
            let (ms, r) = run_prepared(&p, &prep, &snap, &HashMap::new(), runs);
            let config = json!({"query": qname, "toggle": tname, "rows": r.rows.len()});
            out.push(Report::new("wall_ms", config.clone(), ms));
            out.push(Report::new("intermediate_tuples", config, vec![r.stats.intermediate_tuples as f64]));
        }
    }
    out
}

/// Point-query throughput of the OLTP engine with `shards` shards and as
/// many client threads, measured over `window`.
pub fn point_query_qps(snap: &SnapshotRef, buyers: usize, shards: u32, window: Duration) -> f64 {
    let catalog = catalog_build(snap.as_ref(), 2).expect("catalog");
    let p = Pipeline::new(catalog, Backend::Oltp, shards);
    let dag = p.parse(&Query::Cypher(POINT_QUERY.into()), snap.schema()).expect("parses");
    let prep = p.prepare(dag, snap, None).expect("prepares");
    let done = AtomicU64::new(0);
    let stop = AtomicBool::new(false);
    let start = Instant::now();
    std::thread::scope(|s| {
        for t in 0..shards {
            let (p, prep, done, stop) = (&p, &prep, &done, &stop);
            s.spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(t as u64);
                let mut params = HashMap::new();
                while !stop.load(Ordering::Relaxed) {
                    params.insert("u".to_string(), Value::str(&format!("U{}", rng.gen_range(0..buyers))));
                    p.execute(prep, snap, &params).expect("point query");
                    done.fetch_add(1, Ordering::Relaxed);
                }
            });
        }
        std::thread::sleep(window);
        stop.store(true, Ordering::Relaxed);
    });
    done.load(Ordering::Relaxed) as f64 / start.elapsed().as_secs_f64()
}

pub fn bench_qps(shard_counts: &[u32], edges: usize, window: Duration, runs: usize) -> Vec<Report> {
    let snap = build_immutable(&g0_schema(), &marketplace(edges)).expect("build").snapshot();
    let buyers = (edges / 10).max(10);
    shard_counts
        .iter()
        .map(|&s| {
            let samples = (0..runs.max(1)).map(|_| point_query_qps(&snap, buyers, s, window)).collect();
            Report::new("point_query_qps", json!({"shards": s, "client_threads": s, "edges": edges}), samples)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_produce_reports() {
        let r = bench_edge_scan(2000, 2);
        assert_eq!(r.len(), 3);
        assert!(r.iter().all(|x| x.median > 0.0 && x.samples.len() == 2));
        let r = bench_rbo_cbo(2000, 1);
        assert_eq!(r.len(), 3 * 5 * 2);
        let r = bench_qps(&[1, 2], 2000, Duration::from_millis(50), 1);
        assert!(r.iter().all(|x| x.median > 0.0));
        let j = serde_json::to_value(&r[0]).unwrap();
        for k in ["metric", "config", "samples", "median"] {
            assert!(j.get(k).is_some());
        }
    }
}
