use std::collections::HashMap;

use flexgraph_core::frontend::cypher_parse;
use flexgraph_core::ir::reference::{canonical_rows, evaluate};
use flexgraph_core::optimizer::{catalog_build, OptimizerConfig};
use flexgraph_core::pipeline::{Pipeline, Query};
use flexgraph_core::retrieval::{GraphStore, SnapshotRef};
use flexgraph_core::runtime::Backend;
use flexgraph_core::store::{build_immutable, MvccStore};
use flexgraph_core::testkit::{random_query, random_schema, random_tables};

fn check(snap: &SnapshotRef, text: &str) {
    let dag = cypher_parse(text, snap.schema()).unwrap_or_else(|d| panic!("{text}: {d}"));
    let want = canonical_rows(evaluate(&dag.to_tree().unwrap(), snap.as_ref(), &HashMap::new()).unwrap().1);
    let catalog = catalog_build(snap.as_ref(), 2).unwrap();
    for backend in [Backend::Batch, Backend::Oltp] {
        for shards in [1, 3] {
            for cfg in [OptimizerConfig::default(), OptimizerConfig::none()] {
                let p = Pipeline::new(catalog.clone(), backend, shards).with_optimizer(cfg);
                let got = p.run(&Query::Cypher(text.to_string()), snap, &HashMap::new()).unwrap_or_else(|e| panic!("{text}: {e}"));
                assert_eq!(canonical_rows(got.rows), want, "{backend:?} shards={shards} {text}");
            }
        }
    }
}

#[test]
fn random_queries_match_the_oracle_on_immutable_graphs() {
    for g in 0..12u64 {
        let snap = build_immutable(&random_schema(), &random_tables(g, 40 + 10 * g as usize, 150 + 30 * g as usize)).unwrap().snapshot();
        for q in 0..8u64 {
            check(&snap, &random_query(g * 1000 + q));
        }
    }
}

#[test]
fn random_queries_match_the_oracle_on_mvcc_graphs() {
    for g in 0..6u64 {
        let store = MvccStore::from_tables(&random_schema(), &random_tables(100 + g, 60, 250)).unwrap();
        let snap = store.snapshot_latest().unwrap();
        for q in 0..8u64 {
            check(&snap, &random_query(50_000 + g * 1000 + q));
        }
    }
}

#[test]
fn generated_queries_are_varied() {
    let qs: Vec<String> = (0..200).map(random_query).collect();
    assert!(qs.iter().any(|q| q.contains("count(*)")));
    assert!(qs.iter().any(|q| q.contains("*1..2")));
    assert!(qs.iter().any(|q| q.contains("LIMIT")));
    assert!(qs.iter().any(|q| q.contains("]-(")));
    assert!(qs.iter().any(|q| q.contains("WHERE")));
}
