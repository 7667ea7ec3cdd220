use flexgraph_core::frontend::cypher_parse;
use flexgraph_core::ir::reference::{canonical_rows, evaluate};
use flexgraph_core::model::Value;
use flexgraph_core::optimizer::{catalog_build, optimize, OptimizerConfig};
use flexgraph_core::pipeline::{Pipeline, Query};
use flexgraph_core::runtime::Backend;
use flexgraph_core::store::build_immutable;
use flexgraph_core::testkit::{fraud_params, fraud_schema, fraud_tables, FRAUD_QUERY};

#[test]
fn exactly_one_account_is_flagged() {
    let snap = build_immutable(&fraud_schema(), &fraud_tables()).unwrap().snapshot();
    let params = fraud_params();
    let dag = cypher_parse(FRAUD_QUERY, snap.schema()).unwrap();
    let want = canonical_rows(evaluate(&dag.to_tree().unwrap(), snap.as_ref(), &params).unwrap().1);
    assert_eq!(want, vec![vec![Value::Int64(1)]]);
    for backend in [Backend::Batch, Backend::Oltp] {
        for shards in [1, 2] {
            let p = Pipeline::new(catalog_build(snap.as_ref(), 3).unwrap(), backend, shards);
            let got = p.run(&Query::Cypher(FRAUD_QUERY.into()), &snap, &params).unwrap();
            assert_eq!(canonical_rows(got.rows), want);
        }
    }
}

#[test]
fn two_alias_predicate_stays_residual() {
    let snap = build_immutable(&fraud_schema(), &fraud_tables()).unwrap().snapshot();
    let dag = cypher_parse(FRAUD_QUERY, snap.schema()).unwrap();
    assert_eq!(dag.kinds().iter().filter(|k| **k == "MATCH").count(), 2);
    assert_eq!(dag.kinds().iter().filter(|k| **k == "GROUP").count(), 2);
    let c = catalog_build(snap.as_ref(), 3).unwrap();
    let opt = optimize(&dag, &c, &snap.capabilities(), &OptimizerConfig::default()).unwrap();
    let plan = opt.dag.to_json();
    let ops = plan["ops"].as_array().unwrap();
    let preds = |kind: &str| -> Vec<String> {
        ops.iter().filter(|o| o["kind"] == kind).filter_map(|o| o["pred"].as_str().map(str::to_string)).collect()
    };
    assert!(preds("SELECT").iter().any(|p| p.contains("b1.date - b2.date")));
    assert!(!preds("SELECT").iter().any(|p| p.contains("IN $SEEDS")));
    let pushed = ops.iter().filter(|o| o["pred"].as_str().is_some_and(|p| p.contains("s.id IN $SEEDS")) && o["kind"] != "SELECT").count();
    assert_eq!(pushed, 2);
}
