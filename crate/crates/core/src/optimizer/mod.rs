//! Rule- and cost-based optimization of logical plans.

pub mod catalog;
pub mod cbo;
pub mod rules;

use serde_json::{json, Value as Json};

use crate::ir::{IrError, LogicalDag, LogicalOp, PlanTree};
use crate::model::PropertyGraphSchema;
use crate::retrieval::CapabilitySet;

pub use catalog::{catalog_build, catalog_build_bounded, freq_estimate, pattern_canon, Catalog};
pub use cbo::{cbo_order, lower_plan, CostModel, MatchPlan, MatchStep};
pub use rules::{rule_edge_vertex_fusion, rule_filter_push_into_match};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptError {
    #[error("catalog would hold {patterns} patterns, above the bound of {bound}")]
    CatalogTooLarge { patterns: usize, bound: usize },
    #[error("pattern has {0} vertices; canonical codes support at most 8")]
    PatternTooLarge(usize),
    #[error("pattern vertex {0} has no single type")]
    Untyped(String),
    #[error("catalog k must be between 1 and 4, got {0}")]
    BadK(u8),
    #[error("catalog: {0}")]
    Catalog(String),
    #[error(transparent)]
    Ir(#[from] IrError),
}

#[derive(Clone, Debug)]
pub struct OptimizerConfig {
    pub filter_push: bool,
    pub cbo: bool,
    pub fusion: bool,
    /// Shards the plan will run on; fusion is restricted above one.
    pub shards: u32,
    /// Overrides the vertex order of any MATCH over exactly these aliases.
    pub forced_order: Option<Vec<String>>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { filter_push: true, cbo: true, fusion: true, shards: 1, forced_order: None }
    }
}

impl OptimizerConfig {
    pub fn none() -> Self {
        OptimizerConfig { filter_push: false, cbo: false, fusion: false, shards: 1, forced_order: None }
    }
}

pub struct Optimized {
    pub dag: LogicalDag,
    pub matches: Vec<MatchPlan>,
}

fn expand_matches(
    t: &PlanTree,
    catalog: &Catalog,
    schema: &PropertyGraphSchema,
    caps: &CapabilitySet,
    cfg: &OptimizerConfig,
    plans: &mut Vec<MatchPlan>,
) -> PlanTree {
    if let LogicalOp::Match { pattern } = &t.op {
        let model = CostModel { pattern, catalog, schema, use_pk: caps.index.pk_lookup };
        let forced = cfg.forced_order.as_ref().and_then(|names| {
            let idx: Option<Vec<usize>> = names.iter().map(|n| pattern.vertex_index(n)).collect();
            idx.filter(|o| o.len() == pattern.vertices.len() && model.connected_orders().contains(o))
        });
        let order = match forced {
            Some(o) => o,
            None if !cfg.cbo => pattern.bfs_order(),
            None if pattern.vertices.len() <= cbo::DP_MAX_VERTICES => model.dp_order(),
            None => model.greedy_order(),
        };
        let plan = model.plan_for(&order);
        let tree = lower_plan(pattern, &plan, schema);
        plans.push(plan);
        return tree;
    }
    PlanTree { op: t.op.clone(), inputs: t.inputs.iter().map(|c| expand_matches(c, catalog, schema, caps, cfg, plans)).collect() }
}

/// Filter push-down, then MATCH ordering and lowering, then push-down and
/// fusion to a fixpoint. MATCH operators are always lowered; with `cbo`
/// off they follow BFS order.
pub fn optimize(dag: &LogicalDag, catalog: &Catalog, caps: &CapabilitySet, cfg: &OptimizerConfig) -> Result<Optimized, OptError> {
    let schema = dag.graph_schema();
    let mut t = dag.to_tree()?;
    if cfg.filter_push {
        t = rule_filter_push_into_match(&t);
    }
    let mut matches = Vec::new();
    t = expand_matches(&t, catalog, schema, caps, cfg, &mut matches);
    loop {
        let mut next = t.clone();
        if cfg.filter_push {
            next = rule_filter_push_into_match(&next);
        }
        if cfg.fusion {
            next = rule_edge_vertex_fusion(&next, cfg.shards);
        }
        if next == t {
            break;
        }
        t = next;
    }
    Ok(Optimized { dag: LogicalDag::from_tree(schema.clone(), &t)?, matches })
}

/// Logical and optimized plans plus the chosen MATCH orders with their
/// per-step estimated frequencies and total cost.
pub fn explain(dag: &LogicalDag, catalog: &Catalog, caps: &CapabilitySet, cfg: &OptimizerConfig) -> Result<Json, OptError> {
    let opt = optimize(dag, catalog, caps, cfg)?;
    Ok(json!({
        "logical": dag.to_json(),
        "optimized": opt.dag.to_json(),
        "matches": opt.matches.iter().map(|m| json!({
            "order": m.order,
            "steps": m.steps,
            "prefix_freq": m.prefix_freq,
            "cost": m.cost,
        })).collect::<Vec<_>>(),
        "total_cost": opt.matches.iter().map(|m| m.cost).sum::<u64>(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::cypher_parse;
    use crate::ir::reference::{canonical_rows, evaluate};
    use crate::ir::VertexSource;
    use crate::testkit::g0;
    use std::collections::HashMap;

    const FRIEND_BUYS: &str = r#"MATCH (a:Buyer)-[:Knows]->(b:Buyer)-[:Buy]->(c:Item) WHERE a.username = "A1" RETURN c.price"#;

    fn setup() -> (crate::retrieval::SnapshotRef, Catalog) {
        let snap = g0().snapshot();
        let c = catalog_build(snap.as_ref(), 3).unwrap();
        (snap, c)
    }

    #[test]
    fn friend_purchases_become_scan_and_two_fused_expands() {
        let (snap, c) = setup();
        let dag = cypher_parse(FRIEND_BUYS, snap.schema()).unwrap();
        let opt = optimize(&dag, &c, &snap.capabilities(), &OptimizerConfig::default()).unwrap();
        let t = opt.dag.to_tree().unwrap();
        assert_eq!(t.kinds(), vec!["GET_VERTEX", "EXPAND_VERTEX", "EXPAND_VERTEX", "PROJECT", "SINK"]);
        let scan = &t.inputs[0].inputs[0].inputs[0].inputs[0].op;
        assert!(matches!(scan, LogicalOp::GetVertex { mode: VertexSource::Scan, pred: Some(_), .. }));
        // Idempotent on its own output.
        let again = optimize(&opt.dag, &c, &snap.capabilities(), &OptimizerConfig::default()).unwrap();
        assert_eq!(again.dag.to_tree().unwrap(), t);
    }

    #[test]
    fn read_edges_are_not_fused() {
        let (snap, c) = setup();
        let q = "MATCH (v:Buyer)-[b1:Buy]->(i:Item)<-[b2:Buy]-(s:Buyer) WHERE b1.date - b2.date < 5 RETURN v, s";
        let dag = cypher_parse(q, snap.schema()).unwrap();
        let opt = optimize(&dag, &c, &snap.capabilities(), &OptimizerConfig::default()).unwrap();
        let kinds = opt.dag.kinds();
        assert!(!kinds.contains(&"EXPAND_VERTEX"), "{kinds:?}");
        assert!(kinds.contains(&"SELECT"));
    }

    #[test]
    fn predicate_blocks_fusion_only_when_sharded() {
        let (snap, c) = setup();
        let q = "MATCH (a:Buyer)-[:Buy]->(i:Item) WHERE i.price > 60.0 RETURN a";
        let dag = cypher_parse(q, snap.schema()).unwrap();
        let cfg = |shards| OptimizerConfig { shards, cbo: false, ..OptimizerConfig::default() };
        let one = optimize(&dag, &c, &snap.capabilities(), &cfg(1)).unwrap().dag.kinds();
        let four = optimize(&dag, &c, &snap.capabilities(), &cfg(4)).unwrap().dag.kinds();
        assert!(one.contains(&"EXPAND_VERTEX"));
        assert!(!four.contains(&"EXPAND_VERTEX"));
    }

    #[test]
    fn no_graph_ops_means_unchanged() {
        let (snap, c) = setup();
        let dag = cypher_parse("MATCH (a:Buyer) RETURN a.credits AS c ORDER BY c", snap.schema()).unwrap();
        let opt = optimize(&dag, &c, &snap.capabilities(), &OptimizerConfig::default()).unwrap();
        assert_eq!(opt.dag.kinds(), vec!["GET_VERTEX", "PROJECT", "ORDER", "SINK"]);
    }

    #[test]
    fn every_configuration_preserves_results() {
        let (snap, c) = setup();
        let params = HashMap::from([("w".to_string(), crate::model::Value::Int64(2))]);
        for q in [
            FRIEND_BUYS,
            "MATCH (a:Buyer)-[:Knows]-(b:Buyer) WITH a, COUNT(b) AS n WHERE n >= 1 RETURN a.username, n",
            "MATCH (v:Buyer)-[:Buy]->(i:Item) WITH v, COUNT(i) AS c1 MATCH (v)-[:Knows]-(f:Buyer), (f)-[:Buy]->(j:Item) \
             WITH v, c1, COUNT(j) AS c2 WHERE c1 * $w + c2 > 1 RETURN v.username",
            "MATCH (s:Seller)-[:Sell]->(i:Item)<-[r:Buy]-(b:Buyer) WHERE r.date > 1 RETURN b.username, i.id",
        ] {
            let dag = cypher_parse(q, snap.schema()).unwrap();
            let want = canonical_rows(evaluate(&dag.to_tree().unwrap(), snap.as_ref(), &params).unwrap().1);
            for bits in 0..8u8 {
                let cfg = OptimizerConfig { filter_push: bits & 1 != 0, cbo: bits & 2 != 0, fusion: bits & 4 != 0, ..Default::default() };
                let opt = optimize(&dag, &c, &snap.capabilities(), &cfg).unwrap();
                let got = canonical_rows(evaluate(&opt.dag.to_tree().unwrap(), snap.as_ref(), &params).unwrap().1);
                assert_eq!(got, want, "{q} {cfg:?}");
            }
        }
    }

    #[test]
    fn explain_reports_costs() {
        let (snap, c) = setup();
        let dag = cypher_parse(FRIEND_BUYS, snap.schema()).unwrap();
        let e = explain(&dag, &c, &snap.capabilities(), &OptimizerConfig::default()).unwrap();
        assert_eq!(e["matches"][0]["order"], json!(["a", "b", "c"]));
        assert_eq!(e["matches"][0]["prefix_freq"].as_array().unwrap().len(), 3);
        assert!(e["total_cost"].as_u64().unwrap() >= 1);
    }
}
