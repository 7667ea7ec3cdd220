//! Physical plans and the two execution backends: a stage-at-a-time
//! shard-parallel batch engine and a mailbox-per-shard low-latency engine.

mod batch;
mod kernel;
mod oltp;
mod update;

use std::collections::HashMap;
use std::time::Duration;

use serde::Serialize;
use serde_json::{json, Value as Json};

use crate::ir::{AggItem, Expr, FieldSchema, IrError, LogicalDag, LogicalOp, PlanTree, VertexSource};
use crate::model::{CmpOp, PropertyGraphSchema};
use crate::retrieval::{CapabilitySet, RetrievalError};
use crate::store::StoreError;

pub use batch::execute_batch;
pub use kernel::Row;
pub use oltp::OltpEngine;
pub use update::{apply_updates, parse_update};

pub const DEFAULT_BATCH_SIZE: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Batch,
    Oltp,
}

/// How a SOURCE reaches its vertices.
#[derive(Clone, Debug, PartialEq)]
pub enum SourceAccess {
    Scan,
    /// Primary-key equality; the key is a literal or parameter.
    PkLookup { key: Expr },
    /// Conjunction of `prop op constant` evaluated by the store.
    Pushdown { conds: Vec<(String, CmpOp, Expr)> },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Route {
    /// Repartition by the shard owning the vertex in this column.
    ByAlias(String),
    /// Collect every row on one worker.
    Gather,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PhysicalOp {
    /// A GET_VERTEX scan; its predicate is still evaluated on every row.
    Source { scan: LogicalOp, access: SourceAccess },
    /// EXPAND_EDGE, EXPAND_VERTEX or PATH.
    FlatMap(LogicalOp),
    /// GET_VERTEX from an edge, or PROJECT.
    Map(LogicalOp),
    Filter { pred: Expr },
    Sort { keys: Vec<(Expr, bool)>, limit: Option<u64> },
    GroupBy { keys: Vec<(Expr, String)>, aggs: Vec<AggItem> },
    Join { on: Vec<String> },
    Limit { n: u64 },
    Exchange { route: Route },
    Sink,
}

impl PhysicalOp {
    pub fn kind(&self) -> &'static str {
        match self {
            PhysicalOp::Source { .. } => "SOURCE",
            PhysicalOp::FlatMap(_) => "FLATMAP",
            PhysicalOp::Map(_) => "MAP",
            PhysicalOp::Filter { .. } => "FILTER",
            PhysicalOp::Sort { .. } => "SORT",
            PhysicalOp::GroupBy { .. } => "GROUPBY",
            PhysicalOp::Join { .. } => "JOIN",
            PhysicalOp::Limit { .. } => "LIMIT",
            PhysicalOp::Exchange { .. } => "EXCHANGE",
            PhysicalOp::Sink => "SINK",
        }
    }

    fn detail(&self) -> String {
        match self {
            PhysicalOp::Source { scan, access } => {
                let a = match access {
                    SourceAccess::Scan => "scan".to_string(),
                    SourceAccess::PkLookup { key } => format!("pk = {key}"),
                    SourceAccess::Pushdown { conds } => {
                        let c: Vec<String> = conds.iter().map(|(p, op, v)| format!("{p} {} {v}", op.symbol())).collect();
                        format!("pushdown {}", c.join(" AND "))
                    }
                };
                format!("{} {a}", scan.kind())
            }
            PhysicalOp::FlatMap(op) | PhysicalOp::Map(op) => op.kind().to_string(),
            PhysicalOp::Filter { pred } => pred.to_string(),
            PhysicalOp::Exchange { route: Route::ByAlias(a) } => format!("by {a}"),
            PhysicalOp::Exchange { route: Route::Gather } => "gather".into(),
            PhysicalOp::Join { on } => on.join(", "),
            PhysicalOp::Limit { n } => n.to_string(),
            PhysicalOp::Sort { limit, .. } => limit.map(|l| format!("limit {l}")).unwrap_or_default(),
            _ => String::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PhysNode {
    pub op: PhysicalOp,
    pub inputs: Vec<PhysNode>,
    /// Output fields.
    pub schema: FieldSchema,
}

impl PhysNode {
    /// Pre-order walk: this node, then inputs left to right.
    pub fn preorder(&self) -> Vec<&PhysNode> {
        let mut out = vec![self];
        for i in &self.inputs {
            out.extend(i.preorder());
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct PhysicalPlan {
    pub root: PhysNode,
    pub backend: Backend,
    pub shards: u32,
    pub graph: std::sync::Arc<PropertyGraphSchema>,
}

impl PhysicalPlan {
    /// Op kinds in dataflow order (sources first).
    pub fn kinds(&self) -> Vec<&'static str> {
        let mut v: Vec<&'static str> = self.root.preorder().iter().map(|n| n.op.kind()).collect();
        v.reverse();
        v
    }

    pub fn to_json(&self) -> Json {
        let nodes = self.root.preorder();
        let ids: HashMap<*const PhysNode, usize> = nodes.iter().enumerate().map(|(i, n)| (*n as *const _, i)).collect();
        let mut edges = Vec::new();
        let ops: Vec<Json> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                for c in &n.inputs {
                    edges.push(json!([ids[&(c as *const _)], i]));
                }
                json!({"id": i, "kind": n.op.kind(), "detail": n.op.detail(), "fields": n.schema.names()})
            })
            .collect();
        json!({"backend": self.backend, "shards": self.shards, "ops": ops, "edges": edges})
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("operator {0} must be lowered before execution")]
    UnloweredOp(&'static str),
    #[error("{op} failed: {cause}")]
    Op { op: &'static str, cause: String },
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("bad update: {0}")]
    BadUpdate(String),
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct OpStat {
    pub kind: &'static str,
    pub rows_in: u64,
    pub rows_out: u64,
    pub micros: u64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Stats {
    pub latency_us: u64,
    pub rows_emitted: u64,
    /// Rows entering every operator except EXCHANGE.
    pub intermediate_tuples: u64,
    /// Per physical op, in plan pre-order.
    pub ops: Vec<OpStat>,
}

#[derive(Clone, Debug)]
pub struct QueryResult {
    pub columns: FieldSchema,
    pub rows: Vec<Row>,
    pub stats: Stats,
}

impl QueryResult {
    pub fn rows_json(&self, schema: &PropertyGraphSchema) -> Json {
        Json::Array(self.rows.iter().map(|r| Json::Array(r.iter().map(|v| v.to_json(Some(schema))).collect())).collect())
    }

    pub fn to_json(&self, schema: &PropertyGraphSchema) -> Json {
        json!({
            "columns": self.columns.fields.iter().map(|f| json!({"name": f.name, "type": f.dtype.to_string()})).collect::<Vec<_>>(),
            "rows": self.rows_json(schema),
            "stats": self.stats,
        })
    }
}

pub(crate) fn set_latency(stats: &mut Stats, d: Duration) {
    stats.latency_us = d.as_micros() as u64;
}

fn pk_key(scan: &LogicalOp, graph: &PropertyGraphSchema) -> Option<Expr> {
    let LogicalOp::GetVertex { label: Some(t), pred: Some(pred), out, .. } = scan else { return None };
    let pk = &graph.vertex_type(*t).primary_key;
    pred.conjuncts().into_iter().find_map(|c| match c {
        Expr::Cmp(CmpOp::Eq, l, r) => match (*l, *r) {
            (Expr::Prop(a, k), v @ (Expr::Lit(_) | Expr::Param(_))) | (v @ (Expr::Lit(_) | Expr::Param(_)), Expr::Prop(a, k))
                if a == *out && k == *pk =>
            {
                Some(v)
            }
            _ => None,
        },
        _ => None,
    })
}

fn pushdown_conds(scan: &LogicalOp) -> Vec<(String, CmpOp, Expr)> {
    let LogicalOp::GetVertex { label: Some(_), pred: Some(pred), out, .. } = scan else { return vec![] };
    pred.conjuncts()
        .into_iter()
        .filter_map(|c| match c {
            Expr::Cmp(op, l, r) => match (*l, *r) {
                (Expr::Prop(a, k), v @ (Expr::Lit(_) | Expr::Param(_))) if a == *out => Some((k, op, v)),
                (v @ (Expr::Lit(_) | Expr::Param(_)), Expr::Prop(a, k)) if a == *out => Some((k, op.flip(), v)),
                _ => None,
            },
            _ => None,
        })
        .collect()
}

fn node(op: PhysicalOp, inputs: Vec<PhysNode>, schema: FieldSchema) -> PhysNode {
    PhysNode { op, inputs, schema }
}

fn exchange(input: PhysNode, route: Route) -> PhysNode {
    let schema = input.schema.clone();
    node(PhysicalOp::Exchange { route }, vec![input], schema)
}

/// Maps each logical operator to its physical counterpart. Batch plans
/// over several shards get an EXCHANGE by anchor vertex before every
/// FLATMAP and a gathering EXCHANGE before SORT, GROUPBY, LIMIT and JOIN.
pub fn lower(dag: &LogicalDag, caps: &CapabilitySet, backend: Backend, shards: u32) -> Result<PhysicalPlan, ExecError> {
    let tree = dag.to_tree()?;
    let graph = dag.graph_schema().clone();
    let shards = shards.max(1);
    let distributed = backend == Backend::Batch && shards > 1;
    fn go(t: &PlanTree, g: &PropertyGraphSchema, caps: &CapabilitySet, distributed: bool) -> Result<PhysNode, ExecError> {
        let mut inputs: Vec<PhysNode> = t.inputs.iter().map(|c| go(c, g, caps, distributed)).collect::<Result<_, _>>()?;
        let in_schemas: Vec<&FieldSchema> = inputs.iter().map(|n| &n.schema).collect();
        let schema = t.op.infer_schema(&in_schemas, g)?;
        let gather = |inputs: Vec<PhysNode>| -> Vec<PhysNode> {
            if distributed {
                inputs.into_iter().map(|i| exchange(i, Route::Gather)).collect()
            } else {
                inputs
            }
        };
        let op = match &t.op {
            LogicalOp::Match { .. } => return Err(ExecError::UnloweredOp("MATCH")),
            LogicalOp::GetVertex { mode: VertexSource::Scan, .. } => {
                let access = if let Some(key) = pk_key(&t.op, g).filter(|_| caps.index.pk_lookup) {
                    SourceAccess::PkLookup { key }
                } else {
                    let conds = pushdown_conds(&t.op);
                    if caps.predicate.vertex_filter_pushdown && !conds.is_empty() {
                        SourceAccess::Pushdown { conds }
                    } else {
                        SourceAccess::Scan
                    }
                };
                PhysicalOp::Source { scan: t.op.clone(), access }
            }
            LogicalOp::GetVertex { .. } | LogicalOp::Project { .. } => PhysicalOp::Map(t.op.clone()),
            LogicalOp::ExpandEdge { input, .. } | LogicalOp::ExpandVertex { input, .. } | LogicalOp::Path { input, .. } => {
                if distributed {
                    inputs = inputs.into_iter().map(|i| exchange(i, Route::ByAlias(input.clone()))).collect();
                }
                PhysicalOp::FlatMap(t.op.clone())
            }
            LogicalOp::Select { pred } => PhysicalOp::Filter { pred: pred.clone() },
            LogicalOp::Order { keys, limit } => {
                inputs = gather(inputs);
                PhysicalOp::Sort { keys: keys.clone(), limit: *limit }
            }
            LogicalOp::Group { keys, aggs } => {
                inputs = gather(inputs);
                PhysicalOp::GroupBy { keys: keys.clone(), aggs: aggs.clone() }
            }
            LogicalOp::Limit { n } => {
                inputs = gather(inputs);
                PhysicalOp::Limit { n: *n }
            }
            LogicalOp::Join { on } => {
                inputs = gather(inputs);
                PhysicalOp::Join { on: on.clone() }
            }
            LogicalOp::Sink => PhysicalOp::Sink,
        };
        Ok(node(op, inputs, schema))
    }
    let root = go(&tree, &graph, caps, distributed)?;
    Ok(PhysicalPlan { root, backend, shards, graph })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::cypher_parse;
    use crate::optimizer::{catalog_build, optimize, OptimizerConfig};
    use crate::ir::reference::{canonical_rows, evaluate};
    use crate::model::Value;
    use crate::retrieval::{GraphStore, SnapshotRef};
    use crate::store::{MvccStore, StoreError};
    use crate::testkit::{g0, g0_schema, g0_tables, random_marketplace, random_schema, random_tables};
    use std::sync::Arc;

    fn plan_for(text: &str, snap: &SnapshotRef, backend: Backend, shards: u32) -> PhysicalPlan {
        let c = catalog_build(snap.as_ref(), 2).unwrap();
        let dag = cypher_parse(text, snap.schema()).unwrap();
        let cfg = OptimizerConfig { shards, ..OptimizerConfig::default() };
        let opt = optimize(&dag, &c, &snap.capabilities(), &cfg).unwrap().dag;
        lower(&opt, &snap.capabilities(), backend, shards).unwrap()
    }

    fn floats(r: &QueryResult) -> Vec<f64> {
        r.rows.iter().map(|row| row[0].as_f64().unwrap()).collect()
    }

    fn no_params() -> HashMap<String, Value> {
        HashMap::new()
    }

    pub(crate) const FRIEND_BUYS: &str =
        r#"MATCH (a:Buyer)-[:Knows]->(b:Buyer)-[:Buy]->(c:Item) WHERE a.username = "A1" RETURN c.price"#;

    #[test]
    fn lowering_maps_each_operator() {
        let snap = g0().snapshot();
        let c = catalog_build(snap.as_ref(), 2).unwrap();
        let dag = cypher_parse(FRIEND_BUYS, snap.schema()).unwrap();
        let opt = optimize(&dag, &c, &snap.capabilities(), &OptimizerConfig::default()).unwrap().dag;
        let plan = lower(&opt, &snap.capabilities(), Backend::Batch, 1).unwrap();
        assert_eq!(plan.kinds(), vec!["SOURCE", "FLATMAP", "FLATMAP", "MAP", "SINK"]);
        let plan = lower(&opt, &snap.capabilities(), Backend::Batch, 4).unwrap();
        assert_eq!(plan.kinds(), vec!["SOURCE", "EXCHANGE", "FLATMAP", "EXCHANGE", "FLATMAP", "MAP", "SINK"]);
        let plan = lower(&opt, &snap.capabilities(), Backend::Oltp, 4).unwrap();
        assert!(!plan.kinds().contains(&"EXCHANGE"));
        let PhysicalOp::Source { access, .. } = &plan.root.preorder().last().unwrap().op else { panic!() };
        assert!(matches!(access, SourceAccess::PkLookup { .. }));
        assert_eq!(plan.to_json()["ops"].as_array().unwrap().len(), 5);
    }

    #[test]
    fn unlowered_match_is_rejected() {
        let snap = g0().snapshot();
        let dag = cypher_parse(FRIEND_BUYS, snap.schema()).unwrap();
        assert!(matches!(lower(&dag, &snap.capabilities(), Backend::Batch, 1), Err(ExecError::UnloweredOp("MATCH"))));
    }

    #[test]
    fn friend_purchases_on_every_backend() {
        let snap = g0().snapshot();
        let all_friends = "MATCH (a:Buyer)-[:Knows]->(b:Buyer)-[:Buy]->(c:Item) RETURN c.price";
        for (q, want) in [(all_friends, vec![100.0, 50.0, 50.0]), (FRIEND_BUYS, vec![100.0, 50.0])] {
            for shards in [1, 4] {
                let plan = plan_for(q, &snap, Backend::Batch, shards);
                let mut got = floats(&execute_batch(&plan, snap.as_ref(), &no_params()).unwrap());
                got.sort_by(|a, b| b.total_cmp(a));
                assert_eq!(got, want, "batch shards={shards} {q}");
                let engine = OltpEngine::new(shards);
                let plan = plan_for(q, &snap, Backend::Oltp, shards);
                let mut got = floats(&engine.execute(&plan, &snap, &no_params()).unwrap());
                got.sort_by(|a, b| b.total_cmp(a));
                assert_eq!(got, want, "oltp shards={shards} {q}");
            }
        }
    }

    #[test]
    fn order_desc_limit_two() {
        let snap = g0().snapshot();
        let q = "MATCH (a:Buyer)-[:Knows]->(b:Buyer)-[:Buy]->(c:Item) RETURN c.price ORDER BY c.price DESC LIMIT 2";
        for shards in [1, 3] {
            let plan = plan_for(q, &snap, Backend::Batch, shards);
            assert_eq!(floats(&execute_batch(&plan, snap.as_ref(), &no_params()).unwrap()), vec![100.0, 50.0]);
            let engine = OltpEngine::new(shards);
            let plan = plan_for(q, &snap, Backend::Oltp, shards);
            assert_eq!(floats(&engine.execute(&plan, &snap, &no_params()).unwrap()), vec![100.0, 50.0]);
        }
    }

    #[test]
    fn backends_and_shard_counts_agree_with_the_oracle() {
        let queries = [
            "MATCH (a:A)-[:AB]->(b:B)-[:BC]->(c:C) WHERE a.val > 20 RETURN a.id, c.id",
            "MATCH (a:A)-[:AA]->(x:A) RETURN a.tag AS t, count(*) AS n",
            "MATCH (c:C)-[:CA]->(a:A)-[:AB]->(b:B) WHERE b.w < 0.5 RETURN DISTINCT a.id ORDER BY a.id LIMIT 5",
            "MATCH (a:A)-[:AA]->(b:A)-[:AA]->(c:A)-[:AA]->(a) RETURN a.id, b.id, c.id",
        ];
        let snap = crate::store::build_immutable(&random_schema(), &random_tables(7, 120, 600)).unwrap().snapshot();
        for q in queries {
            let dag = cypher_parse(q, snap.schema()).unwrap();
            let want = canonical_rows(evaluate(&dag.to_tree().unwrap(), snap.as_ref(), &no_params()).unwrap().1);
            for shards in [1, 2, 4] {
                let plan = plan_for(q, &snap, Backend::Batch, shards);
                let got = execute_batch(&plan, snap.as_ref(), &no_params()).unwrap();
                assert_eq!(canonical_rows(got.rows), want, "batch {shards} {q}");
                let engine = OltpEngine::new(shards);
                let plan = plan_for(q, &snap, Backend::Oltp, shards);
                let got = engine.execute(&plan, &snap, &no_params()).unwrap();
                assert_eq!(canonical_rows(got.rows), want, "oltp {shards} {q}");
            }
        }
    }

    #[test]
    fn concurrent_oltp_queries_return_identical_results() {
        let snap = crate::store::build_immutable(&g0_schema(), &random_marketplace(3, 50, 40, 200, 300)).unwrap().snapshot();
        let q = r#"MATCH (a:Buyer)-[:Knows]->(b:Buyer)-[:Buy]->(c:Item) WHERE a.username = $name RETURN c.id, c.price"#;
        let engine = Arc::new(OltpEngine::new(4));
        let plan = Arc::new(plan_for(q, &snap, Backend::Oltp, 4));
        let pk = snap.vertex_property_at(crate::model::VertexRef { vtype: 0, idx: 0 }, 0).unwrap();
        let params: HashMap<String, Value> = [("name".to_string(), pk)].into();
        let want = canonical_rows(engine.execute(&plan, &snap, &params).unwrap().rows);
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..8)
                .map(|_| {
                    let (engine, plan, snap, params) = (engine.clone(), plan.clone(), snap.clone(), params.clone());
                    s.spawn(move || (0..125).map(|_| canonical_rows(engine.execute(&plan, &snap, &params).unwrap().rows)).collect::<Vec<_>>())
                })
                .collect();
            let mut n = 0;
            for h in handles {
                for got in h.join().unwrap() {
                    assert_eq!(got, want);
                    n += 1;
                }
            }
            assert_eq!(n, 1000);
        });
    }

    #[test]
    fn queries_stay_pinned_to_their_snapshot() {
        let store = MvccStore::from_tables(&g0_schema(), &g0_tables()).unwrap();
        let q = r#"MATCH (a:Buyer)-[:Buy]->(c:Item) WHERE a.username = "A1" RETURN c.price"#;
        let old: SnapshotRef = store.snapshot_latest().unwrap();
        let v0 = store.committed_version();
        let ops = parse_update(&serde_json::json!({"ops": [{"op": "insert_edge", "etype": "Buy", "src": "A1", "dst": 2, "props": {"date": 11}}]})).unwrap();
        let v1 = apply_updates(&store, ops).unwrap();
        assert_eq!(v1, v0 + 1);
        let new = store.snapshot_latest().unwrap();
        let engine = OltpEngine::new(2);
        let mut before = floats(&engine.execute(&plan_for(q, &old, Backend::Oltp, 2), &old, &no_params()).unwrap());
        let mut after = floats(&execute_batch(&plan_for(q, &new, Backend::Batch, 2), new.as_ref(), &no_params()).unwrap());
        before.sort_by(f64::total_cmp);
        after.sort_by(f64::total_cmp);
        assert_eq!(before, vec![100.0]);
        assert_eq!(after, vec![50.0, 100.0]);
        let pinned = store.snapshot_at(v0).unwrap();
        let again = floats(&execute_batch(&plan_for(q, &pinned, Backend::Batch, 1), pinned.as_ref(), &no_params()).unwrap());
        assert_eq!(again, vec![100.0]);
    }

    #[test]
    fn dangling_update_leaves_the_version_alone() {
        let store = MvccStore::from_tables(&g0_schema(), &g0_tables()).unwrap();
        let v0 = store.committed_version();
        let ops = parse_update(&serde_json::json!([
            {"op": "insert_edge", "etype": "Knows", "src": "A1", "dst": "C3"},
            {"op": "insert_edge", "etype": "Buy", "src": "ZZ", "dst": 1, "props": {"date": 1}}
        ]))
        .unwrap();
        let err = apply_updates(&store, ops).unwrap_err();
        assert!(matches!(err, ExecError::Store(StoreError::DanglingEdge { .. })), "{err}");
        assert_eq!(store.committed_version(), v0);
    }

    #[test]
    fn malformed_update_json_is_rejected() {
        assert!(matches!(parse_update(&serde_json::json!({"ops": [{"op": "explode"}]})), Err(ExecError::BadUpdate(_))));
        assert!(matches!(parse_update(&serde_json::json!(3)), Err(ExecError::BadUpdate(_))));
    }
}
