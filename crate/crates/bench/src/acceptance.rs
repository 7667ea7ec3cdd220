//! Headless acceptance checks, one per numbered criterion. Each returns a
//! pass/fail outcome with the measured numbers behind it.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flexgraph_core::analytics::{bfs, pagerank, pagerank_inlined_csr};
use flexgraph_core::frontend::cypher_parse;
use flexgraph_core::ir::reference::{canonical_rows, evaluate};
use flexgraph_core::ir::{match_count, PatternGraph};
use flexgraph_core::model::{CmpOp, PropertyGraphSchema, TypeId, Value, VertexRef};
use flexgraph_core::optimizer::catalog::typed_pattern;
use flexgraph_core::optimizer::{catalog_build, freq_estimate, optimize, CostModel, OptimizerConfig};
use flexgraph_core::pipeline::{Pipeline, Query};
use flexgraph_core::retrieval::{GraphStore, PropertyPredicate, SnapshotRef};
use flexgraph_core::runtime::{Backend, Row};
use flexgraph_core::store::archive::{build_store_from_archive, convert_csv_to_archive, load_csv, write_csv, Codec, CsvSpec, StoreKind};
use flexgraph_core::store::mvcc::Mutation;
use flexgraph_core::store::{build_immutable, EdgeRow, GraphTables, MvccStore};
use flexgraph_core::testkit::{
    fraud_params, fraud_schema, fraud_tables, g0_schema, random_homogeneous, random_query, random_schema, random_tables, FRAUD_QUERY, TAGS,
};

use crate::graphs::{edge_scan, fingerprint, fixture_dir, StoreSet};
use crate::report::{median, timed};
use crate::suites::{marketplace, point_query_qps, FRIEND_PURCHASES_SELECTIVE, POINT_QUERY};

#[derive(Clone, Debug)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!("criterion {} {}: {} ({})", self.id, self.name, if self.pass { "PASS" } else { "FAIL" }, self.detail)
    }
}

/// Sizes default to the criteria's stated scale.
#[derive(Clone, Debug)]
pub struct AcceptanceConfig {
    pub oracle_graphs: usize,
    pub oracle_queries: usize,
    pub large_edges: usize,
    pub rbo_edges: usize,
    pub replay_schedules: usize,
    pub qps_window: Duration,
}

impl Default for AcceptanceConfig {
    fn default() -> Self {
        AcceptanceConfig {
            oracle_graphs: 100,
            oracle_queries: 200,
            large_edges: 1_000_000,
            rbo_edges: 100_000,
            replay_schedules: 100,
            qps_window: Duration::from_millis(1500),
        }
    }
}

pub const NAMES: [&str; 9] = [
    "pattern_oracle",
    "cross_store_agreement",
    "retrieval_overhead",
    "rbo_effect",
    "cbo_quality",
    "mvcc_replay_and_scan",
    "archive_format",
    "oltp_scaling",
    "fraud_fixture",
];

type Check = fn(&AcceptanceConfig) -> (bool, String);

const CHECKS: [Check; 9] = [
    pattern_oracle,
    cross_store_agreement,
    retrieval_overhead,
    rbo_effect,
    cbo_quality,
    mvcc_replay_and_scan,
    archive_format,
    oltp_scaling,
    fraud_fixture,
];

pub fn run(id: u8, cfg: &AcceptanceConfig) -> Outcome {
    let idx = (id as usize).checked_sub(1).filter(|i| *i < CHECKS.len()).expect("criterion ids are 1..=9");
    let t = Instant::now();
    let (pass, detail) = match catch_unwind(AssertUnwindSafe(|| CHECKS[idx](cfg))) {
        Ok(r) => r,
        Err(e) => {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            (false, format!("panicked: {}", msg.unwrap_or_default()))
        }
    };
    Outcome { id, name: NAMES[idx], pass, detail: format!("{detail}; {:.1}s", t.elapsed().as_secs_f64()) }
}

pub fn run_all(cfg: &AcceptanceConfig) -> Vec<Outcome> {
    (1..=9).map(|i| run(i, cfg)).collect()
}

fn no_params() -> HashMap<String, Value> {
    HashMap::new()
}

fn run_rows(p: &Pipeline, text: &str, snap: &SnapshotRef, params: &HashMap<String, Value>) -> Vec<Row> {
    canonical_rows(p.run(&Query::Cypher(text.into()), snap, params).unwrap_or_else(|e| panic!("{text}: {e}")).rows)
}

fn oracle_rows(text: &str, snap: &SnapshotRef, params: &HashMap<String, Value>) -> Vec<Row> {
    let dag = cypher_parse(text, snap.schema()).unwrap_or_else(|d| panic!("{text}: {d}"));
    canonical_rows(evaluate(&dag.to_tree().expect("tree"), snap.as_ref(), params).expect("oracle").1)
}

fn pattern_oracle(cfg: &AcceptanceConfig) -> (bool, String) {
    let t0 = Instant::now();
    let per_graph = cfg.oracle_queries.div_ceil(cfg.oracle_graphs.max(1));
    let mut queries = 0;
    let mut mismatches = Vec::new();
    let mut rows = 0usize;
    for g in 0..cfg.oracle_graphs as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(g);
        let v = rng.gen_range(20..=200);
        let e = rng.gen_range(v..=1000.min(5 * v));
        let snap = build_immutable(&random_schema(), &random_tables(g, v, e)).expect("build").snapshot();
        let catalog = catalog_build(snap.as_ref(), 2).expect("catalog");
        let engines = [Pipeline::new(catalog.clone(), Backend::Batch, 2), Pipeline::new(catalog, Backend::Oltp, 2)];
        for q in 0..per_graph as u64 {
            if queries == cfg.oracle_queries {
                break;
            }
            queries += 1;
            let text = random_query(g * 10_000 + q);
            let want = oracle_rows(&text, &snap, &no_params());
            rows += want.len();
            for p in &engines {
                if run_rows(p, &text, &snap, &no_params()) != want {
                    mismatches.push(format!("{:?} graph {g}: {text}", p.backend));
                }
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = mismatches.is_empty() && secs <= 300.0;
    (pass, format!("{} graphs, {queries} queries, {rows} oracle rows, {} mismatches{}, {secs:.1}s of 300s", cfg.oracle_graphs, mismatches.len(), mismatches.first().map(|m| format!(" e.g. {m}")).unwrap_or_default()))
}

fn cross_store_agreement(_: &AcceptanceConfig) -> (bool, String) {
    let mut sets: Vec<(String, StoreSet, Vec<String>)> = Vec::new();
    let g0 = CsvSpec::from_file(&fixture_dir("g0").join("csv_spec.json")).expect("fixture spec");
    sets.push((
        "g0".into(),
        StoreSet::from_csv(&g0, 2),
        vec![
            "MATCH (a:Buyer)-[:Knows]->(b:Buyer)-[:Buy]->(c:Item) RETURN c.price".into(),
            FRIEND_PURCHASES_SELECTIVE.replace("U17", "A1"),
            "MATCH (s:Seller)-[:Sell]->(i:Item)<-[r:Buy]-(b:Buyer) WHERE r.date > 1 RETURN b.username, i.id".into(),
            "MATCH (a:Buyer)-[:Buy]->(i:Item) WITH a, COUNT(i) AS n RETURN a.username AS u, n ORDER BY n DESC, u LIMIT 2".into(),
        ],
    ));
    for g in 0..10u64 {
        let tables = random_tables(500 + g, 60 + 10 * g as usize, 300 + 40 * g as usize);
        let qs = (0..5).map(|q| random_query(700_000 + g * 100 + q)).collect();
        sets.push((format!("random{g}"), StoreSet::from_tables(&random_schema(), &tables, 16), qs));
    }
    let mut failures = Vec::new();
    let mut max_pr = 0.0f64;
    let mut checked = 0;
    for (name, set, qs) in &sets {
        let snaps = set.snapshots();
        let fps: Vec<u64> = snaps.iter().map(|(_, s)| fingerprint(s.as_ref()).expect("fingerprint")).collect();
        if fps.iter().any(|f| *f != fps[0]) {
            failures.push(format!("{name}: graph content differs"));
        }
        let catalog = catalog_build(snaps[0].1.as_ref(), 2).expect("catalog");
        let p = Pipeline::new(catalog, Backend::Batch, 2);
        for q in qs {
            let base = run_rows(&p, q, &snaps[0].1, &no_params());
            for (store, s) in &snaps[1..] {
                checked += 1;
                if run_rows(&p, q, s, &no_params()) != base {
                    failures.push(format!("{name}/{store}: {q}"));
                }
            }
        }
        let ranks: Vec<_> = snaps.iter().map(|(_, s)| pagerank(s.as_ref(), 0.85, 100, 1e-6).expect("pagerank")).collect();
        for r in &ranks[1..] {
            for (a, b) in r.scores.iter().zip(&ranks[0].scores) {
                max_pr = max_pr.max((a - b).abs());
            }
        }
        let src = VertexRef { vtype: 0, idx: 0 };
        let depths: Vec<_> = snaps.iter().map(|(_, s)| bfs(s.as_ref(), src).expect("bfs").depth).collect();
        if depths.iter().any(|d| *d != depths[0]) {
            failures.push(format!("{name}: bfs differs"));
        }
    }
    let pass = failures.is_empty() && max_pr <= 1e-12;
    (pass, format!("{} graphs x 3 stores, {checked} query comparisons, max pagerank diff {max_pr:e}, {} failures{}", sets.len(), failures.len(), failures.first().map(|f| format!(" e.g. {f}")).unwrap_or_default()))
}

fn retrieval_overhead(cfg: &AcceptanceConfig) -> (bool, String) {
    let (schema, tables) = random_homogeneous(3, cfg.large_edges / 10, cfg.large_edges);
    let store = build_immutable(&schema, &tables).expect("build");
    drop(tables);
    let snap = store.snapshot();
    let mut via = Vec::new();
    let mut inl = Vec::new();
    let mut diff = 0.0f64;
    pagerank(snap.as_ref(), 0.85, 100, 1e-6).expect("warm");
    pagerank_inlined_csr(&store, 0.85, 100, 1e-6);
    for _ in 0..5 {
        let (a, ra) = timed(1, || pagerank(snap.as_ref(), 0.85, 100, 1e-6).expect("pagerank"));
        let (b, rb) = timed(1, || pagerank_inlined_csr(&store, 0.85, 100, 1e-6));
        via.extend(a);
        inl.extend(b);
        diff = ra.scores.iter().zip(&rb).fold(diff, |m, (x, y)| m.max((x - y).abs()));
    }
    let ratio = median(&via) / median(&inl);
    (ratio <= 1.15 && diff < 1e-9, format!("{} edges: abstraction {:.1} ms vs inlined {:.1} ms (median of 5), ratio {ratio:.3} <= 1.15, max score diff {diff:e}", cfg.large_edges, median(&via), median(&inl)))
}

fn rbo_effect(cfg: &AcceptanceConfig) -> (bool, String) {
    let snap = build_immutable(&g0_schema(), &marketplace(cfg.rbo_edges)).expect("build").snapshot();
    let catalog = catalog_build(snap.as_ref(), 3).expect("catalog");
    let all = OptimizerConfig::default();
    let configs = [
        ("all", all.clone()),
        ("no_filter_push", OptimizerConfig { filter_push: false, ..all.clone() }),
        ("no_fusion", OptimizerConfig { fusion: false, ..all.clone() }),
    ];
    let mut measured = Vec::new();
    for (name, c) in configs {
        let p = Pipeline::new(catalog.clone(), Backend::Batch, 1).with_optimizer(c);
        let dag = p.parse(&Query::Cypher(FRIEND_PURCHASES_SELECTIVE.into()), snap.schema()).expect("parse");
        let prep = p.prepare(dag, &snap, None).expect("prepare");
        let (ms, r) = timed(5, || p.execute(&prep, &snap, &no_params()).expect("run"));
        let again = p.execute(&prep, &snap, &no_params()).expect("run");
        let deterministic = again.stats.intermediate_tuples == r.stats.intermediate_tuples;
        measured.push((name, median(&ms), r.stats.intermediate_tuples, canonical_rows(r.rows), deterministic));
    }
    let (push, nopush, nofuse) = (&measured[0], &measured[1], &measured[2]);
    let reduction = nopush.2 as f64 / push.2.max(1) as f64;
    let same = push.3 == nopush.3 && push.3 == nofuse.3;
    let deterministic = measured.iter().all(|m| m.4);
    let pass = reduction >= 10.0 && push.1 <= nopush.1 && push.2 < nofuse.2 && same && deterministic;
    (
        pass,
        format!(
            "{} edges, {} rows: tuples push {} vs no-push {} ({reduction:.0}x >= 10), wall {:.2} ms vs {:.2} ms; fusion tuples {} vs unfused {}; results equal {same}; deterministic {deterministic}",
            cfg.rbo_edges, push.3.len(), push.2, nopush.2, push.1, nopush.1, push.2, nofuse.2
        ),
    )
}

/// Random connected typed pattern over [`random_schema`].
fn random_pattern(rng: &mut ChaCha8Rng, schema: &PropertyGraphSchema, n: usize) -> PatternGraph {
    let names = ["a", "b", "c", "d"];
    let mut types: Vec<TypeId> = vec![rng.gen_range(0..3)];
    let mut edges: Vec<(usize, usize, TypeId, bool)> = Vec::new();
    let incident = |t: TypeId| -> Vec<(TypeId, bool)> {
        (0..schema.edge_type_count() as TypeId)
            .flat_map(|e| {
                let (s, d) = schema.edge_endpoints(e);
                [(s == t).then_some((e, true)), (d == t).then_some((e, false))]
            })
            .flatten()
            .collect()
    };
    for i in 1..n {
        let j = rng.gen_range(0..i);
        let &(e, out) = incident(types[j]).choose(rng).expect("incident edge");
        let (s, d) = schema.edge_endpoints(e);
        types.push(if out { d } else { s });
        let both = rng.gen_bool(0.15);
        edges.push(if out { (j, i, e, both) } else { (i, j, e, both) });
    }
    if n >= 3 && rng.gen_bool(0.4) {
        // Try to close a cycle with any fitting edge type.
        let (x, y) = (n - 1, rng.gen_range(0..n - 1));
        for e in 0..schema.edge_type_count() as TypeId {
            let (s, d) = schema.edge_endpoints(e);
            let dup = edges.iter().any(|&(a, b, et, _)| et == e && ((a, b) == (x, y) || (a, b) == (y, x)));
            if !dup && s == types[x] && d == types[y] {
                edges.push((x, y, e, false));
                break;
            }
        }
    }
    let vs: Vec<(&str, TypeId)> = types.iter().enumerate().map(|(i, t)| (names[i], *t)).collect();
    typed_pattern(&vs, &edges)
}

fn skewed_tables() -> GraphTables {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut t = GraphTables::default();
    let row = |id: i64, rng: &mut ChaCha8Rng| vec![Value::Int64(id), Value::Int64(rng.gen_range(0..10)), Value::Float64(1.0), Value::str(TAGS[0])];
    for i in 0..2000 {
        t.add_vertex("A", row(i, &mut rng));
    }
    for i in 0..2000 {
        t.add_vertex("B", row(10_000 + i, &mut rng));
    }
    for i in 0..20 {
        t.add_vertex("C", row(20_000 + i, &mut rng));
    }
    for _ in 0..20_000 {
        t.add_edge("AB", rng.gen_range(0..2000i64), 10_000 + rng.gen_range(0..2000i64), vec![Value::Int64(1)]);
    }
    for i in 0..20 {
        t.add_edge("BC", 10_000 + i as i64, 20_000 + i as i64, vec![Value::Int64(1)]);
    }
    t
}

fn cbo_quality(_: &AcceptanceConfig) -> (bool, String) {
    let schema = random_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut exact_checked, mut exact_bad) = (0, Vec::new());
    for g in 0..20u64 {
        let snap = build_immutable(&schema, &random_tables(900 + g, 40, 120)).expect("build").snapshot();
        let c = catalog_build(snap.as_ref(), 3).expect("catalog");
        for _ in 0..15 {
            let n = rng.gen_range(1..=3);
            let p = random_pattern(&mut rng, &schema, n);
            let est = freq_estimate(&c, &p, &schema);
            let truth = match_count(&p, snap.as_ref()).expect("oracle");
            exact_checked += 1;
            if est != truth {
                exact_bad.push(format!("graph {g}: estimate {est} vs {truth}"));
            }
        }
    }
    let (mut dp_checked, mut dp_bad) = (0, 0);
    for g in 0..50u64 {
        let snap = build_immutable(&schema, &random_tables(g, 30, 90)).expect("build").snapshot();
        let c = catalog_build(snap.as_ref(), 2).expect("catalog");
        for _ in 0..4 {
            let n = rng.gen_range(2..=4);
            let p = random_pattern(&mut rng, &schema, n);
            let m = CostModel { pattern: &p, catalog: &c, schema: &schema, use_pk: true };
            let (_, dp) = m.order_cost(&m.dp_order());
            for o in m.connected_orders() {
                dp_checked += 1;
                if dp > m.order_cost(&o).1 + 1e-9 {
                    dp_bad += 1;
                }
            }
        }
    }
    let snap = build_immutable(&schema, &skewed_tables()).expect("build").snapshot();
    let catalog = catalog_build(snap.as_ref(), 2).expect("catalog");
    let q = "MATCH (a:A)-[:AB]->(b:B)-[:BC]->(c:C) RETURN a.id, c.id";
    let measure = |forced: Option<Vec<String>>| {
        let cfg = OptimizerConfig { forced_order: forced, ..OptimizerConfig::default() };
        let p = Pipeline::new(catalog.clone(), Backend::Batch, 1).with_optimizer(cfg);
        let r = p.run(&Query::Cypher(q.into()), &snap, &no_params()).expect("run");
        (r.stats.intermediate_tuples, canonical_rows(r.rows))
    };
    let (cbo, cbo_rows) = measure(None);
    let mut worst = 0;
    let mut same = true;
    for order in [["a", "b", "c"], ["b", "a", "c"], ["b", "c", "a"], ["c", "b", "a"]] {
        let (t, rows) = measure(Some(order.iter().map(|s| s.to_string()).collect()));
        worst = worst.max(t);
        same &= rows == cbo_rows;
    }
    let ratio = cbo as f64 / worst as f64;
    let pass = exact_bad.is_empty() && dp_bad == 0 && ratio <= 0.5 && same;
    (
        pass,
        format!(
            "catalog exact on {exact_checked} patterns ({} off{}); DP <= all of {dp_checked} enumerated orders ({dp_bad} worse); skewed fixture tuples cbo {cbo} vs worst order {worst} (ratio {ratio:.3} <= 0.5), rows equal {same}",
            exact_bad.len(),
            exact_bad.first().map(|e| format!(", e.g. {e}")).unwrap_or_default()
        ),
    )
}

/// A random mutation schedule applied to a model of the tables. Returns
/// the batches with, per batch, the expected fingerprint if it commits
/// (`None` when the batch must be rejected).
fn schedule(seed: u64, schema: &PropertyGraphSchema, mut model: GraphTables) -> Vec<(Vec<Mutation>, Option<u64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next_id = 10_000i64;
    let mut out = Vec::new();
    for _ in 0..12 {
        let mut batch = Vec::new();
        let mut trial = model.clone();
        let dangling = rng.gen_bool(0.1);
        for _ in 0..rng.gen_range(1..=4) {
            match rng.gen_range(0..4) {
                0 => {
                    let vt = &schema.vertex_types[rng.gen_range(0..3)].name;
                    let props = vec![Value::Int64(next_id), Value::Int64(rng.gen_range(0..10)), Value::Float64(0.5), Value::str(TAGS[1])];
                    next_id += 1;
                    trial.add_vertex(vt, props.clone());
                    let names = ["id", "val", "w", "tag"];
                    batch.push(Mutation::InsertVertex { vtype: vt.clone(), props: names.iter().map(|n| n.to_string()).zip(props).collect() });
                }
                1 => {
                    let e = rng.gen_range(0..schema.edge_types.len());
                    let et = &schema.edge_types[e];
                    let pick = |t: &GraphTables, name: &str, rng: &mut ChaCha8Rng| {
                        let rows = &t.vertices.iter().find(|x| x.vtype == name).expect("type").rows;
                        rows[rng.gen_range(0..rows.len())][0].clone()
                    };
                    let (s, d) = (pick(&trial, &et.src_type, &mut rng), pick(&trial, &et.dst_type, &mut rng));
                    let w = Value::Int64(rng.gen_range(0..100));
                    trial.edge_rows(&et.name).push(EdgeRow { src: s.clone(), dst: d.clone(), props: vec![w.clone()] });
                    batch.push(Mutation::InsertEdge { etype: et.name.clone(), src: s, dst: d, props: vec![("weight".into(), w)] });
                }
                2 => {
                    let e = rng.gen_range(0..schema.edge_types.len());
                    let name = schema.edge_types[e].name.clone();
                    let rows = trial.edge_rows(&name);
                    // Only pairs without parallel edges, so the deleted row is unambiguous.
                    let unique: Vec<usize> = (0..rows.len())
                        .filter(|&i| rows.iter().filter(|r| r.src == rows[i].src && r.dst == rows[i].dst).count() == 1)
                        .collect();
                    if let Some(&i) = unique.choose(&mut rng) {
                        let r = rows.remove(i);
                        batch.push(Mutation::DeleteEdge { etype: name, src: r.src, dst: r.dst, ordinal: 0 });
                    }
                }
                _ => {
                    let t = rng.gen_range(0..3);
                    let vt = schema.vertex_types[t].name.clone();
                    let rows = trial.vertex_rows(&vt);
                    let i = rng.gen_range(0..rows.len());
                    let v = Value::Int64(rng.gen_range(0..10));
                    rows[i][1] = v.clone();
                    batch.push(Mutation::SetVertexProp { vtype: vt, pk: rows[i][0].clone(), prop: "val".into(), value: v });
                }
            }
        }
        if dangling {
            batch.push(Mutation::InsertEdge { etype: "AB".into(), src: Value::Int64(-1), dst: Value::Int64(-2), props: vec![] });
            out.push((batch, None));
        } else {
            model = trial;
            let fp = fingerprint(build_immutable(schema, &model).expect("model builds").snapshot().as_ref()).expect("fingerprint");
            out.push((batch, Some(fp)));
        }
    }
    out
}

fn mvcc_replay_and_scan(cfg: &AcceptanceConfig) -> (bool, String) {
    let schema = random_schema();
    let violations = AtomicU64::new(0);
    let mut reads = 0u64;
    let mut commits = 0u64;
    for seed in 0..cfg.replay_schedules as u64 {
        let base = random_tables(seed, 30, 80);
        let store = MvccStore::from_tables(&schema, &base).expect("mvcc");
        let v0 = store.committed_version();
        let mut expected: HashMap<u64, u64> = HashMap::new();
        expected.insert(v0, fingerprint(build_immutable(&schema, &base).expect("build").snapshot().as_ref()).expect("fp"));
        let plan = schedule(seed, &schema, base);
        let mut v = v0;
        for (_, fp) in &plan {
            if let Some(fp) = fp {
                v += 1;
                expected.insert(v, *fp);
            }
        }
        let done = AtomicBool::new(false);
        let read_count = AtomicU64::new(0);
        std::thread::scope(|s| {
            for _ in 0..2 {
                s.spawn(|| {
                    let mut held: Vec<(SnapshotRef, u64)> = Vec::new();
                    loop {
                        let finished = done.load(Ordering::Acquire);
                        let snap = store.snapshot_latest().expect("snapshot");
                        let fp = fingerprint(snap.as_ref()).expect("fp");
                        if expected.get(&snap.version()) != Some(&fp) {
                            violations.fetch_add(1, Ordering::Relaxed);
                        }
                        read_count.fetch_add(1, Ordering::Relaxed);
                        if held.len() < 4 {
                            held.push((snap, fp));
                        }
                        if finished {
                            break;
                        }
                    }
                    // Old snapshots must still read exactly what they read before.
                    for (snap, fp) in held {
                        if fingerprint(snap.as_ref()).expect("fp") != fp {
                            violations.fetch_add(1, Ordering::Relaxed);
                        }
                    }
                });
            }
            for (batch, fp) in &plan {
                let before = store.committed_version();
                let mut b = store.begin_batch_blocking();
                for m in batch {
                    b.push(m.clone());
                }
                let ok = b.commit().is_ok();
                if ok != fp.is_some() || (!ok && store.committed_version() != before) {
                    violations.fetch_add(1, Ordering::Relaxed);
                }
                commits += ok as u64;
                std::thread::yield_now();
            }
            done.store(true, Ordering::Release);
        });
        if fingerprint(store.snapshot_latest().expect("snap").as_ref()).expect("fp") != expected[&store.committed_version()] {
            violations.fetch_add(1, Ordering::Relaxed);
        }
        reads += read_count.load(Ordering::Relaxed);
    }
    let (s, tables) = random_homogeneous(8, cfg.large_edges / 10, cfg.large_edges);
    let imm = build_immutable(&s, &tables).expect("build");
    let mvcc = MvccStore::from_tables(&s, &tables).expect("mvcc");
    drop(tables);
    let (a, n1) = timed(3, || edge_scan(imm.snapshot().as_ref()).expect("scan"));
    let msnap = mvcc.snapshot_latest().expect("snap");
    let (b, n2) = timed(3, || edge_scan(msnap.as_ref()).expect("scan"));
    let ratio = median(&a) / median(&b);
    let v = violations.load(Ordering::Relaxed);
    (
        v == 0 && n1 == n2 && ratio >= 0.3,
        format!(
            "{} schedules, {commits} commits, {reads} concurrent snapshot reads, {v} violations; scan of {n1} edges mvcc {:.0} ms vs immutable {:.0} ms, throughput ratio {ratio:.2} >= 0.3",
            cfg.replay_schedules, median(&b), median(&a)
        ),
    )
}

fn dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).expect("readable dir") {
            let path = e.expect("entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).expect("under root").to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).expect("readable file")));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

pub fn write_g0_archive(dir: &Path) {
    let spec = CsvSpec::from_file(&fixture_dir("g0").join("csv_spec.json")).expect("fixture spec");
    convert_csv_to_archive(&spec, dir, 2, Codec::Deflate).expect("archive");
}

fn archive_format(cfg: &AcceptanceConfig) -> (bool, String) {
    let mut problems = Vec::new();
    let fresh = tempfile::tempdir().expect("tmp");
    write_g0_archive(fresh.path());
    let golden = fixture_dir("golden").join("g0_archive");
    let golden_ok = golden.is_dir() && dir_files(&golden) == dir_files(fresh.path());
    if !golden_ok {
        problems.push("g0 archive differs from golden files".to_string());
    }
    let tables = random_tables(77, 500, 2000);
    let (d1, d2) = (tempfile::tempdir().expect("tmp"), tempfile::tempdir().expect("tmp"));
    let csv = tempfile::tempdir().expect("tmp");
    let spec = write_csv(&random_schema(), &tables, csv.path()).expect("csv");
    convert_csv_to_archive(&spec, d1.path(), 64, Codec::Deflate).expect("archive");
    convert_csv_to_archive(&spec, d2.path(), 64, Codec::Deflate).expect("archive");
    if dir_files(d1.path()) != dir_files(d2.path()) {
        problems.push("repeated writes differ".into());
    }
    let mut roundtrips = 0;
    for g in 0..4u64 {
        let set = StoreSet::from_tables(&random_schema(), &random_tables(300 + g, 200, 800), 32);
        let want = fingerprint(set.immutable.snapshot().as_ref()).expect("fp");
        let arch = fingerprint(set.archive.snapshot_latest().expect("snap").as_ref()).expect("fp");
        let dir = tempfile::tempdir().expect("tmp");
        convert_csv_to_archive(&set.csv_spec, dir.path(), 32, Codec::Raw).expect("archive");
        let rebuilt = build_store_from_archive(dir.path(), StoreKind::Immutable).expect("rebuild");
        let reb = fingerprint(rebuilt.as_store().snapshot_latest().expect("snap").as_ref()).expect("fp");
        roundtrips += 1;
        if arch != want || reb != want {
            problems.push(format!("roundtrip {g} differs"));
        }
    }
    let set = StoreSet::from_tables(&random_schema(), &random_tables(31, 3000, 3000), 64);
    let (imm, arch) = (set.immutable.snapshot(), set.archive.snapshot_latest().expect("snap"));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let before = set.archive.payload_decodes();
    let mut preds = 0;
    for _ in 0..40 {
        let mut p = PropertyPredicate::always();
        for _ in 0..rng.gen_range(1..=2) {
            p = match rng.gen_range(0..4) {
                0 => p.and("id", [CmpOp::Lt, CmpOp::Gt, CmpOp::Eq][rng.gen_range(0..3)], Value::Int64(rng.gen_range(0..3000))),
                1 => p.and("val", CmpOp::Ge, Value::Int64(rng.gen_range(0..10))),
                2 => p.and("w", CmpOp::Lt, Value::Float64(rng.gen_range(0..100) as f64)),
                _ => p.and("tag", CmpOp::Eq, Value::str(TAGS[rng.gen_range(0..TAGS.len())])),
            };
        }
        for t in 0..3 {
            preds += 1;
            if imm.filtered_vertices(t, &p).expect("imm filter") != arch.filtered_vertices(t, &p).expect("archive filter") {
                problems.push(format!("zone-map filter differs: {p:?}"));
            }
        }
    }
    let decodes = set.archive.payload_decodes() - before;
    let (s, big) = random_homogeneous(6, cfg.large_edges / 10, cfg.large_edges);
    let csv_dir = tempfile::tempdir().expect("tmp");
    let spec = write_csv(&s, &big, csv_dir.path()).expect("csv");
    drop(big);
    let arch_dir = tempfile::tempdir().expect("tmp");
    convert_csv_to_archive(&spec, arch_dir.path(), 64 * 1024, Codec::Deflate).expect("archive");
    let (csv_ms, _) = timed(3, || {
        let (schema, t) = load_csv(&spec).expect("csv");
        build_immutable(&schema, &t).expect("build")
    });
    let (arch_ms, _) = timed(3, || build_store_from_archive(arch_dir.path(), StoreKind::Immutable).expect("load"));
    let speedup = median(&csv_ms) / median(&arch_ms);
    let pass = problems.is_empty() && speedup >= 1.5;
    (
        pass,
        format!(
            "golden match {golden_ok}; deterministic rewrite; {roundtrips} roundtrips; {preds} zone-map filters agree ({decodes} chunk decodes); {} edges load: csv {:.0} ms vs archive {:.0} ms, speedup {speedup:.2} >= 1.5{}",
            cfg.large_edges,
            median(&csv_ms),
            median(&arch_ms),
            problems.first().map(|p| format!("; problem: {p}")).unwrap_or_default()
        ),
    )
}

fn oltp_scaling(cfg: &AcceptanceConfig) -> (bool, String) {
    let snap = build_immutable(&g0_schema(), &marketplace(cfg.rbo_edges)).expect("build").snapshot();
    let buyers = cfg.rbo_edges / 10;
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let qps: Vec<(u32, f64)> = [1u32, 2, 4].iter().map(|&s| (s, point_query_qps(&snap, buyers, s, cfg.qps_window))).collect();
    let mut scaling_ok = true;
    let mut measured_doublings = 0;
    for w in qps.windows(2) {
        if w[1].0 as usize <= cores {
            measured_doublings += 1;
            scaling_ok &= w[1].1 >= 1.6 * w[0].1;
        }
    }
    let catalog = catalog_build(snap.as_ref(), 2).expect("catalog");
    let p = Pipeline::new(catalog, Backend::Oltp, 4);
    let dag = p.parse(&Query::Cypher(POINT_QUERY.into()), snap.schema()).expect("parse");
    let prep = p.prepare(dag, &snap, None).expect("prepare");
    let params: HashMap<String, Value> = [("u".to_string(), Value::str("U3"))].into();
    let want = canonical_rows(p.execute(&prep, &snap, &params).expect("run").rows);
    let mismatched = AtomicU64::new(0);
    std::thread::scope(|s| {
        for _ in 0..8 {
            s.spawn(|| {
                for _ in 0..125 {
                    if canonical_rows(p.execute(&prep, &snap, &params).expect("run").rows) != want {
                        mismatched.fetch_add(1, Ordering::Relaxed);
                    }
                }
            });
        }
    });
    let m = mismatched.load(Ordering::Relaxed);
    let shape: Vec<String> = qps.iter().map(|(s, q)| format!("{s} shards {q:.0} qps")).collect();
    let pass = m == 0 && measured_doublings > 0 && scaling_ok;
    let note = if measured_doublings == 0 { format!("; {cores} core(s) available, so no shard doubling fits within physical cores and scaling is unverified") } else { String::new() };
    (pass, format!("{}; 1000 concurrent identical queries, {m} mismatches{note}", shape.join(", ")))
}

fn fraud_fixture(_: &AcceptanceConfig) -> (bool, String) {
    let snap = build_immutable(&fraud_schema(), &fraud_tables()).expect("build").snapshot();
    let params = fraud_params();
    let dag = cypher_parse(FRAUD_QUERY, snap.schema()).expect("fraud query parses");
    let kinds = dag.kinds();
    let count = |k: &str| kinds.iter().filter(|x| **x == k).count();
    let shape_ok = count("MATCH") == 2 && count("GROUP") == 2;
    let c = catalog_build(snap.as_ref(), 3).expect("catalog");
    let opt = optimize(&dag, &c, &snap.capabilities(), &OptimizerConfig::default()).expect("optimizes");
    let plan = opt.dag.to_json();
    let ops = plan["ops"].as_array().expect("ops").clone();
    let pred_of = |o: &serde_json::Value| o["pred"].as_str().unwrap_or("").to_string();
    let residual = ops.iter().any(|o| o["kind"] == "SELECT" && pred_of(o).contains("b1.date - b2.date"));
    let pushed = ops.iter().filter(|o| o["kind"] != "SELECT" && pred_of(o).contains("s.id IN $SEEDS")).count();
    let want = oracle_rows(FRAUD_QUERY, &snap, &params);
    let mut agree = true;
    for backend in [Backend::Batch, Backend::Oltp] {
        let p = Pipeline::new(c.clone(), backend, 2);
        agree &= run_rows(&p, FRAUD_QUERY, &snap, &params) == want;
    }
    let one = want == vec![vec![Value::Int64(1)]];
    (
        shape_ok && residual && pushed == 2 && agree && one,
        format!("two MATCH/two GROUP {shape_ok}; two-alias predicate residual {residual}; single-alias predicate pushed into {pushed} scans; flagged {want:?}; backends agree {agree}"),
    )
}
