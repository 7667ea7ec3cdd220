//! Fixture graphs and seeded random graph generators used by tests,
//! benches and the acceptance suite.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{DataType, EdgeTypeDecl, PropertyDecl, PropertyGraphSchema, Value, VertexTypeDecl};
use crate::store::{build_immutable, GraphTables, ImmutableStore};

fn vtype(name: &str, props: &[(&str, DataType)], pk: &str) -> VertexTypeDecl {
    VertexTypeDecl {
        name: name.to_string(),
        properties: props.iter().map(|(n, d)| PropertyDecl::new(*n, d.clone())).collect(),
        primary_key: pk.to_string(),
    }
}

fn etype(name: &str, src: &str, dst: &str, props: &[(&str, DataType)]) -> EdgeTypeDecl {
    EdgeTypeDecl {
        name: name.to_string(),
        src_type: src.to_string(),
        dst_type: dst.to_string(),
        properties: props.iter().map(|(n, d)| PropertyDecl::new(*n, d.clone())).collect(),
    }
}

/// Buyer/Item/Seller schema with Knows, Buy and Sell edges.
pub fn g0_schema() -> PropertyGraphSchema {
    use DataType::*;
    PropertyGraphSchema {
        vertex_types: vec![
            vtype("Buyer", &[("username", String), ("credits", Int64)], "username"),
            vtype("Item", &[("id", Int64), ("price", Float64), ("discount", Float64)], "id"),
            vtype("Seller", &[("id", Int64), ("rating", Float64)], "id"),
        ],
        edge_types: vec![
            etype("Knows", "Buyer", "Buyer", &[]),
            etype("Buy", "Buyer", "Item", &[("date", Int64)]),
            etype("Sell", "Seller", "Item", &[]),
        ],
    }
}

/// The G0 fixture: b1..b3, i1..i2, s1 with ids assigned in that order.
pub fn g0_tables() -> GraphTables {
    let mut t = GraphTables::default();
    for (name, credits) in [("A1", 10), ("B2", 5), ("C3", 8)] {
        t.add_vertex("Buyer", vec![Value::str(name), Value::Int64(credits)]);
    }
    t.add_vertex("Item", vec![Value::Int64(1), Value::Float64(100.0), Value::Float64(0.1)]);
    t.add_vertex("Item", vec![Value::Int64(2), Value::Float64(50.0), Value::Float64(0.0)]);
    t.add_vertex("Seller", vec![Value::Int64(1), Value::Float64(4.5)]);
    t.add_edge("Knows", "A1", "B2", vec![]);
    t.add_edge("Knows", "B2", "C3", vec![]);
    for (b, i, d) in [("A1", 1, 1), ("B2", 1, 2), ("B2", 2, 3), ("C3", 2, 9)] {
        t.add_edge("Buy", b, i as i64, vec![Value::Int64(d)]);
    }
    t.add_edge("Sell", 1i64, 1i64, vec![]);
    t.add_edge("Sell", 1i64, 2i64, vec![]);
    t
}

pub fn g0() -> ImmutableStore {
    build_immutable(&g0_schema(), &g0_tables()).expect("G0 fixture builds")
}

/// Three vertex types A, B, C (props id pk, val, w, tag) and four edge
/// types AA, AB, BC, CA with an Int64 `weight`.
pub fn random_schema() -> PropertyGraphSchema {
    use DataType::*;
    let props: &[(&str, DataType)] = &[("id", Int64), ("val", Int64), ("w", Float64), ("tag", String)];
    PropertyGraphSchema {
        vertex_types: vec![vtype("A", props, "id"), vtype("B", props, "id"), vtype("C", props, "id")],
        edge_types: vec![
            etype("AA", "A", "A", &[("weight", Int64)]),
            etype("AB", "A", "B", &[("weight", Int64)]),
            etype("BC", "B", "C", &[("weight", Int64)]),
            etype("CA", "C", "A", &[("weight", Int64)]),
        ],
    }
}

pub const TAGS: [&str; 4] = ["red", "green", "blue", "gold"];

/// Seeded random tables over [`random_schema`] with exactly `vertices`
/// vertices and `edges` edges; parallel edges and self-loops may occur.
pub fn random_tables(seed: u64, vertices: usize, edges: usize) -> GraphTables {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = random_schema();
    let mut t = GraphTables::default();
    let mut per_type: Vec<Vec<i64>> = vec![Vec::new(); 3];
    for i in 0..vertices {
        let ty = if i < 3 { i } else { rng.gen_range(0..3) };
        let id = i as i64;
        per_type[ty].push(id);
        let row = vec![
            Value::Int64(id),
            Value::Int64(rng.gen_range(0..10)),
            Value::Float64((rng.gen_range(0..1000) as f64) / 10.0),
            Value::str(TAGS.choose(&mut rng).expect("non-empty")),
        ];
        t.add_vertex(&schema.vertex_types[ty].name, row);
    }
    for _ in 0..edges {
        let et = rng.gen_range(0..schema.edge_types.len());
        let (s, d) = schema.edge_endpoints(et as u32);
        let src = *per_type[s as usize].choose(&mut rng).expect("every type has a vertex");
        let dst = *per_type[d as usize].choose(&mut rng).expect("every type has a vertex");
        t.add_edge(&schema.edge_types[et].name, src, dst, vec![Value::Int64(rng.gen_range(0..100))]);
    }
    t
}

/// Seeded random graph with uniform out-degree over a single vertex and
/// edge type, for scan and analytics benchmarks.
pub fn random_homogeneous(seed: u64, vertices: usize, edges: usize) -> (PropertyGraphSchema, GraphTables) {
    use DataType::*;
    let schema = PropertyGraphSchema {
        vertex_types: vec![vtype("V", &[("id", Int64), ("val", Int64)], "id")],
        edge_types: vec![etype("E", "V", "V", &[("weight", Int64)])],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = GraphTables::default();
    let rows = t.vertex_rows("V");
    for i in 0..vertices {
        rows.push(vec![Value::Int64(i as i64), Value::Int64(rng.gen_range(0..100))]);
    }
    let er = t.edge_rows("E");
    er.reserve(edges);
    for _ in 0..edges {
        let s = rng.gen_range(0..vertices) as i64;
        let d = rng.gen_range(0..vertices) as i64;
        er.push(crate::store::EdgeRow {
            src: Value::Int64(s),
            dst: Value::Int64(d),
            props: vec![Value::Int64(rng.gen_range(0..100))],
        });
    }
    (schema, t)
}

/// Buyer/Item graph shaped like the friends-purchases query at scale:
/// `buyers` buyers with unique usernames, `items` items, `knows` and `buys`
/// random edges.
pub fn random_marketplace(seed: u64, buyers: usize, items: usize, knows: usize, buys: usize) -> GraphTables {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = GraphTables::default();
    for i in 0..buyers {
        t.add_vertex("Buyer", vec![Value::str(&format!("U{i}")), Value::Int64(rng.gen_range(0..20))]);
    }
    for i in 0..items {
        t.add_vertex(
            "Item",
            vec![
                Value::Int64(i as i64),
                Value::Float64(rng.gen_range(1..200) as f64),
                Value::Float64(rng.gen_range(0..5) as f64 / 10.0),
            ],
        );
    }
    t.add_vertex("Seller", vec![Value::Int64(0), Value::Float64(3.0)]);
    for _ in 0..knows {
        let a = rng.gen_range(0..buyers);
        let b = rng.gen_range(0..buyers);
        t.add_edge("Knows", Value::str(&format!("U{a}")), Value::str(&format!("U{b}")), vec![]);
    }
    for _ in 0..buys {
        let a = rng.gen_range(0..buyers);
        let i = rng.gen_range(0..items) as i64;
        t.add_edge("Buy", Value::str(&format!("U{a}")), i, vec![Value::Int64(rng.gen_range(0..30))]);
    }
    t
}

/// Seeded random Cypher query over [`random_schema`]: a walk of one to
/// three edges (sometimes closing a cycle), a few filters, and either a
/// projection, a grouped count, or a fully ordered LIMIT.
pub fn random_query(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = random_schema();
    let names = ["A", "B", "C"];
    let mut aliases: Vec<(String, usize)> = Vec::new();
    let mut edge_aliases: Vec<String> = Vec::new();
    let start = rng.gen_range(0..3);
    aliases.push(("v0".into(), start));
    let mut text = format!("MATCH (v0:{})", names[start]);
    let mut cur = 0usize;
    let hops = rng.gen_range(1..=3);
    for h in 0..hops {
        let ct = aliases[cur].1 as u32;
        let choices: Vec<(usize, bool)> = (0..schema.edge_types.len())
            .flat_map(|e| {
                let (s, d) = schema.edge_endpoints(e as u32);
                let mut v = Vec::new();
                if s == ct {
                    v.push((e, true));
                }
                if d == ct {
                    v.push((e, false));
                }
                v
            })
            .collect();
        let &(e, out) = choices.choose(&mut rng).expect("every type has an edge");
        let (s, d) = schema.edge_endpoints(e as u32);
        let other = if out { d } else { s } as usize;
        let ename = &schema.edge_types[e].name;
        let var = e == 0 && h + 1 == hops && rng.gen_bool(0.3);
        let rel = if var {
            format!("[:{ename}*1..2]")
        } else if rng.gen_bool(0.25) {
            let a = format!("e{h}");
            edge_aliases.push(a.clone());
            format!("[{a}:{ename}]")
        } else {
            format!("[:{ename}]")
        };
        let undirected = !var && rng.gen_bool(0.1);
        let arrow = match (undirected, out) {
            (true, _) => format!("-{rel}-"),
            (false, true) => format!("-{rel}->"),
            (false, false) => format!("<-{rel}-"),
        };
        let closers: Vec<usize> = (0..aliases.len()).filter(|&i| i != cur && aliases[i].1 == other).collect();
        if !var && !closers.is_empty() && rng.gen_bool(0.3) {
            let to = *closers.choose(&mut rng).unwrap();
            text += &format!(", ({}){arrow}({})", aliases[cur].0, aliases[to].0);
            cur = to;
        } else {
            let a = format!("v{}", aliases.len());
            text += &format!("{arrow}({a}:{})", names[other]);
            aliases.push((a, other));
            cur = aliases.len() - 1;
        }
        if h + 1 < hops && rng.gen_bool(0.2) {
            // Branch: the next hop starts from an earlier alias.
            cur = rng.gen_range(0..aliases.len());
            text += &format!(", ({})", aliases[cur].0);
        }
    }
    let mut conds = Vec::new();
    for _ in 0..rng.gen_range(0..=2) {
        let (a, _) = aliases.choose(&mut rng).unwrap();
        conds.push(match rng.gen_range(0..5) {
            0 => format!("{a}.val > {}", rng.gen_range(0..10)),
            1 => format!("{a}.tag = \"{}\"", TAGS.choose(&mut rng).unwrap()),
            2 => format!("{a}.w < {}.0", rng.gen_range(10..90)),
            3 if !edge_aliases.is_empty() => format!("{}.weight >= {}", edge_aliases.choose(&mut rng).unwrap(), rng.gen_range(0..100)),
            _ => {
                let (b, _) = aliases.choose(&mut rng).unwrap();
                format!("{a}.val <= {b}.val")
            }
        });
    }
    if !conds.is_empty() {
        text += &format!(" WHERE {}", conds.join(" AND "));
    }
    let pick: Vec<&String> = aliases.iter().map(|(a, _)| a).collect();
    match rng.gen_range(0..4) {
        0 => {
            let a = pick.choose(&mut rng).unwrap();
            text += &format!(" RETURN {a}.tag AS t, count(*) AS n");
        }
        1 => {
            let a = pick.choose(&mut rng).unwrap();
            text += &format!(" RETURN DISTINCT {a}.id AS x");
        }
        2 => {
            let a = pick.choose(&mut rng).unwrap();
            let b = pick.choose(&mut rng).unwrap();
            // Ordering by every returned column makes the LIMIT prefix unique.
            text += &format!(" RETURN {a}.id AS x, {b}.val AS y ORDER BY x DESC, y LIMIT {}", rng.gen_range(1..8));
        }
        _ => {
            let cols: Vec<String> = pick.iter().map(|a| format!("{a}.id")).collect();
            text += &format!(" RETURN {}", cols.join(", "));
        }
    }
    text
}

/// Account/Item schema for the fraud-ring query.
pub fn fraud_schema() -> PropertyGraphSchema {
    use DataType::*;
    PropertyGraphSchema {
        vertex_types: vec![vtype("Account", &[("id", Int64)], "id"), vtype("Item", &[("id", Int64)], "id")],
        edge_types: vec![etype("KNOWS", "Account", "Account", &[]), etype("BUY", "Account", "Item", &[("date", Int64)])],
    }
}

/// Accounts 7 and 8 are the known seeds. With `fraud_params` exactly one
/// account (id 1) scores above the threshold; account 2 lands exactly on it.
pub fn fraud_tables() -> GraphTables {
    let mut t = GraphTables::default();
    for id in 1..=8 {
        t.add_vertex("Account", vec![Value::Int64(id)]);
    }
    for id in 100..=103 {
        t.add_vertex("Item", vec![Value::Int64(id)]);
    }
    for (a, b) in [(1i64, 2i64), (1, 3), (4, 2)] {
        t.add_edge("KNOWS", a, b, vec![]);
    }
    for (a, i, d) in [(1i64, 100i64, 10), (7, 100, 8), (8, 101, 20), (1, 101, 22), (2, 102, 5), (7, 102, 1), (3, 103, 50), (8, 103, 40), (4, 101, 21)] {
        t.add_edge("BUY", a, i, vec![Value::Int64(d)]);
    }
    t
}

pub const FRAUD_QUERY: &str = "MATCH (v:Account)-[b1:BUY]->(:Item)<-[b2:BUY]-(s:Account) \
WHERE s.id IN $SEEDS AND b1.date - b2.date < 5 \
WITH v, COUNT(s) AS cnt1 \
MATCH (v)-[:KNOWS]-(f:Account), (f)-[b1:BUY]->(:Item)<-[b2:BUY]-(s:Account) \
WHERE s.id IN $SEEDS \
WITH v, cnt1, COUNT(s) AS cnt2 \
WHERE $w1 * cnt1 + $w2 * cnt2 > $threshold \
RETURN v.id AS account";

pub fn fraud_params() -> std::collections::HashMap<String, Value> {
    [
        ("SEEDS".to_string(), Value::list(vec![Value::Int64(7), Value::Int64(8)])),
        ("w1".to_string(), Value::Int64(2)),
        ("w2".to_string(), Value::Int64(1)),
        ("threshold".to_string(), Value::Int64(5)),
    ]
    .into()
}
