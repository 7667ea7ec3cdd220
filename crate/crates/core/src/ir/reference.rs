//! Naive row-at-a-time interpreter for plan trees. Pattern ops go through
//! [`match_semantics`]; everything else is a direct reading of each op's
//! definition. Used as the oracle for the engines.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::model::{value_compare, Direction, EdgeRef, PathValue, TypeId, Value, VertexRef};
use crate::retrieval::GraphSnapshot;

use super::{compile, match_semantics, CExpr, Endpoint, FieldSchema, GroupState, IrError, LogicalOp, PlanTree, VertexSource};

pub type Row = Vec<Value>;

/// Adjacent `(neighbor, edge)` pairs of `v` along `etype`. `Both` lists
/// Out then In and drops the In copy of self-loops. Vertices of a type the
/// edge type cannot touch have no neighbors.
pub fn neighbors(snap: &dyn GraphSnapshot, v: VertexRef, dir: Direction, etype: TypeId) -> Vec<(VertexRef, EdgeRef)> {
    let (s, d) = snap.schema().edge_endpoints(etype);
    let mut out = Vec::new();
    if matches!(dir, Direction::Out | Direction::Both) && v.vtype == s {
        if let Ok(it) = snap.adjacency(v, Direction::Out, etype) {
            out.extend(it);
        }
    }
    if matches!(dir, Direction::In | Direction::Both) && v.vtype == d {
        if let Ok(it) = snap.adjacency(v, Direction::In, etype) {
            out.extend(it.filter(|(_, e)| dir == Direction::In || e.src != e.dst));
        }
    }
    out
}

/// Keeps the first pair per distinct neighbor.
pub fn dedup_neighbors(pairs: &mut Vec<(VertexRef, EdgeRef)>) {
    let mut seen = std::collections::HashSet::new();
    pairs.retain(|(n, _)| seen.insert(*n));
}

/// Bounded-hop paths from `start` in BFS level order, no edge repeated
/// within a path.
pub fn expand_paths(
    snap: &dyn GraphSnapshot,
    start: VertexRef,
    dir: Direction,
    etype: TypeId,
    min: u32,
    max: u32,
) -> Vec<PathValue> {
    let mut out = Vec::new();
    let mut level = vec![PathValue::single(start)];
    for hops in 0..=max {
        if hops >= min {
            out.extend(level.iter().cloned());
        }
        if hops == max {
            break;
        }
        let mut next = Vec::new();
        for p in &level {
            for (n, e) in neighbors(snap, p.end(), dir, etype) {
                if !p.contains_edge(&e) {
                    next.push(p.extended(e, n));
                }
            }
        }
        if next.is_empty() {
            break;
        }
        level = next;
    }
    out
}

/// Endpoint of an edge or path value; `None` for nulls.
pub fn endpoint(value: &Value, which: &Endpoint, row: &[Value], layout: &FieldSchema) -> Option<VertexRef> {
    match (value, which) {
        (Value::Edge(e), Endpoint::Start) => Some(e.src),
        (Value::Edge(e), Endpoint::End) => Some(e.dst),
        (Value::Edge(e), Endpoint::Other(a)) => {
            let anchor = row[layout.position(a)?].as_vertex()?;
            Some(e.other(anchor))
        }
        (Value::Path(p), Endpoint::Start) => Some(p.start()),
        (Value::Path(p), Endpoint::End) => Some(p.end()),
        _ => None,
    }
}

/// Stable multi-key sort comparator.
pub fn compare_keys(a: &[Value], b: &[Value], desc: &[bool]) -> Ordering {
    for (i, d) in desc.iter().enumerate() {
        let o = value_compare(&a[i], &b[i]);
        let o = if *d { o.reverse() } else { o };
        if o != Ordering::Equal {
            return o;
        }
    }
    Ordering::Equal
}

fn distinct_ok(v: VertexRef, row: &[Value], cols: &[usize]) -> bool {
    cols.iter().all(|&c| row[c].as_vertex() != Some(v))
}

fn cols(layout: &FieldSchema, aliases: &[String]) -> Result<Vec<usize>, IrError> {
    aliases.iter().map(|a| layout.position(a).ok_or_else(|| IrError::missing_alias(a))).collect()
}

/// Evaluates `tree`; returns the output schema and rows.
pub fn evaluate(
    tree: &PlanTree,
    snap: &dyn GraphSnapshot,
    params: &HashMap<String, Value>,
) -> Result<(FieldSchema, Vec<Row>), IrError> {
    let graph = snap.schema();
    let inputs: Vec<(FieldSchema, Vec<Row>)> =
        tree.inputs.iter().map(|t| evaluate(t, snap, params)).collect::<Result<_, _>>()?;
    let in_schemas: Vec<&FieldSchema> = inputs.iter().map(|(s, _)| s).collect();
    let out_schema = tree.op.infer_schema(&in_schemas, graph)?;
    let c = |e: &super::Expr, layout: &FieldSchema| compile(e, layout, graph, params);
    let pred_of = |p: &Option<super::Expr>| -> Result<Option<CExpr>, IrError> { p.as_ref().map(|e| c(e, &out_schema)).transpose() };
    let mut inputs = inputs.into_iter();
    let (in_schema, rows) = inputs.next().unwrap_or_default();
    let second = inputs.next();
    let holds = |p: &Option<CExpr>, row: &[Value]| p.as_ref().is_none_or(|p| p.holds(row, snap));
    let mut out: Vec<Row> = Vec::new();
    match &tree.op {
        LogicalOp::GetVertex { mode: VertexSource::Scan, label, pred, .. } => {
            let p = pred_of(pred)?;
            let types: Vec<TypeId> = match label {
                Some(t) => vec![*t],
                None => graph.vertex_type_ids().collect(),
            };
            for t in types {
                for idx in 0..snap.vertex_count(t).unwrap_or(0) {
                    let row = vec![Value::Vertex(VertexRef::new(t, idx))];
                    if holds(&p, &row) {
                        out.push(row);
                    }
                }
            }
        }
        LogicalOp::GetVertex { mode: VertexSource::FromEdge { edge, which }, label, pred, distinct_from, .. } => {
            let p = pred_of(pred)?;
            let ec = in_schema.position(edge).ok_or_else(|| IrError::missing_alias(edge))?;
            let dc = cols(&in_schema, distinct_from)?;
            for row in rows {
                let Some(v) = endpoint(&row[ec], which, &row, &in_schema) else { continue };
                if label.is_some_and(|l| l != v.vtype) || !distinct_ok(v, &row, &dc) {
                    continue;
                }
                let mut r = row;
                r.push(Value::Vertex(v));
                if holds(&p, &r) {
                    out.push(r);
                }
            }
        }
        LogicalOp::ExpandEdge { input, dir, etype, pred, per_neighbor, close_with, .. } => {
            let p = pred_of(pred)?;
            let ic = in_schema.position(input).ok_or_else(|| IrError::missing_alias(input))?;
            let cc = close_with.as_ref().map(|a| in_schema.position(a).ok_or_else(|| IrError::missing_alias(a))).transpose()?;
            for row in rows {
                let Some(v) = row[ic].as_vertex() else { continue };
                let mut pairs = neighbors(snap, v, *dir, *etype);
                if let Some(cc) = cc {
                    let target = row[cc].as_vertex();
                    pairs.retain(|(n, _)| Some(*n) == target);
                }
                let mut kept = Vec::new();
                for (n, e) in pairs {
                    let mut r = row.clone();
                    r.push(Value::Edge(e));
                    if holds(&p, &r) {
                        kept.push((n, e, r));
                    }
                }
                if *per_neighbor {
                    let mut seen = std::collections::HashSet::new();
                    kept.retain(|(n, _, _)| seen.insert(*n));
                }
                out.extend(kept.into_iter().map(|(_, _, r)| r));
            }
        }
        LogicalOp::ExpandVertex { input, dir, etype, label, pred, distinct_from, per_neighbor, .. } => {
            let p = pred_of(pred)?;
            let ic = in_schema.position(input).ok_or_else(|| IrError::missing_alias(input))?;
            let dc = cols(&in_schema, distinct_from)?;
            for row in rows {
                let Some(v) = row[ic].as_vertex() else { continue };
                let mut pairs = neighbors(snap, v, *dir, *etype);
                if *per_neighbor {
                    dedup_neighbors(&mut pairs);
                }
                for (n, _) in pairs {
                    if label.is_some_and(|l| l != n.vtype) || !distinct_ok(n, &row, &dc) {
                        continue;
                    }
                    let mut r = row.clone();
                    r.push(Value::Vertex(n));
                    if holds(&p, &r) {
                        out.push(r);
                    }
                }
            }
        }
        LogicalOp::Match { pattern } => out = match_semantics(pattern, snap, params)?,
        LogicalOp::Path { input, dir, etype, min, max, .. } => {
            let ic = in_schema.position(input).ok_or_else(|| IrError::missing_alias(input))?;
            for row in rows {
                let Some(v) = row[ic].as_vertex() else { continue };
                for p in expand_paths(snap, v, *dir, *etype, *min, *max) {
                    let mut r = row.clone();
                    r.push(Value::Path(std::sync::Arc::new(p)));
                    out.push(r);
                }
            }
        }
        LogicalOp::Project { items } => {
            let exprs: Vec<CExpr> = items.iter().map(|(e, _)| c(e, &in_schema)).collect::<Result<_, _>>()?;
            out = rows.iter().map(|r| exprs.iter().map(|e| e.eval(r, snap)).collect()).collect();
        }
        LogicalOp::Select { pred } => {
            let p = c(pred, &in_schema)?;
            out = rows.into_iter().filter(|r| p.holds(r, snap)).collect();
        }
        LogicalOp::Order { keys, limit } => {
            let exprs: Vec<CExpr> = keys.iter().map(|(e, _)| c(e, &in_schema)).collect::<Result<_, _>>()?;
            let desc: Vec<bool> = keys.iter().map(|(_, d)| *d).collect();
            let mut keyed: Vec<(Vec<Value>, Row)> =
                rows.into_iter().map(|r| (exprs.iter().map(|e| e.eval(&r, snap)).collect(), r)).collect();
            keyed.sort_by(|a, b| compare_keys(&a.0, &b.0, &desc));
            out = keyed.into_iter().map(|(_, r)| r).collect();
            if let Some(n) = limit {
                out.truncate(*n as usize);
            }
        }
        LogicalOp::Group { keys, aggs } => {
            let kx: Vec<CExpr> = keys.iter().map(|(e, _)| c(e, &in_schema)).collect::<Result<_, _>>()?;
            let ax: Vec<Option<CExpr>> =
                aggs.iter().map(|a| a.arg.as_ref().map(|e| c(e, &in_schema)).transpose()).collect::<Result<_, _>>()?;
            let mut order: Vec<Vec<Value>> = Vec::new();
            let mut groups: HashMap<Vec<Value>, GroupState> = HashMap::new();
            for r in &rows {
                let k: Vec<Value> = kx.iter().map(|e| e.eval(r, snap)).collect();
                let args: Vec<Value> = ax.iter().map(|a| a.as_ref().map_or(Value::Int64(1), |e| e.eval(r, snap))).collect();
                groups
                    .entry(k.clone())
                    .or_insert_with(|| {
                        order.push(k);
                        GroupState::new(aggs)
                    })
                    .add(args);
            }
            if keys.is_empty() && groups.is_empty() {
                order.push(vec![]);
                groups.insert(vec![], GroupState::new(aggs));
            }
            for k in order {
                let state = groups.remove(&k).expect("recorded");
                let mut r = k;
                r.extend(state.finish());
                out.push(r);
            }
        }
        LogicalOp::Limit { n } => out = rows.into_iter().take(*n as usize).collect(),
        LogicalOp::Join { on } => {
            let left_schema = &in_schema;
            let (right_schema, right_rows) = second.as_ref().ok_or_else(|| IrError::Invalid("JOIN needs two inputs".into()))?;
            let lk = cols(left_schema, on)?;
            let rk = cols(right_schema, on)?;
            let keep: Vec<usize> = (0..right_schema.len()).filter(|i| !rk.contains(i)).collect();
            let mut index: HashMap<Vec<Value>, Vec<usize>> = HashMap::new();
            for (i, r) in right_rows.iter().enumerate() {
                let k: Vec<Value> = rk.iter().map(|&c| r[c].clone()).collect();
                if k.iter().all(|v| !v.is_null()) {
                    index.entry(k).or_default().push(i);
                }
            }
            for l in rows {
                let k: Vec<Value> = lk.iter().map(|&c| l[c].clone()).collect();
                for &ri in index.get(&k).map(Vec::as_slice).unwrap_or(&[]) {
                    let mut r = l.clone();
                    r.extend(keep.iter().map(|&c| right_rows[ri][c].clone()));
                    out.push(r);
                }
            }
        }
        LogicalOp::Sink => out = rows,
    }
    Ok((out_schema, out))
}

/// Sorts rows into a canonical order for multiset comparison.
pub fn canonical_rows(mut rows: Vec<Row>) -> Vec<Row> {
    rows.sort_by(|a, b| {
        for (x, y) in a.iter().zip(b) {
            let o = value_compare(x, y);
            if o != Ordering::Equal {
                return o;
            }
        }
        a.len().cmp(&b.len())
    });
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{AggFunc, AggItem, Expr, PatternGraph};
    use crate::testkit::g0;

    fn fig4() -> PlanTree {
        let mut p = PatternGraph::default();
        p.add_vertex("a", Some(0));
        p.add_vertex("b", Some(0));
        p.add_vertex("c", Some(1));
        p.add_edge("a", "b", 0, "_e0", false);
        p.add_edge("b", "c", 1, "_e1", false);
        PlanTree::unary(
            LogicalOp::Sink,
            PlanTree::unary(
                LogicalOp::Project { items: vec![(Expr::prop("c", "price"), "price".into())] },
                PlanTree::leaf(LogicalOp::Match { pattern: p }),
            ),
        )
    }

    #[test]
    fn friend_purchases_on_g0() {
        let snap = g0().snapshot();
        let (_, rows) = evaluate(&fig4(), snap.as_ref(), &HashMap::new()).unwrap();
        let flat: Vec<f64> = canonical_rows(rows).into_iter().map(|r| r[0].as_f64().unwrap()).collect();
        assert_eq!(flat, vec![50.0, 50.0, 100.0]);
    }

    #[test]
    fn global_count_on_empty_input() {
        let snap = g0().snapshot();
        let tree = PlanTree::unary(
            LogicalOp::Group {
                keys: vec![],
                aggs: vec![AggItem { func: AggFunc::Count, arg: None, distinct: false, name: "n".into() }],
            },
            PlanTree::unary(LogicalOp::Select { pred: Expr::lit(false) }, fig4().inputs[0].inputs[0].clone()),
        );
        let (_, rows) = evaluate(&tree, snap.as_ref(), &HashMap::new()).unwrap();
        assert_eq!(rows, vec![vec![Value::Int64(0)]]);
    }

    #[test]
    fn paths_bfs_levels() {
        let snap = g0().snapshot();
        let b1 = VertexRef::new(0, 0);
        let paths = expand_paths(snap.as_ref(), b1, Direction::Out, 0, 0, 3);
        let lens: Vec<usize> = paths.iter().map(|p| p.len()).collect();
        assert_eq!(lens, vec![0, 1, 2]);
        let both = expand_paths(snap.as_ref(), VertexRef::new(0, 1), Direction::Both, 0, 1, 2);
        // b2 reaches b1 and b3 in one hop; no edge may repeat.
        assert_eq!(both.len(), 2);
    }
}
