//! Pattern graphs and the brute-force matching oracle.

use std::collections::{BTreeSet, HashMap, VecDeque};

use crate::model::{DataType, Direction, EdgeRef, PropertyGraphSchema, TypeId, Value, VertexRef};
use crate::retrieval::GraphSnapshot;

use super::{compile, CExpr, Expr, Field, FieldSchema, IrError};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PatternVertex {
    pub alias: String,
    pub label: Option<TypeId>,
    /// May reference only `alias`.
    pub pred: Option<Expr>,
}

/// A typed pattern edge from `src` to `dst`. With `both` set it matches
/// data edges in either orientation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PatternEdge {
    pub src: String,
    pub dst: String,
    pub etype: TypeId,
    pub both: bool,
    pub pred: Option<Expr>,
    /// Anonymous edges carry generated aliases starting with `_` and
    /// `named == false`; they bind once per neighbor pair.
    pub alias: String,
    pub named: bool,
}

impl PatternEdge {
    pub fn touches(&self, alias: &str) -> bool {
        self.src == alias || self.dst == alias
    }

    pub fn other(&self, alias: &str) -> &str {
        if self.src == alias {
            &self.dst
        } else {
            &self.src
        }
    }

    /// Traversal direction when walking from `from`.
    pub fn direction_from(&self, from: &str) -> Direction {
        if self.both {
            Direction::Both
        } else if self.src == from {
            Direction::Out
        } else {
            Direction::In
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct PatternGraph {
    pub vertices: Vec<PatternVertex>,
    pub edges: Vec<PatternEdge>,
}

impl PatternGraph {
    pub fn vertex(&self, alias: &str) -> Option<&PatternVertex> {
        self.vertices.iter().find(|v| v.alias == alias)
    }

    pub fn vertex_index(&self, alias: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v.alias == alias)
    }

    pub fn add_vertex(&mut self, alias: &str, label: Option<TypeId>) {
        self.vertices.push(PatternVertex { alias: alias.to_string(), label, pred: None });
    }

    pub fn add_edge(&mut self, src: &str, dst: &str, etype: TypeId, alias: &str, named: bool) {
        self.edges.push(PatternEdge {
            src: src.to_string(),
            dst: dst.to_string(),
            etype,
            both: false,
            pred: None,
            alias: alias.to_string(),
            named,
        });
    }

    /// Adds `pred` as a conjunct of the vertex or edge named `alias`.
    pub fn add_pred(&mut self, alias: &str, pred: Expr) -> bool {
        let slot = if let Some(v) = self.vertices.iter_mut().find(|v| v.alias == alias) {
            &mut v.pred
        } else if let Some(e) = self.edges.iter_mut().find(|e| e.alias == alias) {
            &mut e.pred
        } else {
            return false;
        };
        *slot = Some(match slot.take() {
            None => pred,
            Some(prev) => Expr::and(prev, pred),
        });
        true
    }

    /// Vertex label, falling back to the single type implied by an
    /// incident directed edge.
    pub fn effective_label(&self, alias: &str, schema: &PropertyGraphSchema) -> Option<TypeId> {
        if let Some(l) = self.vertex(alias).and_then(|v| v.label) {
            return Some(l);
        }
        for e in self.edges.iter().filter(|e| e.touches(alias)) {
            let (s, d) = schema.edge_endpoints(e.etype);
            if s == d {
                return Some(s);
            }
            if !e.both {
                return Some(if e.src == alias { s } else { d });
            }
        }
        None
    }

    /// Candidate types for a pattern vertex.
    pub fn candidate_types(&self, alias: &str, schema: &PropertyGraphSchema) -> Vec<TypeId> {
        match self.effective_label(alias, schema) {
            Some(l) => vec![l],
            None => {
                let mut allowed: BTreeSet<TypeId> = schema.vertex_type_ids().collect();
                for e in self.edges.iter().filter(|e| e.touches(alias)) {
                    let (s, d) = schema.edge_endpoints(e.etype);
                    allowed.retain(|t| *t == s || *t == d);
                }
                allowed.into_iter().collect()
            }
        }
    }

    pub fn is_connected(&self) -> bool {
        let all: Vec<usize> = (0..self.vertices.len()).collect();
        self.subset_connected(&all)
    }

    /// Whether the vertices at `subset` induce a connected subpattern.
    pub fn subset_connected(&self, subset: &[usize]) -> bool {
        if subset.is_empty() {
            return false;
        }
        let names: BTreeSet<&str> = subset.iter().map(|&i| self.vertices[i].alias.as_str()).collect();
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([self.vertices[subset[0]].alias.as_str()]);
        seen.insert(self.vertices[subset[0]].alias.as_str());
        while let Some(a) = queue.pop_front() {
            for e in self.edges.iter().filter(|e| e.touches(a)) {
                let o = e.other(a);
                if names.contains(o) && seen.insert(o) {
                    queue.push_back(o);
                }
            }
        }
        seen.len() == names.len()
    }

    /// Subpattern induced by the vertices at `subset`, keeping their order.
    pub fn induced(&self, subset: &[usize]) -> PatternGraph {
        let mut idx: Vec<usize> = subset.to_vec();
        idx.sort_unstable();
        let vertices: Vec<PatternVertex> = idx.iter().map(|&i| self.vertices[i].clone()).collect();
        let names: BTreeSet<&str> = vertices.iter().map(|v| v.alias.as_str()).collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| names.contains(e.src.as_str()) && names.contains(e.dst.as_str()))
            .cloned()
            .collect();
        PatternGraph { vertices, edges }
    }

    /// One field per vertex alias, then one per named edge alias.
    pub fn output_schema(&self, schema: &PropertyGraphSchema) -> FieldSchema {
        let mut fields: Vec<Field> = self
            .vertices
            .iter()
            .map(|v| Field::new(&v.alias, DataType::Vertex, self.effective_label(&v.alias, schema)))
            .collect();
        fields.extend(self.edges.iter().filter(|e| e.named).map(|e| Field::new(&e.alias, DataType::Edge, Some(e.etype))));
        FieldSchema::new(fields)
    }

    /// Structural and type checks: unique aliases, edges over declared
    /// vertices, endpoint types compatible with labels, single-alias predicates.
    pub fn validate(&self, schema: &PropertyGraphSchema) -> Result<(), IrError> {
        let mut seen = BTreeSet::new();
        for a in self.vertices.iter().map(|v| &v.alias).chain(self.edges.iter().map(|e| &e.alias)) {
            if !seen.insert(a.as_str()) {
                return Err(IrError::TypeError { alias: a.clone(), expected: "unique alias".into(), found: "duplicate".into() });
            }
        }
        if self.vertices.is_empty() {
            return Err(IrError::Invalid("empty pattern".into()));
        }
        for e in &self.edges {
            for end in [&e.src, &e.dst] {
                if self.vertex(end).is_none() {
                    return Err(IrError::missing_alias(end));
                }
            }
            if e.src == e.dst {
                return Err(IrError::Invalid(format!("pattern edge {} is a self-loop on {}", e.alias, e.src)));
            }
            let (s, d) = schema.edge_endpoints(e.etype);
            let ok = |alias: &str, want: &[TypeId]| match self.vertex(alias).and_then(|v| v.label) {
                Some(l) => want.contains(&l),
                None => true,
            };
            let fits = if e.both {
                ok(&e.src, &[s, d]) && ok(&e.dst, &[s, d]) && (ok(&e.src, &[s]) && ok(&e.dst, &[d]) || ok(&e.src, &[d]) && ok(&e.dst, &[s]))
            } else {
                ok(&e.src, &[s]) && ok(&e.dst, &[d])
            };
            if !fits {
                return Err(IrError::TypeError {
                    alias: e.alias.clone(),
                    expected: format!("{} -> {}", schema.vertex_type(s).name, schema.vertex_type(d).name),
                    found: format!("pattern edge {} - {}", e.src, e.dst),
                });
            }
        }
        if !self.is_connected() {
            return Err(IrError::Invalid("pattern is not connected".into()));
        }
        let out = self.output_schema(schema);
        let check = |owner: &str, pred: &Option<Expr>, fields: &FieldSchema| -> Result<(), IrError> {
            if let Some(p) = pred {
                if let Some(other) = p.aliases().into_iter().find(|a| a != owner) {
                    return Err(IrError::Invalid(format!("predicate on {owner} references {other}")));
                }
                super::infer_type(p, fields, schema, &HashMap::new())?;
            }
            Ok(())
        };
        let mut with_edges = out.clone();
        for e in self.edges.iter().filter(|e| !e.named) {
            with_edges.fields.push(Field::new(&e.alias, DataType::Edge, Some(e.etype)));
        }
        for v in &self.vertices {
            check(&v.alias, &v.pred, &with_edges)?;
        }
        for e in &self.edges {
            check(&e.alias, &e.pred, &with_edges)?;
        }
        Ok(())
    }

    /// Vertex aliases in BFS order from the first vertex.
    pub fn bfs_order(&self) -> Vec<usize> {
        let mut order = vec![0];
        let mut seen = vec![false; self.vertices.len()];
        seen[0] = true;
        let mut i = 0;
        while i < order.len() {
            let a = &self.vertices[order[i]].alias;
            for e in self.edges.iter().filter(|e| e.touches(a)) {
                let j = self.vertex_index(e.other(a)).expect("validated pattern");
                if !seen[j] {
                    seen[j] = true;
                    order.push(j);
                }
            }
            i += 1;
        }
        order
    }
}

/// Data edges of type `etype` joining `a` and `b` as the pattern edge demands.
fn edges_between(snap: &dyn GraphSnapshot, pe: &PatternEdge, a: VertexRef, b: VertexRef) -> Vec<EdgeRef> {
    let (s, d) = snap.schema().edge_endpoints(pe.etype);
    let mut out = Vec::new();
    let mut scan = |from: VertexRef, to: VertexRef| {
        if from.vtype == s && to.vtype == d {
            if let Ok(it) = snap.adjacency(from, Direction::Out, pe.etype) {
                out.extend(it.filter(|(n, _)| *n == to).map(|(_, e)| e));
            }
        }
    };
    scan(a, b);
    if pe.both {
        scan(b, a);
    }
    out
}

/// Every vertex-injective, type- and predicate-consistent embedding of
/// `pattern`. Rows follow [`PatternGraph::output_schema`]. Candidates come
/// from full type scans, never from adjacency expansion, so this stays
/// independent of the engines it checks.
pub fn match_semantics(
    pattern: &PatternGraph,
    snap: &dyn GraphSnapshot,
    params: &HashMap<String, Value>,
) -> Result<Vec<Vec<Value>>, IrError> {
    let schema = snap.schema();
    pattern.validate(schema)?;
    // Layout: vertex aliases, then every edge alias (named or not).
    let mut layout: Vec<String> = pattern.vertices.iter().map(|v| v.alias.clone()).collect();
    layout.extend(pattern.edges.iter().map(|e| e.alias.clone()));
    let nv = pattern.vertices.len();
    let vpreds: Vec<Option<CExpr>> = pattern
        .vertices
        .iter()
        .map(|v| v.pred.as_ref().map(|p| compile(p, &layout, schema, params)).transpose())
        .collect::<Result<_, _>>()?;
    let epreds: Vec<Option<CExpr>> = pattern
        .edges
        .iter()
        .map(|e| e.pred.as_ref().map(|p| compile(p, &layout, schema, params)).transpose())
        .collect::<Result<_, _>>()?;
    let order = pattern.bfs_order();
    let pos: Vec<usize> = {
        let mut p = vec![0; nv];
        for (i, &v) in order.iter().enumerate() {
            p[v] = i;
        }
        p
    };
    // Edges become checkable once both endpoints are assigned.
    let mut closing: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for (ei, e) in pattern.edges.iter().enumerate() {
        let a = pattern.vertex_index(&e.src).expect("validated");
        let b = pattern.vertex_index(&e.dst).expect("validated");
        closing[pos[a].max(pos[b])].push(ei);
    }
    let candidates: Vec<Vec<VertexRef>> = order
        .iter()
        .map(|&vi| {
            let mut all = Vec::new();
            for t in pattern.candidate_types(&pattern.vertices[vi].alias, schema) {
                let n = snap.vertex_count(t).unwrap_or(0);
                all.extend((0..n).map(|i| VertexRef::new(t, i)));
            }
            all
        })
        .collect();

    struct Ctx<'a> {
        pattern: &'a PatternGraph,
        snap: &'a dyn GraphSnapshot,
        order: Vec<usize>,
        closing: Vec<Vec<usize>>,
        candidates: Vec<Vec<VertexRef>>,
        vpreds: Vec<Option<CExpr>>,
        epreds: Vec<Option<CExpr>>,
        nv: usize,
        out: Vec<Vec<Value>>,
    }

    fn assign_edges(ctx: &mut Ctx<'_>, row: &mut Vec<Value>, depth: usize, k: usize) {
        if k == ctx.closing[depth].len() {
            place(ctx, row, depth + 1);
            return;
        }
        let ei = ctx.closing[depth][k];
        let pe = &ctx.pattern.edges[ei];
        let a = row[ctx.pattern.vertex_index(&pe.src).expect("validated")].as_vertex().expect("assigned");
        let b = row[ctx.pattern.vertex_index(&pe.dst).expect("validated")].as_vertex().expect("assigned");
        let mut found = edges_between(ctx.snap, pe, a, b);
        let slot = ctx.nv + ei;
        if let Some(p) = &ctx.epreds[ei] {
            found.retain(|e| {
                row[slot] = Value::Edge(*e);
                p.holds(row, ctx.snap)
            });
        }
        if !pe.named {
            found.truncate(1);
        }
        for e in found {
            row[slot] = Value::Edge(e);
            assign_edges(ctx, row, depth, k + 1);
        }
        row[slot] = Value::Null;
    }

    fn place(ctx: &mut Ctx<'_>, row: &mut Vec<Value>, depth: usize) {
        if depth == ctx.order.len() {
            let mut out: Vec<Value> = row[..ctx.nv].to_vec();
            for (ei, e) in ctx.pattern.edges.iter().enumerate() {
                if e.named {
                    out.push(row[ctx.nv + ei].clone());
                }
            }
            ctx.out.push(out);
            return;
        }
        let vi = ctx.order[depth];
        for ci in 0..ctx.candidates[depth].len() {
            let v = ctx.candidates[depth][ci];
            if row[..ctx.nv].iter().any(|x| x.as_vertex() == Some(v)) {
                continue;
            }
            row[vi] = Value::Vertex(v);
            if let Some(p) = &ctx.vpreds[vi] {
                if !p.holds(row, ctx.snap) {
                    continue;
                }
            }
            assign_edges(ctx, row, depth, 0);
        }
        row[vi] = Value::Null;
    }

    let mut ctx = Ctx { pattern, snap, order, closing, candidates, vpreds, epreds, nv, out: Vec::new() };
    let mut row = vec![Value::Null; layout.len()];
    place(&mut ctx, &mut row, 0);
    Ok(ctx.out)
}

pub fn match_count(pattern: &PatternGraph, snap: &dyn GraphSnapshot) -> Result<u64, IrError> {
    Ok(match_semantics(pattern, snap, &HashMap::new())?.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CmpOp;
    use crate::testkit::g0;

    fn chain() -> PatternGraph {
        let mut p = PatternGraph::default();
        p.add_vertex("a", Some(0));
        p.add_vertex("b", Some(0));
        p.add_vertex("c", Some(1));
        p.add_edge("a", "b", 0, "_e0", false);
        p.add_edge("b", "c", 1, "_e1", false);
        p
    }

    fn v(t: u32, i: u64) -> Value {
        Value::Vertex(VertexRef::new(t, i))
    }

    #[test]
    fn g0_friend_purchases() {
        let snap = g0().snapshot();
        let mut rows = match_semantics(&chain(), snap.as_ref(), &HashMap::new()).unwrap();
        rows.sort();
        assert_eq!(rows, vec![vec![v(0, 0), v(0, 1), v(1, 0)], vec![v(0, 0), v(0, 1), v(1, 1)], vec![v(0, 1), v(0, 2), v(1, 1)]]);
    }

    #[test]
    fn single_vertex_and_triangle() {
        let snap = g0().snapshot();
        let mut p = PatternGraph::default();
        p.add_vertex("x", Some(2));
        assert_eq!(match_semantics(&p, snap.as_ref(), &HashMap::new()).unwrap(), vec![vec![v(2, 0)]]);
        let mut tri = PatternGraph::default();
        for a in ["a", "b", "c"] {
            tri.add_vertex(a, Some(0));
        }
        tri.add_edge("a", "b", 0, "_0", false);
        tri.add_edge("b", "c", 0, "_1", false);
        tri.add_edge("c", "a", 0, "_2", false);
        assert_eq!(match_count(&tri, snap.as_ref()).unwrap(), 0);
    }

    #[test]
    fn predicates_and_named_edges() {
        let snap = g0().snapshot();
        let mut p = chain();
        p.add_pred("a", Expr::cmp(CmpOp::Eq, Expr::prop("a", "username"), Expr::lit("A1")));
        assert_eq!(match_count(&p, snap.as_ref()).unwrap(), 2);
        let mut q = PatternGraph::default();
        q.add_vertex("b", None);
        q.add_vertex("i", None);
        q.add_edge("b", "i", 1, "r", true);
        q.add_pred("r", Expr::cmp(CmpOp::Gt, Expr::prop("r", "date"), Expr::lit(2i64)));
        assert_eq!(q.output_schema(snap.schema()).names(), vec!["b", "i", "r"]);
        assert_eq!(match_count(&q, snap.as_ref()).unwrap(), 2);
    }

    #[test]
    fn undirected_binds_both_orientations_once() {
        let snap = g0().snapshot();
        let mut p = PatternGraph::default();
        p.add_vertex("x", Some(0));
        p.add_vertex("y", Some(0));
        p.add_edge("x", "y", 0, "_k", false);
        p.edges[0].both = true;
        assert_eq!(match_count(&p, snap.as_ref()).unwrap(), 4);
    }

    #[test]
    fn rejects_bad_patterns() {
        let schema = crate::testkit::g0_schema();
        let mut p = PatternGraph::default();
        p.add_vertex("a", Some(1));
        p.add_vertex("b", Some(0));
        p.add_edge("a", "b", 0, "_e", false);
        assert!(matches!(p.validate(&schema), Err(IrError::TypeError { .. })));
        let mut q = PatternGraph::default();
        q.add_vertex("a", Some(0));
        q.add_vertex("b", Some(0));
        assert!(q.validate(&schema).is_err());
    }
}
