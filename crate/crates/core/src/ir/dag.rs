//! Logical operators, DAG assembly with type checking, and JSON rendering.

use std::collections::HashMap;
use std::sync::Arc;

use serde_json::{json, Value as Json};

use crate::model::{DataType, Direction, PropertyGraphSchema, TypeId, Value};

use super::{infer_type, AggItem, Expr, Field, FieldSchema, IrError, PatternGraph};

/// Which endpoint of an edge (or path) a vertex is read from.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Start,
    End,
    /// The endpoint opposite the vertex bound to the named alias.
    Other(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum VertexSource {
    Scan,
    FromEdge { edge: String, which: Endpoint },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum LogicalOp {
    /// Scan of `label` (every type when `None`), or endpoint extraction.
    /// The new vertex must differ from every alias in `distinct_from`.
    GetVertex { mode: VertexSource, label: Option<TypeId>, pred: Option<Expr>, distinct_from: Vec<String>, out: String },
    /// `per_neighbor` keeps one edge per distinct neighbor; `close_with`
    /// keeps only edges reaching the vertex already bound to that alias.
    ExpandEdge {
        input: String,
        dir: Direction,
        etype: TypeId,
        pred: Option<Expr>,
        out: String,
        per_neighbor: bool,
        close_with: Option<String>,
    },
    ExpandVertex {
        input: String,
        dir: Direction,
        etype: TypeId,
        label: Option<TypeId>,
        pred: Option<Expr>,
        distinct_from: Vec<String>,
        per_neighbor: bool,
        out: String,
    },
    Match { pattern: PatternGraph },
    Path { input: String, dir: Direction, etype: TypeId, min: u32, max: u32, out: String },
    Project { items: Vec<(Expr, String)> },
    Select { pred: Expr },
    Order { keys: Vec<(Expr, bool)>, limit: Option<u64> },
    Group { keys: Vec<(Expr, String)>, aggs: Vec<AggItem> },
    Limit { n: u64 },
    Join { on: Vec<String> },
    Sink,
}

impl LogicalOp {
    pub fn kind(&self) -> &'static str {
        match self {
            LogicalOp::GetVertex { mode: VertexSource::Scan, .. } => "GET_VERTEX",
            LogicalOp::GetVertex { .. } => "GET_VERTEX",
            LogicalOp::ExpandEdge { .. } => "EXPAND_EDGE",
            LogicalOp::ExpandVertex { .. } => "EXPAND_VERTEX",
            LogicalOp::Match { .. } => "MATCH",
            LogicalOp::Path { .. } => "PATH",
            LogicalOp::Project { .. } => "PROJECT",
            LogicalOp::Select { .. } => "SELECT",
            LogicalOp::Order { .. } => "ORDER",
            LogicalOp::Group { .. } => "GROUP",
            LogicalOp::Limit { .. } => "LIMIT",
            LogicalOp::Join { .. } => "JOIN",
            LogicalOp::Sink => "SINK",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            LogicalOp::GetVertex { mode: VertexSource::Scan, .. } | LogicalOp::Match { .. } => 0,
            LogicalOp::Join { .. } => 2,
            _ => 1,
        }
    }

    pub fn is_source(&self) -> bool {
        self.arity() == 0
    }

    /// Every expression the op evaluates.
    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
            LogicalOp::GetVertex { pred, .. } | LogicalOp::ExpandEdge { pred, .. } | LogicalOp::ExpandVertex { pred, .. } => {
                pred.iter().collect()
            }
            LogicalOp::Match { pattern } => pattern
                .vertices
                .iter()
                .filter_map(|v| v.pred.as_ref())
                .chain(pattern.edges.iter().filter_map(|e| e.pred.as_ref()))
                .collect(),
            LogicalOp::Project { items } => items.iter().map(|(e, _)| e).collect(),
            LogicalOp::Select { pred } => vec![pred],
            LogicalOp::Order { keys, .. } => keys.iter().map(|(e, _)| e).collect(),
            LogicalOp::Group { keys, aggs } => {
                keys.iter().map(|(e, _)| e).chain(aggs.iter().filter_map(|a| a.arg.as_ref())).collect()
            }
            _ => vec![],
        }
    }

    /// Input aliases the op reads (excluding its own outputs).
    pub fn reads(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let own: Vec<String> = match self {
            LogicalOp::GetVertex { out: o, .. } | LogicalOp::ExpandEdge { out: o, .. } | LogicalOp::ExpandVertex { out: o, .. } => {
                vec![o.clone()]
            }
            LogicalOp::Match { pattern } => pattern
                .vertices
                .iter()
                .map(|v| v.alias.clone())
                .chain(pattern.edges.iter().map(|e| e.alias.clone()))
                .collect(),
            _ => vec![],
        };
        for e in self.exprs() {
            out.extend(e.aliases().into_iter().filter(|a| !own.contains(a)));
        }
        match self {
            LogicalOp::GetVertex { mode, distinct_from, .. } => {
                if let VertexSource::FromEdge { edge, which } = mode {
                    out.push(edge.clone());
                    if let Endpoint::Other(a) = which {
                        out.push(a.clone());
                    }
                }
                out.extend(distinct_from.iter().cloned());
            }
            LogicalOp::ExpandEdge { input, close_with, .. } => {
                out.push(input.clone());
                out.extend(close_with.iter().cloned());
            }
            LogicalOp::ExpandVertex { input, distinct_from, .. } => {
                out.push(input.clone());
                out.extend(distinct_from.iter().cloned());
            }
            LogicalOp::Path { input, .. } => out.push(input.clone()),
            LogicalOp::Join { on } => out.extend(on.iter().cloned()),
            _ => {}
        }
        out.sort();
        out.dedup();
        out
    }

    /// Output schema given the input schemas (empty slice for sources).
    pub fn infer_schema(&self, inputs: &[&FieldSchema], graph: &PropertyGraphSchema) -> Result<FieldSchema, IrError> {
        let none = HashMap::new();
        let expect_bool = |e: &Expr, fields: &FieldSchema| -> Result<(), IrError> {
            match infer_type(e, fields, graph, &none)? {
                DataType::Bool | DataType::Null => Ok(()),
                t => Err(IrError::Type(format!("predicate {e} has type {t}, expected bool"))),
            }
        };
        let no_agg = |e: &Expr| -> Result<(), IrError> {
            if e.contains_agg() {
                Err(IrError::Type(format!("aggregate {e} outside GROUP")))
            } else {
                Ok(())
            }
        };
        let vertex_field = |fields: &FieldSchema, alias: &str| -> Result<Option<TypeId>, IrError> {
            Ok(fields.require(alias, &DataType::Vertex)?.label)
        };
        let input = inputs.first().copied();
        let mut s = input.cloned().unwrap_or_default();
        match self {
            LogicalOp::GetVertex { mode, label, pred, distinct_from, out } => {
                let lbl = match mode {
                    VertexSource::Scan => *label,
                    VertexSource::FromEdge { edge, which } => {
                        let f = s.get(edge).ok_or_else(|| IrError::unknown_alias(edge, &s))?;
                        let implied = match (&f.dtype, f.label) {
                            (DataType::Edge, Some(et)) => {
                                let (a, b) = graph.edge_endpoints(et);
                                match which {
                                    Endpoint::Start => Some(a),
                                    Endpoint::End => Some(b),
                                    Endpoint::Other(anchor) => {
                                        vertex_field(&s, anchor)?;
                                        (a == b).then_some(a)
                                    }
                                }
                            }
                            (DataType::Edge, None) => None,
                            (DataType::Path, _) => {
                                if let Endpoint::Other(_) = which {
                                    return Err(IrError::Type("Other endpoint of a path".into()));
                                }
                                None
                            }
                            (t, _) => {
                                return Err(IrError::TypeError { alias: edge.clone(), expected: "edge or path".into(), found: t.to_string() })
                            }
                        };
                        label.or(implied)
                    }
                };
                for d in distinct_from {
                    vertex_field(&s, d)?;
                }
                s.push(Field::new(out, DataType::Vertex, lbl))?;
                if let Some(p) = pred {
                    expect_bool(p, &s)?;
                }
            }
            LogicalOp::ExpandEdge { input, etype, pred, out, close_with, .. } => {
                check_etype(graph, *etype)?;
                vertex_field(&s, input)?;
                if let Some(c) = close_with {
                    vertex_field(&s, c)?;
                }
                s.push(Field::new(out, DataType::Edge, Some(*etype)))?;
                if let Some(p) = pred {
                    expect_bool(p, &s)?;
                }
            }
            LogicalOp::ExpandVertex { input, dir, etype, label, pred, distinct_from, out, .. } => {
                check_etype(graph, *etype)?;
                let from = vertex_field(&s, input)?;
                for d in distinct_from {
                    vertex_field(&s, d)?;
                }
                let (a, b) = graph.edge_endpoints(*etype);
                let implied = match dir {
                    Direction::Out => Some(b),
                    Direction::In => Some(a),
                    Direction::Both if a == b => Some(a),
                    Direction::Both => match from {
                        Some(t) if t == a => Some(b),
                        Some(t) if t == b => Some(a),
                        _ => None,
                    },
                };
                s.push(Field::new(out, DataType::Vertex, label.or(implied)))?;
                if let Some(p) = pred {
                    expect_bool(p, &s)?;
                }
            }
            LogicalOp::Match { pattern } => {
                pattern.validate(graph)?;
                s = pattern.output_schema(graph);
            }
            LogicalOp::Path { input, etype, min, max, out, .. } => {
                check_etype(graph, *etype)?;
                vertex_field(&s, input)?;
                if min > max {
                    return Err(IrError::Invalid(format!("path bounds {min}..{max}")));
                }
                s.push(Field::new(out, DataType::Path, None))?;
            }
            LogicalOp::Project { items } => {
                let mut next = FieldSchema::default();
                for (e, name) in items {
                    no_agg(e)?;
                    let dtype = infer_type(e, &s, graph, &none)?;
                    next.push(Field::new(name, dtype, label_of(e, &s)))?;
                }
                s = next;
            }
            LogicalOp::Select { pred } => {
                no_agg(pred)?;
                expect_bool(pred, &s)?;
            }
            LogicalOp::Order { keys, .. } => {
                for (k, _) in keys {
                    no_agg(k)?;
                    infer_type(k, &s, graph, &none)?;
                }
            }
            LogicalOp::Group { keys, aggs } => {
                let mut next = FieldSchema::default();
                for (e, name) in keys {
                    no_agg(e)?;
                    next.push(Field::new(name, infer_type(e, &s, graph, &none)?, label_of(e, &s)))?;
                }
                for a in aggs {
                    if let Some(arg) = &a.arg {
                        no_agg(arg)?;
                    }
                    next.push(Field::new(&a.name, infer_type(&a.expr(), &s, graph, &none)?, None))?;
                }
                s = next;
            }
            LogicalOp::Limit { .. } | LogicalOp::Sink => {}
            LogicalOp::Join { on } => {
                let right = inputs.get(1).copied().ok_or_else(|| IrError::Invalid("JOIN needs two inputs".into()))?;
                for a in on {
                    let l = s.get(a).ok_or_else(|| IrError::unknown_alias(a, &s))?;
                    let r = right.get(a).ok_or_else(|| IrError::unknown_alias(a, right))?;
                    if l.dtype != r.dtype {
                        return Err(IrError::TypeError { alias: a.clone(), expected: l.dtype.to_string(), found: r.dtype.to_string() });
                    }
                }
                for f in &right.fields {
                    if !on.contains(&f.name) {
                        s.push(f.clone())?;
                    }
                }
            }
        }
        Ok(s)
    }

    fn details(&self, graph: &PropertyGraphSchema) -> Json {
        let vname = |t: &Option<TypeId>| t.map(|t| graph.vertex_type(t).name.clone());
        let ename = |t: TypeId| graph.edge_type(t).name.clone();
        let pred_s = |p: &Option<Expr>| p.as_ref().map(|e| e.to_string());
        let dir_s = |d: &Direction| format!("{d:?}");
        match self {
            LogicalOp::GetVertex { mode, label, pred, distinct_from, out } => {
                let mode = match mode {
                    VertexSource::Scan => json!("Scan"),
                    VertexSource::FromEdge { edge, which } => json!({"from_edge": edge, "which": match which {
                        Endpoint::Start => "Start".to_string(),
                        Endpoint::End => "End".to_string(),
                        Endpoint::Other(a) => format!("Other({a})"),
                    }}),
                };
                json!({"mode": mode, "label": vname(label), "pred": pred_s(pred), "distinct_from": distinct_from, "out": out})
            }
            LogicalOp::ExpandEdge { input, dir, etype, pred, out, per_neighbor, close_with } => json!({
                "in": input, "direction": dir_s(dir), "etype": ename(*etype), "pred": pred_s(pred), "out": out,
                "per_neighbor": per_neighbor, "close_with": close_with,
            }),
            LogicalOp::ExpandVertex { input, dir, etype, label, pred, distinct_from, per_neighbor, out } => json!({
                "in": input, "direction": dir_s(dir), "etype": ename(*etype), "label": vname(label), "pred": pred_s(pred),
                "distinct_from": distinct_from, "per_neighbor": per_neighbor, "out": out, "fused": true,
            }),
            LogicalOp::Match { pattern } => json!({
                "vertices": pattern.vertices.iter().map(|v| json!({"alias": v.alias, "label": vname(&v.label), "pred": pred_s(&v.pred)})).collect::<Vec<_>>(),
                "edges": pattern.edges.iter().map(|e| json!({
                    "src": e.src, "dst": e.dst, "etype": ename(e.etype), "both": e.both, "pred": pred_s(&e.pred),
                    "alias": e.alias, "named": e.named,
                })).collect::<Vec<_>>(),
            }),
            LogicalOp::Path { input, dir, etype, min, max, out } => {
                json!({"in": input, "direction": dir_s(dir), "etype": ename(*etype), "min": min, "max": max, "out": out})
            }
            LogicalOp::Project { items } => {
                json!({"items": items.iter().map(|(e, n)| json!({"expr": e.to_string(), "as": n})).collect::<Vec<_>>()})
            }
            LogicalOp::Select { pred } => json!({"pred": pred.to_string()}),
            LogicalOp::Order { keys, limit } => json!({
                "keys": keys.iter().map(|(e, d)| json!({"expr": e.to_string(), "desc": d})).collect::<Vec<_>>(),
                "limit": limit,
            }),
            LogicalOp::Group { keys, aggs } => json!({
                "keys": keys.iter().map(|(e, n)| json!({"expr": e.to_string(), "as": n})).collect::<Vec<_>>(),
                "aggs": aggs.iter().map(|a| json!({"agg": a.expr().to_string(), "as": a.name})).collect::<Vec<_>>(),
            }),
            LogicalOp::Limit { n } => json!({"n": n}),
            LogicalOp::Join { on } => json!({"on": on}),
            LogicalOp::Sink => json!({}),
        }
    }
}

fn check_etype(graph: &PropertyGraphSchema, etype: TypeId) -> Result<(), IrError> {
    if (etype as usize) < graph.edge_type_count() {
        Ok(())
    } else {
        Err(IrError::Invalid(format!("unknown edge type id {etype}")))
    }
}

fn label_of(e: &Expr, s: &FieldSchema) -> Option<TypeId> {
    match e {
        Expr::Field(a) => s.get(a).and_then(|f| f.label),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub op: LogicalOp,
    pub inputs: Vec<usize>,
    /// Output schema; `None` until every input is connected.
    pub schema: Option<FieldSchema>,
}

/// Validated operator DAG. Nodes are added first and wired with
/// [`LogicalDag::connect`], which type-checks each connection.
#[derive(Clone, Debug)]
pub struct LogicalDag {
    graph: Arc<PropertyGraphSchema>,
    nodes: Vec<Node>,
}

/// Tree view of a DAG where every op feeds exactly one consumer.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PlanTree {
    pub op: LogicalOp,
    pub inputs: Vec<PlanTree>,
}

impl PlanTree {
    pub fn leaf(op: LogicalOp) -> Self {
        PlanTree { op, inputs: vec![] }
    }

    pub fn unary(op: LogicalOp, input: PlanTree) -> Self {
        PlanTree { op, inputs: vec![input] }
    }

    /// Ops in post order (inputs before consumers).
    pub fn ops(&self) -> Vec<&LogicalOp> {
        let mut out = Vec::new();
        fn walk<'a>(t: &'a PlanTree, out: &mut Vec<&'a LogicalOp>) {
            for i in &t.inputs {
                walk(i, out);
            }
            out.push(&t.op);
        }
        walk(self, &mut out);
        out
    }

    pub fn kinds(&self) -> Vec<&'static str> {
        self.ops().into_iter().map(LogicalOp::kind).collect()
    }

    /// Renames every alias (inputs, outputs, pattern and column names).
    pub fn rename(&self, map: &HashMap<String, String>) -> PlanTree {
        PlanTree { op: self.op.rename(map), inputs: self.inputs.iter().map(|i| i.rename(map)).collect() }
    }
}

impl LogicalOp {
    pub fn rename(&self, map: &HashMap<String, String>) -> LogicalOp {
        let r = |a: &String| map.get(a).cloned().unwrap_or_else(|| a.clone());
        let rv = |v: &Vec<String>| v.iter().map(r).collect::<Vec<_>>();
        let re = |e: &Option<Expr>| e.as_ref().map(|e| e.rename(map));
        match self {
            LogicalOp::GetVertex { mode, label, pred, distinct_from, out } => LogicalOp::GetVertex {
                mode: match mode {
                    VertexSource::Scan => VertexSource::Scan,
                    VertexSource::FromEdge { edge, which } => VertexSource::FromEdge {
                        edge: r(edge),
                        which: match which {
                            Endpoint::Other(a) => Endpoint::Other(r(a)),
                            w => w.clone(),
                        },
                    },
                },
                label: *label,
                pred: re(pred),
                distinct_from: rv(distinct_from),
                out: r(out),
            },
            LogicalOp::ExpandEdge { input, dir, etype, pred, out, per_neighbor, close_with } => LogicalOp::ExpandEdge {
                input: r(input),
                dir: *dir,
                etype: *etype,
                pred: re(pred),
                out: r(out),
                per_neighbor: *per_neighbor,
                close_with: close_with.as_ref().map(r),
            },
            LogicalOp::ExpandVertex { input, dir, etype, label, pred, distinct_from, per_neighbor, out } => {
                LogicalOp::ExpandVertex {
                    input: r(input),
                    dir: *dir,
                    etype: *etype,
                    label: *label,
                    pred: re(pred),
                    distinct_from: rv(distinct_from),
                    per_neighbor: *per_neighbor,
                    out: r(out),
                }
            }
            LogicalOp::Match { pattern } => {
                let mut p = pattern.clone();
                for v in &mut p.vertices {
                    v.alias = r(&v.alias);
                    v.pred = re(&v.pred);
                }
                for e in &mut p.edges {
                    e.src = r(&e.src);
                    e.dst = r(&e.dst);
                    e.alias = r(&e.alias);
                    e.pred = re(&e.pred);
                }
                LogicalOp::Match { pattern: p }
            }
            LogicalOp::Path { input, dir, etype, min, max, out } => {
                LogicalOp::Path { input: r(input), dir: *dir, etype: *etype, min: *min, max: *max, out: r(out) }
            }
            LogicalOp::Project { items } => LogicalOp::Project { items: items.iter().map(|(e, n)| (e.rename(map), r(n))).collect() },
            LogicalOp::Select { pred } => LogicalOp::Select { pred: pred.rename(map) },
            LogicalOp::Order { keys, limit } => {
                LogicalOp::Order { keys: keys.iter().map(|(e, d)| (e.rename(map), *d)).collect(), limit: *limit }
            }
            LogicalOp::Group { keys, aggs } => LogicalOp::Group {
                keys: keys.iter().map(|(e, n)| (e.rename(map), r(n))).collect(),
                aggs: aggs
                    .iter()
                    .map(|a| AggItem { func: a.func, arg: a.arg.as_ref().map(|e| e.rename(map)), distinct: a.distinct, name: r(&a.name) })
                    .collect(),
            },
            LogicalOp::Join { on } => LogicalOp::Join { on: rv(on) },
            LogicalOp::Limit { .. } | LogicalOp::Sink => self.clone(),
        }
    }
}

impl LogicalDag {
    pub fn new(graph: Arc<PropertyGraphSchema>) -> Self {
        LogicalDag { graph, nodes: Vec::new() }
    }

    pub fn graph_schema(&self) -> &Arc<PropertyGraphSchema> {
        &self.graph
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Adds an unconnected op. Sources are type-checked immediately.
    pub fn add(&mut self, op: LogicalOp) -> Result<usize, IrError> {
        let schema = if op.is_source() { Some(op.infer_schema(&[], &self.graph)?) } else { None };
        self.nodes.push(Node { op, inputs: Vec::new(), schema });
        Ok(self.nodes.len() - 1)
    }

    fn reaches(&self, from: usize, to: usize) -> bool {
        // Whether `to` is upstream of (or equal to) `from`.
        let mut stack = vec![from];
        let mut seen = vec![false; self.nodes.len()];
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if !std::mem::replace(&mut seen[n], true) {
                stack.extend(self.nodes[n].inputs.iter().copied());
            }
        }
        false
    }

    /// Wires `producer` into the next input slot of `consumer`. The edge
    /// is kept only if the consumer's requirements are met.
    pub fn connect(&mut self, producer: usize, consumer: usize) -> Result<(), IrError> {
        let n = self.nodes.len();
        if producer >= n || consumer >= n {
            return Err(IrError::Invalid(format!("unknown op id {}", producer.max(consumer))));
        }
        if self.reaches(producer, consumer) {
            return Err(IrError::CycleError { producer, consumer });
        }
        let arity = self.nodes[consumer].op.arity();
        if self.nodes[consumer].inputs.len() >= arity {
            return Err(IrError::Invalid(format!("{} accepts {arity} input(s)", self.nodes[consumer].op.kind())));
        }
        if self.nodes[producer].schema.is_none() {
            return Err(IrError::Invalid(format!("op {producer} is not connected to a source yet")));
        }
        self.nodes[consumer].inputs.push(producer);
        if self.nodes[consumer].inputs.len() == arity {
            let inputs: Vec<&FieldSchema> =
                self.nodes[consumer].inputs.iter().map(|&i| self.nodes[i].schema.as_ref().expect("checked")).collect();
            match self.nodes[consumer].op.infer_schema(&inputs, &self.graph) {
                Ok(s) => self.nodes[consumer].schema = Some(s),
                Err(e) => {
                    self.nodes[consumer].inputs.pop();
                    return Err(e);
                }
            }
        }
        Ok(())
    }

    /// Adds `op` fed by `input`.
    pub fn chain(&mut self, input: usize, op: LogicalOp) -> Result<usize, IrError> {
        let id = self.add(op)?;
        if let Err(e) = self.connect(input, id) {
            self.nodes.pop();
            return Err(e);
        }
        Ok(id)
    }

    pub fn schema_of(&self, id: usize) -> Option<&FieldSchema> {
        self.nodes.get(id).and_then(|n| n.schema.as_ref())
    }

    pub fn sink(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.op == LogicalOp::Sink)
    }

    /// Output schema of the sink.
    pub fn output_schema(&self) -> Option<&FieldSchema> {
        self.sink().and_then(|s| self.schema_of(s))
    }

    /// Whole-DAG checks: one sink, every op typed and feeding a consumer.
    pub fn validate(&self) -> Result<(), IrError> {
        let sinks = self.nodes.iter().filter(|n| n.op == LogicalOp::Sink).count();
        if sinks != 1 {
            return Err(IrError::Invalid(format!("expected exactly one SINK, found {sinks}")));
        }
        let mut consumers = vec![0usize; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            if n.schema.is_none() || n.inputs.len() != n.op.arity() {
                return Err(IrError::Invalid(format!("op {i} ({}) is not fully connected", n.op.kind())));
            }
            for &p in &n.inputs {
                consumers[p] += 1;
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.op != LogicalOp::Sink && consumers[i] == 0 {
                return Err(IrError::Invalid(format!("op {i} ({}) has no consumer", n.op.kind())));
            }
        }
        Ok(())
    }

    pub fn to_tree(&self) -> Result<PlanTree, IrError> {
        self.validate()?;
        let mut uses = vec![0usize; self.nodes.len()];
        for n in &self.nodes {
            for &p in &n.inputs {
                uses[p] += 1;
            }
        }
        if uses.iter().any(|&u| u > 1) {
            return Err(IrError::Invalid("shared sub-plans are not supported".into()));
        }
        fn build(dag: &LogicalDag, id: usize) -> PlanTree {
            let n = &dag.nodes[id];
            PlanTree { op: n.op.clone(), inputs: n.inputs.iter().map(|&i| build(dag, i)).collect() }
        }
        Ok(build(self, self.sink().expect("validated")))
    }

    /// Rebuilds a DAG from a tree, re-checking every connection.
    pub fn from_tree(graph: Arc<PropertyGraphSchema>, tree: &PlanTree) -> Result<LogicalDag, IrError> {
        fn add(dag: &mut LogicalDag, t: &PlanTree) -> Result<usize, IrError> {
            let inputs: Vec<usize> = t.inputs.iter().map(|i| add(dag, i)).collect::<Result<_, _>>()?;
            let id = dag.add(t.op.clone())?;
            for i in inputs {
                dag.connect(i, id)?;
            }
            Ok(id)
        }
        let mut dag = LogicalDag::new(graph);
        add(&mut dag, tree)?;
        dag.validate()?;
        Ok(dag)
    }

    /// EXPLAIN rendering: `{"ops":[{"id","kind",...}],"edges":[[p,c]]}`.
    pub fn to_json(&self) -> Json {
        let ops: Vec<Json> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(id, n)| {
                let mut o = json!({"id": id, "kind": n.op.kind()});
                if let (Json::Object(m), Json::Object(d)) = (&mut o, n.op.details(&self.graph)) {
                    m.extend(d);
                    if let Some(s) = &n.schema {
                        m.insert("schema".into(), json!(s.render(&self.graph)));
                    }
                }
                o
            })
            .collect();
        let edges: Vec<Json> =
            self.nodes.iter().enumerate().flat_map(|(c, n)| n.inputs.iter().map(move |&p| json!([p, c]))).collect();
        json!({"ops": ops, "edges": edges})
    }

    pub fn kinds(&self) -> Vec<&'static str> {
        self.to_tree().map(|t| t.kinds()).unwrap_or_default()
    }

    /// Parameters referenced anywhere in the plan.
    pub fn params(&self) -> Vec<String> {
        let mut out: Vec<String> = self.nodes.iter().flat_map(|n| n.op.exprs()).flat_map(|e| e.params()).collect();
        out.sort();
        out.dedup();
        out
    }

    /// Fails with `ParamUnbound` if any referenced parameter lacks a value.
    pub fn check_params(&self, params: &HashMap<String, Value>) -> Result<(), IrError> {
        match self.params().into_iter().find(|p| !params.contains_key(p)) {
            Some(p) => Err(IrError::ParamUnbound(p)),
            None => Ok(()),
        }
    }
}

impl PartialEq for LogicalDag {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && *self.graph == *other.graph
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CmpOp;
    use crate::testkit::g0_schema;

    fn scan(label: u32, out: &str) -> LogicalOp {
        LogicalOp::GetVertex { mode: VertexSource::Scan, label: Some(label), pred: None, distinct_from: vec![], out: out.into() }
    }

    #[test]
    fn connect_checks_aliases() {
        let mut dag = LogicalDag::new(Arc::new(g0_schema()));
        let s = dag.add(scan(0, "a")).unwrap();
        let ok = dag.add(LogicalOp::ExpandEdge {
            input: "a".into(),
            dir: Direction::Out,
            etype: 1,
            pred: None,
            out: "e".into(),
            per_neighbor: false,
            close_with: None,
        });
        dag.connect(s, ok.unwrap()).unwrap();
        let p = dag.add(LogicalOp::Project { items: vec![(Expr::prop("b", "price"), "price".into())] }).unwrap();
        match dag.connect(s, p) {
            Err(IrError::TypeError { alias, .. }) => assert_eq!(alias, "b"),
            other => panic!("{other:?}"),
        }
        assert!(dag.nodes()[p].inputs.is_empty());
    }

    #[test]
    fn cycle_rejected() {
        let mut dag = LogicalDag::new(Arc::new(g0_schema()));
        let s = dag.add(scan(0, "a")).unwrap();
        let sel = dag.chain(s, LogicalOp::Select { pred: Expr::lit(true) }).unwrap();
        let lim = dag.chain(sel, LogicalOp::Limit { n: 3 }).unwrap();
        assert!(matches!(dag.connect(lim, sel), Err(IrError::CycleError { .. })));
    }

    #[test]
    fn schema_inference_chain() {
        let g = Arc::new(g0_schema());
        let mut pattern = PatternGraph::default();
        pattern.add_vertex("a", Some(0));
        pattern.add_vertex("b", Some(0));
        pattern.add_vertex("c", Some(1));
        pattern.add_edge("a", "b", 0, "_e0", false);
        pattern.add_edge("b", "c", 1, "_e1", false);
        let mut dag = LogicalDag::new(g.clone());
        let m = dag.add(LogicalOp::Match { pattern }).unwrap();
        assert_eq!(dag.schema_of(m).unwrap().render(&g), "[a:Buyer, b:Buyer, c:Item]");
        let p = dag.chain(m, LogicalOp::Project { items: vec![(Expr::prop("c", "price"), "price".into())] }).unwrap();
        assert_eq!(dag.schema_of(p).unwrap().to_string(), "[price:float64]");
        let sel = dag.chain(p, LogicalOp::Select { pred: Expr::cmp(CmpOp::Gt, Expr::field("price"), Expr::lit(1.0)) }).unwrap();
        dag.chain(sel, LogicalOp::Sink).unwrap();
        dag.validate().unwrap();
        assert_eq!(dag.kinds(), vec!["MATCH", "PROJECT", "SELECT", "SINK"]);
        let json = dag.to_json();
        assert_eq!(json["edges"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn group_schema() {
        let g = Arc::new(g0_schema());
        let mut dag = LogicalDag::new(g);
        let s = dag.add(scan(0, "a")).unwrap();
        let grp = dag
            .chain(
                s,
                LogicalOp::Group {
                    keys: vec![(Expr::field("a"), "a".into())],
                    aggs: vec![AggItem { func: super::super::AggFunc::Count, arg: Some(Expr::field("a")), distinct: false, name: "cnt".into() }],
                },
            )
            .unwrap();
        assert_eq!(dag.schema_of(grp).unwrap().to_string(), "[a:vertex, cnt:int64]");
    }
}
