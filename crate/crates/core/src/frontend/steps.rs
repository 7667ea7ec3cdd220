//! Fluent traversal steps, lowered to the same IR as Cypher.
//!
//! Diagnostics report `line` 1 and `col` = 1-based step index.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ir::{AggFunc, AggItem, Endpoint, Expr, FieldSchema, LogicalDag, LogicalOp, PlanTree, VertexSource};
use crate::model::{CmpOp, DataType, Direction, PropertyGraphSchema, TypeId, Value};

use super::{parse_pattern, Diagnostic};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderKey {
    /// Property of the current element; `None` orders by the element itself.
    #[serde(default)]
    pub prop: Option<String>,
    #[serde(default)]
    pub desc: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggSpec {
    /// One of count, sum, min, max, avg, collect.
    pub func: String,
    #[serde(default)]
    pub prop: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Step {
    V {
        #[serde(default)]
        label: Option<String>,
    },
    /// `value` is JSON; `{"$param": "name"}` refers to a query parameter.
    Has { prop: String, op: String, value: serde_json::Value },
    Out { etype: String },
    In { etype: String },
    Both { etype: String },
    OutE { etype: String },
    InE { etype: String },
    BothE { etype: String },
    InV,
    OutV,
    OtherV,
    Values { prop: String },
    Path { min: u32, max: u32, etype: String },
    Match { patterns: Vec<String> },
    As { alias: String },
    Select { aliases: Vec<String> },
    Order { by: Vec<OrderKey> },
    Group {
        #[serde(default)]
        by: Option<String>,
        agg: AggSpec,
    },
    Count,
    Limit { n: u64 },
}

/// Builder over a step list.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Steps(pub Vec<Step>);

impl Steps {
    pub fn new() -> Self {
        Steps(Vec::new())
    }

    fn step(mut self, s: Step) -> Self {
        self.0.push(s);
        self
    }

    pub fn v(self, label: &str) -> Self {
        self.step(Step::V { label: Some(label.into()) })
    }

    pub fn v_any(self) -> Self {
        self.step(Step::V { label: None })
    }

    pub fn has(self, prop: &str, op: CmpOp, value: impl Into<serde_json::Value>) -> Self {
        self.step(Step::Has { prop: prop.into(), op: op.symbol().into(), value: value.into() })
    }

    pub fn has_param(self, prop: &str, op: CmpOp, param: &str) -> Self {
        self.step(Step::Has { prop: prop.into(), op: op.symbol().into(), value: serde_json::json!({ "$param": param }) })
    }

    pub fn out(self, etype: &str) -> Self {
        self.step(Step::Out { etype: etype.into() })
    }

    pub fn in_(self, etype: &str) -> Self {
        self.step(Step::In { etype: etype.into() })
    }

    pub fn both(self, etype: &str) -> Self {
        self.step(Step::Both { etype: etype.into() })
    }

    pub fn out_e(self, etype: &str) -> Self {
        self.step(Step::OutE { etype: etype.into() })
    }

    pub fn in_e(self, etype: &str) -> Self {
        self.step(Step::InE { etype: etype.into() })
    }

    pub fn both_e(self, etype: &str) -> Self {
        self.step(Step::BothE { etype: etype.into() })
    }

    pub fn in_v(self) -> Self {
        self.step(Step::InV)
    }

    pub fn out_v(self) -> Self {
        self.step(Step::OutV)
    }

    pub fn other_v(self) -> Self {
        self.step(Step::OtherV)
    }

    pub fn values(self, prop: &str) -> Self {
        self.step(Step::Values { prop: prop.into() })
    }

    pub fn path(self, min: u32, max: u32, etype: &str) -> Self {
        self.step(Step::Path { min, max, etype: etype.into() })
    }

    pub fn match_(self, patterns: &[&str]) -> Self {
        self.step(Step::Match { patterns: patterns.iter().map(|p| p.to_string()).collect() })
    }

    pub fn as_(self, alias: &str) -> Self {
        self.step(Step::As { alias: alias.into() })
    }

    pub fn select(self, aliases: &[&str]) -> Self {
        self.step(Step::Select { aliases: aliases.iter().map(|a| a.to_string()).collect() })
    }

    pub fn order(self, by: Option<&str>, desc: bool) -> Self {
        self.step(Step::Order { by: vec![OrderKey { prop: by.map(Into::into), desc }] })
    }

    pub fn group(self, by: Option<&str>, func: &str, prop: Option<&str>) -> Self {
        self.step(Step::Group { by: by.map(Into::into), agg: AggSpec { func: func.into(), prop: prop.map(Into::into) } })
    }

    pub fn count(self) -> Self {
        self.step(Step::Count)
    }

    pub fn limit(self, n: u64) -> Self {
        self.step(Step::Limit { n })
    }
}

/// What the traverser currently points at.
#[derive(Clone, Debug)]
enum Head {
    Vertex(String),
    /// Edge alias, the vertex it was expanded from, and the direction.
    Edge(String, String, Direction),
    Path(String),
    Value(String),
}

struct Lower<'s> {
    schema: &'s PropertyGraphSchema,
    cur: Option<PlanTree>,
    scope: FieldSchema,
    head: Option<Head>,
    vertices: Vec<String>,
    used: HashSet<String>,
    at: u32,
}

fn parse_cmp(op: &str) -> Option<CmpOp> {
    Some(match op {
        "=" | "==" | "eq" => CmpOp::Eq,
        "<>" | "!=" | "neq" => CmpOp::Ne,
        "<" | "lt" => CmpOp::Lt,
        "<=" | "lte" => CmpOp::Le,
        ">" | "gt" => CmpOp::Gt,
        ">=" | "gte" => CmpOp::Ge,
        _ => return None,
    })
}

impl<'s> Lower<'s> {
    fn diag<T>(&self, msg: impl Into<String>) -> Result<T, Diagnostic> {
        Err(Diagnostic::new(1, self.at, msg))
    }

    fn fresh(&mut self, prefix: &str) -> String {
        let mut n = 0;
        loop {
            let a = format!("_{prefix}{n}");
            if self.used.insert(a.clone()) {
                return a;
            }
            n += 1;
        }
    }

    fn push(&mut self, op: LogicalOp) -> Result<(), Diagnostic> {
        let Some(cur) = self.cur.take() else {
            return self.diag("traversal must start with V() or match()");
        };
        match op.infer_schema(&[&self.scope], self.schema) {
            Ok(s) => {
                self.scope = s;
                self.cur = Some(PlanTree::unary(op, cur));
                Ok(())
            }
            Err(e) => {
                self.cur = Some(cur);
                self.diag(e.to_string())
            }
        }
    }

    fn head_vertex(&self) -> Result<String, Diagnostic> {
        match &self.head {
            Some(Head::Vertex(v)) => Ok(v.clone()),
            _ => self.diag("step needs the traverser on a vertex"),
        }
    }

    fn etype(&self, name: &str) -> Result<TypeId, Diagnostic> {
        match self.schema.edge_type_id(name) {
            Some(t) => Ok(t),
            None => self.diag(format!("unknown edge type \"{name}\"")),
        }
    }

    fn label_of(&self, alias: &str) -> Option<TypeId> {
        self.scope.get(alias).and_then(|f| f.label)
    }

    /// Rejects expansions that can never match from the head's type.
    fn check_expand(&self, from: &str, dir: Direction, et: TypeId) -> Result<(), Diagnostic> {
        let Some(l) = self.label_of(from) else { return Ok(()) };
        let (s, d) = self.schema.edge_endpoints(et);
        let ok = match dir {
            Direction::Out => s == l,
            Direction::In => d == l,
            Direction::Both => s == l || d == l,
        };
        if ok {
            Ok(())
        } else {
            self.diag(format!(
                "{} edges never touch {} in that direction",
                self.schema.edge_type(et).name,
                self.schema.vertex_type(l).name
            ))
        }
    }

    fn check_prop(&self, alias: &str, prop: &str) -> Result<(), Diagnostic> {
        let f = self.scope.get(alias).expect("head is in scope");
        let s = self.schema;
        let found = match (&f.dtype, f.label) {
            (DataType::Vertex, Some(t)) => s.vertex_prop_index(t, prop).is_some(),
            (DataType::Edge, Some(t)) => s.edge_prop_index(t, prop).is_some(),
            (DataType::Vertex, None) => s.vertex_types.iter().any(|t| t.properties.iter().any(|p| p.name == prop)),
            (DataType::Edge, None) => s.edge_types.iter().any(|t| t.properties.iter().any(|p| p.name == prop)),
            _ => return self.diag(format!("'{alias}' has no properties")),
        };
        if found {
            return Ok(());
        }
        match (&f.dtype, f.label) {
            (DataType::Vertex, Some(t)) => {
                self.diag(format!("{prop} is not a property of vertex type {}", s.vertex_type(t).name))
            }
            (DataType::Edge, Some(t)) => self.diag(format!("{prop} is not a property of edge type {}", s.edge_type(t).name)),
            _ => self.diag(format!("no type has property {prop}")),
        }
    }

    /// The graph element the head refers to, for property steps.
    fn element(&self) -> Result<String, Diagnostic> {
        match &self.head {
            Some(Head::Vertex(a)) | Some(Head::Edge(a, _, _)) => Ok(a.clone()),
            Some(Head::Value(_)) | Some(Head::Path(_)) => self.diag("step needs the traverser on a vertex or edge"),
            None => self.diag("traversal must start with V() or match()"),
        }
    }

    fn has(&mut self, prop: &str, op: &str, value: &serde_json::Value) -> Result<(), Diagnostic> {
        let alias = self.element()?;
        self.check_prop(&alias, prop)?;
        let Some(op) = parse_cmp(op) else {
            return self.diag(format!("unknown comparison '{op}'"));
        };
        let rhs = match value.get("$param").and_then(|p| p.as_str()) {
            Some(p) => Expr::Param(p.into()),
            None => Expr::Lit(Value::from_json(value)),
        };
        let pred = Expr::cmp(op, Expr::prop(&alias, prop), rhs);
        // Merge into the graph op that introduced the head, if it is the root.
        if let Some(cur) = self.cur.as_mut() {
            let slot = match &mut cur.op {
                LogicalOp::GetVertex { pred, out, .. } if *out == alias => Some(pred),
                LogicalOp::ExpandEdge { pred, out, .. } if *out == alias => Some(pred),
                LogicalOp::ExpandVertex { pred, out, .. } if *out == alias => Some(pred),
                _ => None,
            };
            if let Some(slot) = slot {
                *slot = Some(match slot.take() {
                    Some(p) => Expr::and(p, pred),
                    None => pred,
                });
                return Ok(());
            }
        }
        self.push(LogicalOp::Select { pred })
    }

    fn expand_edge(&mut self, etype: &str, dir: Direction, per_neighbor: bool) -> Result<String, Diagnostic> {
        let from = self.head_vertex()?;
        let et = self.etype(etype)?;
        self.check_expand(&from, dir, et)?;
        let e = self.fresh("e");
        self.push(LogicalOp::ExpandEdge {
            input: from.clone(),
            dir,
            etype: et,
            pred: None,
            out: e.clone(),
            per_neighbor,
            close_with: None,
        })?;
        self.head = Some(Head::Edge(e.clone(), from, dir));
        Ok(e)
    }

    fn endpoint(&mut self, which: Endpoint, anchor_side: bool) -> Result<(), Diagnostic> {
        let edge = match &self.head {
            Some(Head::Edge(e, ..)) | Some(Head::Path(e)) => e.clone(),
            _ => return self.diag("step needs the traverser on an edge or path"),
        };
        let anchor = match &self.head {
            Some(Head::Edge(_, a, _)) => Some(a.clone()),
            _ => None,
        };
        if matches!(self.head, Some(Head::Path(_))) && matches!(which, Endpoint::Other(_)) {
            return self.endpoint(Endpoint::End, false);
        }
        let distinct_from =
            self.vertices.iter().filter(|v| !(anchor_side && anchor.as_deref() == Some(v.as_str()))).cloned().collect();
        let v = self.fresh("v");
        self.push(LogicalOp::GetVertex {
            mode: VertexSource::FromEdge { edge, which },
            label: None,
            pred: None,
            distinct_from,
            out: v.clone(),
        })?;
        self.vertices.push(v.clone());
        self.head = Some(Head::Vertex(v));
        Ok(())
    }

    fn step(&mut self, step: &Step) -> Result<(), Diagnostic> {
        match step {
            Step::V { label } => {
                if self.cur.is_some() {
                    return self.diag("V() must be the first step");
                }
                let label = match label {
                    Some(l) => match self.schema.vertex_type_id(l) {
                        Some(t) => Some(t),
                        None => return self.diag(format!("unknown label \"{l}\"")),
                    },
                    None => None,
                };
                let v = self.fresh("v");
                let op = LogicalOp::GetVertex { mode: VertexSource::Scan, label, pred: None, distinct_from: vec![], out: v.clone() };
                self.scope = op.infer_schema(&[], self.schema).map_err(|e| Diagnostic::new(1, self.at, e.to_string()))?;
                self.cur = Some(PlanTree::leaf(op));
                self.vertices.push(v.clone());
                self.head = Some(Head::Vertex(v));
            }
            Step::Has { prop, op, value } => self.has(prop, op, value)?,
            Step::Out { etype } | Step::In { etype } | Step::Both { etype } => {
                let dir = match step {
                    Step::Out { .. } => Direction::Out,
                    Step::In { .. } => Direction::In,
                    _ => Direction::Both,
                };
                let from = self.head_vertex()?;
                self.expand_edge(etype, dir, true)?;
                self.endpoint(Endpoint::Other(from), false)?;
            }
            Step::OutE { etype } => drop(self.expand_edge(etype, Direction::Out, false)?),
            Step::InE { etype } => drop(self.expand_edge(etype, Direction::In, false)?),
            Step::BothE { etype } => drop(self.expand_edge(etype, Direction::Both, false)?),
            Step::InV | Step::OutV | Step::OtherV => {
                let (anchor, dir) = match &self.head {
                    Some(Head::Edge(_, a, d)) => (Some(a.clone()), *d),
                    _ => (None, Direction::Out),
                };
                let (which, anchor_side) = match (step, anchor) {
                    (Step::OtherV, Some(a)) => (Endpoint::Other(a), false),
                    (Step::InV, _) => (Endpoint::End, dir == Direction::In),
                    (Step::OutV, _) => (Endpoint::Start, dir == Direction::Out),
                    _ => (Endpoint::End, false),
                };
                self.endpoint(which, anchor_side)?;
            }
            Step::Values { prop } => {
                let alias = self.element()?;
                self.check_prop(&alias, prop)?;
                self.push(LogicalOp::Project { items: vec![(Expr::prop(&alias, prop), prop.clone())] })?;
                self.head = Some(Head::Value(prop.clone()));
            }
            Step::Path { min, max, etype } => {
                let from = self.head_vertex()?;
                let et = self.etype(etype)?;
                self.check_expand(&from, Direction::Out, et)?;
                if min > max {
                    return self.diag(format!("empty hop range {min}..{max}"));
                }
                let p = self.fresh("p");
                self.push(LogicalOp::Path { input: from, dir: Direction::Out, etype: et, min: *min, max: *max, out: p.clone() })?;
                self.head = Some(Head::Path(p));
            }
            Step::Match { patterns } => {
                let text = patterns.join(", ");
                let mut used = std::mem::take(&mut self.used);
                let parsed = parse_pattern(&text, self.schema, &mut used);
                self.used = used;
                let (pattern, last) = parsed.map_err(|d| Diagnostic::new(1, self.at, format!("match(): {}", d.message)))?;
                let op = LogicalOp::Match { pattern: pattern.clone() };
                let ms = op.infer_schema(&[], self.schema).map_err(|e| Diagnostic::new(1, self.at, e.to_string()))?;
                match self.cur.take() {
                    None => {
                        self.cur = Some(PlanTree::leaf(op));
                        self.scope = ms;
                    }
                    Some(left) => {
                        let on: Vec<String> =
                            pattern.vertices.iter().filter(|v| self.scope.get(&v.alias).is_some()).map(|v| v.alias.clone()).collect();
                        let join = LogicalOp::Join { on };
                        let s = join.infer_schema(&[&self.scope, &ms], self.schema).map_err(|e| Diagnostic::new(1, self.at, e.to_string()));
                        let s = match s {
                            Ok(s) => s,
                            Err(d) => {
                                self.cur = Some(left);
                                return Err(d);
                            }
                        };
                        self.cur = Some(PlanTree { op: join, inputs: vec![left, PlanTree::leaf(op)] });
                        self.scope = s;
                    }
                }
                for v in &pattern.vertices {
                    if !self.vertices.contains(&v.alias) {
                        self.vertices.push(v.alias.clone());
                    }
                }
                self.head = Some(Head::Vertex(last));
            }
            Step::As { alias } => {
                let cur = self.element().or_else(|_| match &self.head {
                    Some(Head::Path(p)) => Ok(p.clone()),
                    _ => self.diag("as() needs a vertex, edge or path"),
                })?;
                if self.scope.get(alias).is_some() {
                    return self.diag(format!("'{alias}' is already bound"));
                }
                if !cur.starts_with('_') {
                    return self.diag(format!("'{cur}' already has a name"));
                }
                let map = HashMap::from([(cur.clone(), alias.clone())]);
                self.cur = self.cur.as_ref().map(|t| t.rename(&map));
                self.scope = rename_fields(&self.scope, &map);
                for v in &mut self.vertices {
                    if *v == cur {
                        *v = alias.clone();
                    }
                }
                self.used.insert(alias.clone());
                self.head = Some(match self.head.take().expect("checked") {
                    Head::Vertex(_) => Head::Vertex(alias.clone()),
                    Head::Edge(_, a, d) => Head::Edge(alias.clone(), a, d),
                    Head::Path(_) => Head::Path(alias.clone()),
                    h => h,
                });
            }
            Step::Select { aliases } => {
                if aliases.is_empty() {
                    return self.diag("select() needs at least one alias");
                }
                for a in aliases {
                    if self.scope.get(a).is_none() {
                        return self.diag(format!("unknown alias '{a}'"));
                    }
                }
                self.push(LogicalOp::Project { items: aliases.iter().map(|a| (Expr::field(a), a.clone())).collect() })?;
                self.head = Some(Head::Value(aliases[0].clone()));
            }
            Step::Order { by } => {
                let mut keys = Vec::new();
                for k in by {
                    let e = match &k.prop {
                        Some(p) => {
                            let a = self.element()?;
                            self.check_prop(&a, p)?;
                            Expr::prop(&a, p)
                        }
                        None => match &self.head {
                            Some(Head::Vertex(a) | Head::Edge(a, ..) | Head::Path(a) | Head::Value(a)) => Expr::field(a),
                            None => return self.diag("order() needs an input"),
                        },
                    };
                    keys.push((e, k.desc));
                }
                self.push(LogicalOp::Order { keys, limit: None })?;
            }
            Step::Group { by, agg } => {
                let Some(func) = AggFunc::from_name(&agg.func) else {
                    return self.diag(format!("unknown aggregate '{}'", agg.func));
                };
                let head = match &self.head {
                    Some(Head::Vertex(a) | Head::Edge(a, ..) | Head::Path(a) | Head::Value(a)) => a.clone(),
                    None => return self.diag("group() needs an input"),
                };
                let keys = match by {
                    Some(p) => {
                        let a = self.element()?;
                        self.check_prop(&a, p)?;
                        vec![(Expr::prop(&a, p), p.clone())]
                    }
                    None => vec![(Expr::field(&head), head.clone())],
                };
                let arg = match &agg.prop {
                    Some(p) => {
                        let a = self.element()?;
                        self.check_prop(&a, p)?;
                        Some(Expr::prop(&a, p))
                    }
                    None if func == AggFunc::Count => None,
                    None => Some(Expr::field(&head)),
                };
                let name = func.name().to_lowercase();
                if keys.iter().any(|(_, n)| *n == name) {
                    return self.diag(format!("group key collides with '{name}'"));
                }
                self.push(LogicalOp::Group { keys, aggs: vec![AggItem { func, arg, distinct: false, name: name.clone() }] })?;
                self.head = Some(Head::Value(name));
            }
            Step::Count => {
                if self.cur.is_none() {
                    return self.diag("count() needs an input");
                }
                self.push(LogicalOp::Group {
                    keys: vec![],
                    aggs: vec![AggItem { func: AggFunc::Count, arg: None, distinct: false, name: "count".into() }],
                })?;
                self.head = Some(Head::Value("count".into()));
            }
            Step::Limit { n } => self.push(LogicalOp::Limit { n: *n })?,
        }
        Ok(())
    }
}

fn rename_fields(s: &FieldSchema, map: &HashMap<String, String>) -> FieldSchema {
    let mut out = FieldSchema::default();
    for f in &s.fields {
        let mut f = f.clone();
        if let Some(n) = map.get(&f.name) {
            f.name = n.clone();
        }
        out.fields.push(f);
    }
    out
}

fn value_producing(s: &Step) -> bool {
    matches!(s, Step::Values { .. } | Step::Select { .. } | Step::Group { .. } | Step::Count)
}

/// Lowers a step chain. `out()` and friends become an EXPAND_EDGE plus
/// GET_VERTEX pair; fusing them is left to the optimizer.
pub fn steps_to_dag(chain: &Steps, schema: &PropertyGraphSchema) -> Result<LogicalDag, Diagnostic> {
    let steps = &chain.0;
    if steps.is_empty() {
        return Err(Diagnostic::new(1, 1, "empty step chain"));
    }
    let used: HashSet<String> = steps
        .iter()
        .flat_map(|s| match s {
            Step::As { alias } => vec![alias.clone()],
            Step::Select { aliases } => aliases.clone(),
            _ => vec![],
        })
        .collect();
    let mut l = Lower { schema, cur: None, scope: FieldSchema::default(), head: None, vertices: vec![], used, at: 1 };
    for (i, s) in steps.iter().enumerate() {
        l.at = i as u32 + 1;
        l.step(s)?;
    }
    let last_value = steps.iter().rposition(value_producing);
    let tail_ok = last_value.is_some_and(|i| steps[i + 1..].iter().all(|s| matches!(s, Step::Order { .. } | Step::Limit { .. })));
    if !tail_ok {
        return Err(Diagnostic::new(
            1,
            steps.len() as u32,
            "chain must end in a value-producing step (values, select, group or count)",
        ));
    }
    l.at = steps.len() as u32;
    l.push(LogicalOp::Sink)?;
    let tree = l.cur.expect("non-empty");
    LogicalDag::from_tree(Arc::new(schema.clone()), &tree).map_err(|e| Diagnostic::new(1, 1, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::g0_schema;

    #[test]
    fn friend_purchases_chain() {
        let s = Steps::new().v("Buyer").has("username", CmpOp::Eq, "A1").out("Knows").out("Buy").values("price");
        let dag = steps_to_dag(&s, &g0_schema()).unwrap();
        assert_eq!(dag.kinds(), vec!["GET_VERTEX", "EXPAND_EDGE", "GET_VERTEX", "EXPAND_EDGE", "GET_VERTEX", "PROJECT", "SINK"]);
        assert_eq!(dag.output_schema().unwrap().to_string(), "[price:float64]");
    }

    #[test]
    fn edge_property_is_checked() {
        let s = Steps::new().v("Buyer").out_e("Buy").values("price");
        let d = steps_to_dag(&s, &g0_schema()).unwrap_err();
        assert_eq!(d.col, 3);
        assert!(d.message.contains("price is not a property of edge type Buy"), "{d}");
    }

    #[test]
    fn empty_and_unterminated_chains() {
        assert!(steps_to_dag(&Steps::new(), &g0_schema()).is_err());
        let d = steps_to_dag(&Steps::new().v("Buyer").out("Knows"), &g0_schema()).unwrap_err();
        assert!(d.message.contains("value-producing"));
        let d = steps_to_dag(&Steps::new().v("Item").out("Knows").count(), &g0_schema()).unwrap_err();
        assert_eq!(d.col, 2);
    }

    #[test]
    fn json_round_trip_and_match_step() {
        let s = Steps::new()
            .match_(&["(a:Buyer)-[:Knows]->(b:Buyer)"])
            .has_param("credits", CmpOp::Gt, "min")
            .group(None, "count", None)
            .order(None, true)
            .limit(3);
        let text = serde_json::to_string(&s).unwrap();
        let back: Steps = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        let dag = steps_to_dag(&back, &g0_schema()).unwrap();
        assert_eq!(dag.kinds(), vec!["MATCH", "SELECT", "GROUP", "ORDER", "LIMIT", "SINK"]);
        assert_eq!(dag.params(), vec!["min"]);
    }

    #[test]
    fn as_and_select() {
        let s = Steps::new().v("Buyer").as_("a").out_e("Buy").as_("r").in_v().as_("i").select(&["a", "r", "i"]);
        let dag = steps_to_dag(&s, &g0_schema()).unwrap();
        let g = g0_schema();
        assert_eq!(dag.output_schema().unwrap().render(&g), "[a:Buyer, r:Buy, i:Item]");
    }
}
