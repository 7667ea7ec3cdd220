//! Physical operators compiled against their input layouts and bound
//! parameters; shared by both backends.

use std::collections::{HashMap, HashSet};

use crate::ir::reference::{compare_keys, dedup_neighbors, expand_paths, neighbors};
use crate::ir::{compile, AggItem, CExpr, Endpoint, FieldSchema, GroupState, IrError, LogicalOp, VertexSource};
use crate::model::{Direction, PropertyGraphSchema, TypeId, Value, VertexRef};
use crate::retrieval::{partition_of, GraphSnapshot, PropertyPredicate, RetrievalError};

use super::{ExecError, PhysNode, PhysicalOp, Route, SourceAccess};

pub type Row = Vec<Value>;

pub(crate) enum Access {
    Scan,
    Pk(Value),
    Pushdown(PropertyPredicate),
}

pub(crate) struct SourceK {
    types: Vec<TypeId>,
    pred: Option<CExpr>,
    access: Access,
}

impl SourceK {
    /// Rows of the vertices owned by `shard`.
    pub fn rows(&self, snap: &dyn GraphSnapshot, shard: u32, shards: u32) -> Result<Vec<Row>, ExecError> {
        let mut out = Vec::new();
        let emit = |v: VertexRef, out: &mut Vec<Row>| {
            let row = vec![Value::Vertex(v)];
            if self.pred.as_ref().is_none_or(|p| p.holds(&row, snap)) {
                out.push(row);
            }
        };
        for &t in &self.types {
            match &self.access {
                Access::Scan => {
                    let n = snap.vertex_count(t)?;
                    let mut i = shard as u64;
                    while i < n {
                        emit(VertexRef::new(t, i), &mut out);
                        i += shards.max(1) as u64;
                    }
                }
                Access::Pk(key) => match snap.lookup_by_pk(t, key) {
                    Ok(v) if partition_of(v, shards) == shard => emit(v, &mut out),
                    Ok(_) | Err(RetrievalError::NotFound) => {}
                    Err(e) => return Err(e.into()),
                },
                Access::Pushdown(pred) => {
                    for i in snap.filtered_vertices(t, pred)? {
                        let v = VertexRef::new(t, i);
                        if partition_of(v, shards) == shard {
                            emit(v, &mut out);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// The single owning shard of a point lookup, if any.
    pub fn point_owner(&self, snap: &dyn GraphSnapshot, shards: u32) -> Option<Option<u32>> {
        let Access::Pk(key) = &self.access else { return None };
        let owner = self.types.iter().find_map(|&t| snap.lookup_by_pk(t, key).ok()).map(|v| partition_of(v, shards));
        Some(owner)
    }
}

pub(crate) enum Which {
    Start,
    End,
    Other(usize),
}

pub(crate) enum StreamK {
    FromEdge { ec: usize, which: Which, label: Option<TypeId>, dc: Vec<usize>, pred: Option<CExpr> },
    ExpandEdge { ic: usize, cc: Option<usize>, dir: Direction, etype: TypeId, pred: Option<CExpr>, per_neighbor: bool },
    ExpandVertex { ic: usize, dc: Vec<usize>, dir: Direction, etype: TypeId, label: Option<TypeId>, pred: Option<CExpr>, per_neighbor: bool },
    Path { ic: usize, dir: Direction, etype: TypeId, min: u32, max: u32 },
    Project { exprs: Vec<CExpr> },
    Filter { pred: CExpr },
}

fn distinct_ok(v: VertexRef, row: &[Value], cols: &[usize]) -> bool {
    cols.iter().all(|&c| row[c].as_vertex() != Some(v))
}

impl StreamK {
    /// Column whose vertex decides where a flat-map runs.
    pub fn anchor(&self) -> Option<usize> {
        match self {
            StreamK::ExpandEdge { ic, .. } | StreamK::ExpandVertex { ic, .. } | StreamK::Path { ic, .. } => Some(*ic),
            _ => None,
        }
    }

    pub fn apply(&self, row: Row, snap: &dyn GraphSnapshot, out: &mut Vec<Row>) {
        let holds = |p: &Option<CExpr>, r: &[Value]| p.as_ref().is_none_or(|p| p.holds(r, snap));
        match self {
            StreamK::FromEdge { ec, which, label, dc, pred } => {
                let v = match (&row[*ec], which) {
                    (Value::Edge(e), Which::Start) => Some(e.src),
                    (Value::Edge(e), Which::End) => Some(e.dst),
                    (Value::Edge(e), Which::Other(a)) => row[*a].as_vertex().map(|x| e.other(x)),
                    (Value::Path(p), Which::Start) => Some(p.start()),
                    (Value::Path(p), Which::End) => Some(p.end()),
                    _ => None,
                };
                let Some(v) = v else { return };
                if label.is_some_and(|l| l != v.vtype) || !distinct_ok(v, &row, dc) {
                    return;
                }
                let mut r = row;
                r.push(Value::Vertex(v));
                if holds(pred, &r) {
                    out.push(r);
                }
            }
            StreamK::ExpandEdge { ic, cc, dir, etype, pred, per_neighbor } => {
                let Some(v) = row[*ic].as_vertex() else { return };
                let target = cc.and_then(|c| row[c].as_vertex());
                if cc.is_some() && target.is_none() {
                    return;
                }
                let mut seen = HashSet::new();
                for (n, e) in neighbors(snap, v, *dir, *etype) {
                    if target.is_some_and(|t| t != n) || (*per_neighbor && seen.contains(&n)) {
                        continue;
                    }
                    let mut r = row.clone();
                    r.push(Value::Edge(e));
                    if holds(pred, &r) {
                        if *per_neighbor {
                            seen.insert(n);
                        }
                        out.push(r);
                    }
                }
            }
            StreamK::ExpandVertex { ic, dc, dir, etype, label, pred, per_neighbor } => {
                let Some(v) = row[*ic].as_vertex() else { return };
                let mut pairs = neighbors(snap, v, *dir, *etype);
                if *per_neighbor {
                    dedup_neighbors(&mut pairs);
                }
                for (n, _) in pairs {
                    if label.is_some_and(|l| l != n.vtype) || !distinct_ok(n, &row, dc) {
                        continue;
                    }
                    let mut r = row.clone();
                    r.push(Value::Vertex(n));
                    if holds(pred, &r) {
                        out.push(r);
                    }
                }
            }
            StreamK::Path { ic, dir, etype, min, max } => {
                let Some(v) = row[*ic].as_vertex() else { return };
                for p in expand_paths(snap, v, *dir, *etype, *min, *max) {
                    let mut r = row.clone();
                    r.push(Value::Path(std::sync::Arc::new(p)));
                    out.push(r);
                }
            }
            StreamK::Project { exprs } => out.push(exprs.iter().map(|e| e.eval(&row, snap)).collect()),
            StreamK::Filter { pred } => {
                if pred.holds(&row, snap) {
                    out.push(row);
                }
            }
        }
    }
}

pub(crate) enum Kernel {
    Source(SourceK),
    Stream(StreamK),
    Sort { exprs: Vec<CExpr>, desc: Vec<bool>, limit: Option<u64> },
    Group { kx: Vec<CExpr>, ax: Vec<Option<CExpr>>, aggs: Vec<AggItem> },
    Join { lk: Vec<usize>, rk: Vec<usize>, keep: Vec<usize> },
    Limit(u64),
    Exchange(Option<usize>),
    Sink,
}

impl Kernel {
    pub fn breaker(&self, inputs: Vec<Vec<Row>>, snap: &dyn GraphSnapshot) -> Vec<Row> {
        let mut inputs = inputs.into_iter();
        let rows = inputs.next().unwrap_or_default();
        match self {
            Kernel::Sort { exprs, desc, limit } => {
                let mut keyed: Vec<(Vec<Value>, Row)> =
                    rows.into_iter().map(|r| (exprs.iter().map(|e| e.eval(&r, snap)).collect(), r)).collect();
                keyed.sort_by(|a, b| compare_keys(&a.0, &b.0, desc));
                let mut out: Vec<Row> = keyed.into_iter().map(|(_, r)| r).collect();
                if let Some(n) = limit {
                    out.truncate(*n as usize);
                }
                out
            }
            Kernel::Group { kx, ax, aggs } => {
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
                if kx.is_empty() && groups.is_empty() {
                    order.push(vec![]);
                    groups.insert(vec![], GroupState::new(aggs));
                }
                order
                    .into_iter()
                    .map(|k| {
                        let state = groups.remove(&k).expect("recorded");
                        let mut r = k;
                        r.extend(state.finish());
                        r
                    })
                    .collect()
            }
            Kernel::Join { lk, rk, keep } => {
                let right = inputs.next().unwrap_or_default();
                let mut index: HashMap<Vec<Value>, Vec<usize>> = HashMap::new();
                for (i, r) in right.iter().enumerate() {
                    let k: Vec<Value> = rk.iter().map(|&c| r[c].clone()).collect();
                    if k.iter().all(|v| !v.is_null()) {
                        index.entry(k).or_default().push(i);
                    }
                }
                let mut out = Vec::new();
                for l in rows {
                    let k: Vec<Value> = lk.iter().map(|&c| l[c].clone()).collect();
                    for &ri in index.get(&k).map(Vec::as_slice).unwrap_or(&[]) {
                        let mut r = l.clone();
                        r.extend(keep.iter().map(|&c| right[ri][c].clone()));
                        out.push(r);
                    }
                }
                out
            }
            Kernel::Limit(n) => rows.into_iter().take(*n as usize).collect(),
            Kernel::Sink | Kernel::Exchange(_) => rows,
            Kernel::Source(_) | Kernel::Stream(_) => unreachable!("not a pipeline breaker"),
        }
    }
}

/// Compiled plan node; mirrors [`PhysNode`].
pub(crate) struct CNode {
    pub kind: &'static str,
    pub kernel: Kernel,
    pub inputs: Vec<CNode>,
    /// Pre-order index, for per-op stats.
    pub id: usize,
}

fn cols(layout: &FieldSchema, aliases: &[String]) -> Result<Vec<usize>, IrError> {
    aliases.iter().map(|a| layout.position(a).ok_or_else(|| IrError::missing_alias(a))).collect()
}

fn col(layout: &FieldSchema, a: &str) -> Result<usize, IrError> {
    layout.position(a).ok_or_else(|| IrError::missing_alias(a))
}

fn constant(e: &crate::ir::Expr, g: &PropertyGraphSchema, params: &HashMap<String, Value>, snap: &dyn GraphSnapshot) -> Result<Value, IrError> {
    Ok(compile(e, &FieldSchema::default(), g, params)?.eval(&[], snap))
}

pub(crate) fn compile_plan(
    n: &PhysNode,
    g: &PropertyGraphSchema,
    params: &HashMap<String, Value>,
    snap: &dyn GraphSnapshot,
    next_id: &mut usize,
) -> Result<CNode, ExecError> {
    let id = *next_id;
    *next_id += 1;
    let inputs: Vec<CNode> = n.inputs.iter().map(|c| compile_plan(c, g, params, snap, next_id)).collect::<Result<_, _>>()?;
    let empty = FieldSchema::default();
    let ins = n.inputs.first().map(|c| &c.schema).unwrap_or(&empty);
    let out = &n.schema;
    let c = |e: &crate::ir::Expr, l: &FieldSchema| compile(e, l, g, params);
    let opt = |p: &Option<crate::ir::Expr>, l: &FieldSchema| p.as_ref().map(|e| c(e, l)).transpose();
    let kernel = match &n.op {
        PhysicalOp::Source { scan: LogicalOp::GetVertex { label, pred, .. }, access } => {
            let access = match access {
                SourceAccess::Scan => Access::Scan,
                SourceAccess::PkLookup { key } => Access::Pk(constant(key, g, params, snap)?),
                SourceAccess::Pushdown { conds } => {
                    let mut p = PropertyPredicate::always();
                    for (prop, op, v) in conds {
                        p = p.and(prop, *op, constant(v, g, params, snap)?);
                    }
                    Access::Pushdown(p)
                }
            };
            Kernel::Source(SourceK {
                types: match label {
                    Some(t) => vec![*t],
                    None => g.vertex_type_ids().collect(),
                },
                pred: opt(pred, out)?,
                access,
            })
        }
        PhysicalOp::Source { scan, .. } => return Err(ExecError::Op { op: "SOURCE", cause: format!("cannot scan with {}", scan.kind()) }),
        PhysicalOp::Map(LogicalOp::GetVertex { mode: VertexSource::FromEdge { edge, which }, label, pred, distinct_from, .. }) => {
            Kernel::Stream(StreamK::FromEdge {
                ec: col(ins, edge)?,
                which: match which {
                    Endpoint::Start => Which::Start,
                    Endpoint::End => Which::End,
                    Endpoint::Other(a) => Which::Other(col(ins, a)?),
                },
                label: *label,
                dc: cols(ins, distinct_from)?,
                pred: opt(pred, out)?,
            })
        }
        PhysicalOp::Map(LogicalOp::Project { items }) => {
            Kernel::Stream(StreamK::Project { exprs: items.iter().map(|(e, _)| c(e, ins)).collect::<Result<_, _>>()? })
        }
        PhysicalOp::FlatMap(LogicalOp::ExpandEdge { input, dir, etype, pred, per_neighbor, close_with, .. }) => {
            Kernel::Stream(StreamK::ExpandEdge {
                ic: col(ins, input)?,
                cc: close_with.as_ref().map(|a| col(ins, a)).transpose()?,
                dir: *dir,
                etype: *etype,
                pred: opt(pred, out)?,
                per_neighbor: *per_neighbor,
            })
        }
        PhysicalOp::FlatMap(LogicalOp::ExpandVertex { input, dir, etype, label, pred, distinct_from, per_neighbor, .. }) => {
            Kernel::Stream(StreamK::ExpandVertex {
                ic: col(ins, input)?,
                dc: cols(ins, distinct_from)?,
                dir: *dir,
                etype: *etype,
                label: *label,
                pred: opt(pred, out)?,
                per_neighbor: *per_neighbor,
            })
        }
        PhysicalOp::FlatMap(LogicalOp::Path { input, dir, etype, min, max, .. }) => {
            Kernel::Stream(StreamK::Path { ic: col(ins, input)?, dir: *dir, etype: *etype, min: *min, max: *max })
        }
        PhysicalOp::Map(op) | PhysicalOp::FlatMap(op) => {
            return Err(ExecError::Op { op: n.op.kind(), cause: format!("unsupported operator {}", op.kind()) })
        }
        PhysicalOp::Filter { pred } => Kernel::Stream(StreamK::Filter { pred: c(pred, ins)? }),
        PhysicalOp::Sort { keys, limit } => Kernel::Sort {
            exprs: keys.iter().map(|(e, _)| c(e, ins)).collect::<Result<_, _>>()?,
            desc: keys.iter().map(|(_, d)| *d).collect(),
            limit: *limit,
        },
        PhysicalOp::GroupBy { keys, aggs } => Kernel::Group {
            kx: keys.iter().map(|(e, _)| c(e, ins)).collect::<Result<_, _>>()?,
            ax: aggs.iter().map(|a| a.arg.as_ref().map(|e| c(e, ins)).transpose()).collect::<Result<_, _>>()?,
            aggs: aggs.clone(),
        },
        PhysicalOp::Join { on } => {
            let right = &n.inputs[1].schema;
            let rk = cols(right, on)?;
            Kernel::Join { lk: cols(ins, on)?, keep: (0..right.len()).filter(|i| !rk.contains(i)).collect(), rk }
        }
        PhysicalOp::Limit { n } => Kernel::Limit(*n),
        PhysicalOp::Exchange { route: Route::ByAlias(a) } => Kernel::Exchange(Some(col(ins, a)?)),
        PhysicalOp::Exchange { route: Route::Gather } => Kernel::Exchange(None),
        PhysicalOp::Sink => Kernel::Sink,
    };
    Ok(CNode { kind: n.op.kind(), kernel, inputs, id })
}
