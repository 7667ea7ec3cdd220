//! Scalar expressions, their type inference and interpreted evaluation.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use crate::model::{value_compare, CmpOp, DataType, PropertyGraphSchema, Value};
use crate::retrieval::GraphSnapshot;

use super::{Field, FieldSchema, IrError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
            ArithOp::Mod => "%",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AggFunc {
    Count,
    Sum,
    Min,
    Max,
    Avg,
    Collect,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Count => "COUNT",
            AggFunc::Sum => "SUM",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
            AggFunc::Avg => "AVG",
            AggFunc::Collect => "COLLECT",
        }
    }

    pub fn from_name(name: &str) -> Option<AggFunc> {
        Some(match name.to_ascii_uppercase().as_str() {
            "COUNT" => AggFunc::Count,
            "SUM" => AggFunc::Sum,
            "MIN" => AggFunc::Min,
            "MAX" => AggFunc::Max,
            "AVG" => AggFunc::Avg,
            "COLLECT" => AggFunc::Collect,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Lit(Value),
    Field(String),
    Prop(String, String),
    Param(String),
    List(Vec<Expr>),
    Arith(ArithOp, Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    IsNull(Box<Expr>, bool),
    In(Box<Expr>, Box<Expr>),
    /// `None` argument means `COUNT(*)`.
    Agg { func: AggFunc, arg: Option<Box<Expr>>, distinct: bool },
}

impl Expr {
    pub fn lit(v: impl Into<Value>) -> Expr {
        Expr::Lit(v.into())
    }

    pub fn prop(alias: &str, prop: &str) -> Expr {
        Expr::Prop(alias.to_string(), prop.to_string())
    }

    pub fn field(alias: &str) -> Expr {
        Expr::Field(alias.to_string())
    }

    pub fn cmp(op: CmpOp, a: Expr, b: Expr) -> Expr {
        Expr::Cmp(op, Box::new(a), Box::new(b))
    }

    pub fn and(a: Expr, b: Expr) -> Expr {
        Expr::And(Box::new(a), Box::new(b))
    }

    /// Conjunction of `parts`; `true` when empty.
    pub fn conjunction(parts: Vec<Expr>) -> Expr {
        let mut it = parts.into_iter();
        match it.next() {
            None => Expr::Lit(Value::Bool(true)),
            Some(first) => it.fold(first, Expr::and),
        }
    }

    /// Top-level AND factors.
    pub fn conjuncts(&self) -> Vec<Expr> {
        match self {
            Expr::And(a, b) => {
                let mut out = a.conjuncts();
                out.extend(b.conjuncts());
                out
            }
            other => vec![other.clone()],
        }
    }

    pub fn is_true_literal(&self) -> bool {
        matches!(self, Expr::Lit(Value::Bool(true)))
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Lit(_) | Expr::Field(_) | Expr::Prop(..) | Expr::Param(_) => vec![],
            Expr::List(items) => items.iter().collect(),
            Expr::Arith(_, a, b) | Expr::Cmp(_, a, b) | Expr::And(a, b) | Expr::Or(a, b) | Expr::In(a, b) => {
                vec![a, b]
            }
            Expr::Neg(a) | Expr::Not(a) | Expr::IsNull(a, _) => vec![a],
            Expr::Agg { arg, .. } => arg.iter().map(|a| &**a).collect(),
        }
    }

    /// Aliases read by this expression.
    pub fn aliases(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_aliases(&mut out);
        out
    }

    fn collect_aliases(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Field(a) | Expr::Prop(a, _) => {
                out.insert(a.clone());
            }
            _ => self.children().into_iter().for_each(|c| c.collect_aliases(out)),
        }
    }

    pub fn params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        fn walk(e: &Expr, out: &mut BTreeSet<String>) {
            if let Expr::Param(p) = e {
                out.insert(p.clone());
            }
            e.children().into_iter().for_each(|c| walk(c, out));
        }
        walk(self, &mut out);
        out
    }

    pub fn contains_agg(&self) -> bool {
        matches!(self, Expr::Agg { .. }) || self.children().into_iter().any(Expr::contains_agg)
    }

    /// Renames aliases according to `map`; unmapped aliases stay.
    pub fn rename(&self, map: &HashMap<String, String>) -> Expr {
        let r = |a: &String| map.get(a).cloned().unwrap_or_else(|| a.clone());
        let b = |e: &Expr| Box::new(e.rename(map));
        match self {
            Expr::Field(a) => Expr::Field(r(a)),
            Expr::Prop(a, p) => Expr::Prop(r(a), p.clone()),
            Expr::Lit(_) | Expr::Param(_) => self.clone(),
            Expr::List(items) => Expr::List(items.iter().map(|i| i.rename(map)).collect()),
            Expr::Arith(op, x, y) => Expr::Arith(*op, b(x), b(y)),
            Expr::Cmp(op, x, y) => Expr::Cmp(*op, b(x), b(y)),
            Expr::And(x, y) => Expr::And(b(x), b(y)),
            Expr::Or(x, y) => Expr::Or(b(x), b(y)),
            Expr::In(x, y) => Expr::In(b(x), b(y)),
            Expr::Neg(x) => Expr::Neg(b(x)),
            Expr::Not(x) => Expr::Not(b(x)),
            Expr::IsNull(x, neg) => Expr::IsNull(b(x), *neg),
            Expr::Agg { func, arg, distinct } => Expr::Agg { func: *func, arg: arg.as_ref().map(|a| b(a)), distinct: *distinct },
        }
    }

    /// Replaces parameters by bound values.
    pub fn bind_params(&self, params: &HashMap<String, Value>) -> Result<Expr, IrError> {
        Ok(match self {
            Expr::Param(p) => Expr::Lit(params.get(p).cloned().ok_or_else(|| IrError::ParamUnbound(p.clone()))?),
            Expr::Lit(_) | Expr::Field(_) | Expr::Prop(..) => self.clone(),
            Expr::List(items) => Expr::List(items.iter().map(|i| i.bind_params(params)).collect::<Result<_, _>>()?),
            Expr::Arith(op, x, y) => Expr::Arith(*op, Box::new(x.bind_params(params)?), Box::new(y.bind_params(params)?)),
            Expr::Cmp(op, x, y) => Expr::Cmp(*op, Box::new(x.bind_params(params)?), Box::new(y.bind_params(params)?)),
            Expr::And(x, y) => Expr::And(Box::new(x.bind_params(params)?), Box::new(y.bind_params(params)?)),
            Expr::Or(x, y) => Expr::Or(Box::new(x.bind_params(params)?), Box::new(y.bind_params(params)?)),
            Expr::In(x, y) => Expr::In(Box::new(x.bind_params(params)?), Box::new(y.bind_params(params)?)),
            Expr::Neg(x) => Expr::Neg(Box::new(x.bind_params(params)?)),
            Expr::Not(x) => Expr::Not(Box::new(x.bind_params(params)?)),
            Expr::IsNull(x, n) => Expr::IsNull(Box::new(x.bind_params(params)?), *n),
            Expr::Agg { func, arg, distinct } => Expr::Agg {
                func: *func,
                arg: match arg {
                    Some(a) => Some(Box::new(a.bind_params(params)?)),
                    None => None,
                },
                distinct: *distinct,
            },
        })
    }

    /// Default output column name for a projection item.
    pub fn default_name(&self) -> String {
        match self {
            Expr::Field(a) => a.clone(),
            other => other.to_string(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Or(..) => 1,
            Expr::And(..) => 2,
            Expr::Not(_) => 3,
            Expr::Cmp(..) | Expr::In(..) | Expr::IsNull(..) => 4,
            Expr::Arith(ArithOp::Add | ArithOp::Sub, ..) => 5,
            Expr::Arith(..) => 6,
            Expr::Neg(_) => 7,
            _ => 8,
        }
    }
}

fn fmt_literal(v: &Value, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match v {
        Value::String(s) => {
            write!(f, "\"")?;
            for c in s.chars() {
                match c {
                    '"' => write!(f, "\\\"")?,
                    '\\' => write!(f, "\\\\")?,
                    '\n' => write!(f, "\\n")?,
                    c => write!(f, "{c}")?,
                }
            }
            write!(f, "\"")
        }
        Value::Null => write!(f, "null"),
        Value::Float64(x) if x.is_finite() && x.fract() == 0.0 && x.abs() < 1e15 => write!(f, "{x:.1}"),
        Value::List(items) => {
            write!(f, "[")?;
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                fmt_literal(item, f)?;
            }
            write!(f, "]")
        }
        other => write!(f, "{other}"),
    }
}

/// Cypher-compatible rendering; reparses to the same expression.
fn is_plain_ident(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_alphabetic() || c == '_') && chars.all(|c| c.is_alphanumeric() || c == '_')
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |e: &Expr, min: u8, f: &mut fmt::Formatter<'_>| -> fmt::Result {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Lit(v) => fmt_literal(v, f),
            Expr::Field(a) if is_plain_ident(a) => write!(f, "{a}"),
            Expr::Field(a) => write!(f, "`{a}`"),
            Expr::Prop(a, p) => write!(f, "{a}.{p}"),
            Expr::Param(p) => write!(f, "${p}"),
            Expr::List(items) => {
                write!(f, "[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{item}")?;
                }
                write!(f, "]")
            }
            Expr::Arith(op, a, b) => {
                let p = self.precedence();
                wrap(a, p, f)?;
                write!(f, " {} ", op.symbol())?;
                wrap(b, p + 1, f)
            }
            Expr::Neg(a) => {
                write!(f, "-")?;
                wrap(a, 8, f)
            }
            Expr::Cmp(op, a, b) => {
                wrap(a, 5, f)?;
                write!(f, " {} ", op.symbol())?;
                wrap(b, 5, f)
            }
            Expr::And(a, b) => {
                wrap(a, 2, f)?;
                write!(f, " AND ")?;
                wrap(b, 3, f)
            }
            Expr::Or(a, b) => {
                wrap(a, 1, f)?;
                write!(f, " OR ")?;
                wrap(b, 2, f)
            }
            Expr::Not(a) => {
                write!(f, "NOT ")?;
                wrap(a, 3, f)
            }
            Expr::IsNull(a, negated) => {
                wrap(a, 5, f)?;
                write!(f, "{}", if *negated { " IS NOT NULL" } else { " IS NULL" })
            }
            Expr::In(a, b) => {
                wrap(a, 5, f)?;
                write!(f, " IN ")?;
                wrap(b, 5, f)
            }
            Expr::Agg { func, arg, distinct } => {
                write!(f, "{}(", func.name())?;
                if *distinct {
                    write!(f, "DISTINCT ")?;
                }
                match arg {
                    Some(a) => write!(f, "{a}")?,
                    None => write!(f, "*")?,
                }
                write!(f, ")")
            }
        }
    }
}

/// Static type of `expr` over `fields`. Parameters type as `Null` (any)
/// unless `params` supplies a binding.
pub fn infer_type(
    expr: &Expr,
    fields: &FieldSchema,
    schema: &PropertyGraphSchema,
    params: &HashMap<String, Value>,
) -> Result<DataType, IrError> {
    let rec = |e: &Expr| infer_type(e, fields, schema, params);
    Ok(match expr {
        Expr::Lit(v) => v.dtype(),
        Expr::Param(p) => params.get(p).map(Value::dtype).unwrap_or(DataType::Null),
        Expr::Field(a) => fields.get(a).ok_or_else(|| IrError::unknown_alias(a, fields))?.dtype.clone(),
        Expr::Prop(a, p) => {
            let field = fields.get(a).ok_or_else(|| IrError::unknown_alias(a, fields))?;
            prop_type(field, p, schema)?
        }
        Expr::List(items) => {
            let mut elem = DataType::Null;
            for i in items {
                let t = rec(i)?;
                if elem == DataType::Null {
                    elem = t;
                } else if t != elem && t != DataType::Null && !(t.is_numeric() && elem.is_numeric()) {
                    elem = DataType::Null;
                    break;
                }
            }
            DataType::List(Box::new(elem))
        }
        Expr::Arith(op, a, b) => {
            let (ta, tb) = (rec(a)?, rec(b)?);
            match (ta, tb) {
                (DataType::Int64, DataType::Int64) => DataType::Int64,
                (DataType::String, DataType::String) if *op == ArithOp::Add => DataType::String,
                (x, y) if (x.is_numeric() || x == DataType::Null) && (y.is_numeric() || y == DataType::Null) => {
                    if x == DataType::Null && y == DataType::Int64 || y == DataType::Null && x == DataType::Int64 {
                        DataType::Int64
                    } else if x == DataType::Null && y == DataType::Null {
                        DataType::Null
                    } else {
                        DataType::Float64
                    }
                }
                (DataType::Null, y) | (y, DataType::Null) => y,
                (x, y) => return Err(IrError::Type(format!("cannot apply {} to {x} and {y}", op.symbol()))),
            }
        }
        Expr::Neg(a) => match rec(a)? {
            t @ (DataType::Int64 | DataType::Float64 | DataType::Null) => t,
            t => return Err(IrError::Type(format!("cannot negate {t}"))),
        },
        Expr::Cmp(_, a, b) | Expr::In(a, b) => {
            rec(a)?;
            rec(b)?;
            DataType::Bool
        }
        Expr::And(a, b) | Expr::Or(a, b) => {
            for t in [rec(a)?, rec(b)?] {
                if !matches!(t, DataType::Bool | DataType::Null) {
                    return Err(IrError::Type(format!("boolean operator applied to {t}")));
                }
            }
            DataType::Bool
        }
        Expr::Not(a) => {
            let t = rec(a)?;
            if !matches!(t, DataType::Bool | DataType::Null) {
                return Err(IrError::Type(format!("NOT applied to {t}")));
            }
            DataType::Bool
        }
        Expr::IsNull(a, _) => {
            rec(a)?;
            DataType::Bool
        }
        Expr::Agg { func, arg, .. } => {
            let t = match arg {
                Some(a) => rec(a)?,
                None => DataType::Int64,
            };
            match func {
                AggFunc::Count => DataType::Int64,
                AggFunc::Avg => DataType::Float64,
                AggFunc::Sum => match t {
                    DataType::Int64 => DataType::Int64,
                    DataType::Float64 | DataType::Null => DataType::Float64,
                    other => return Err(IrError::Type(format!("SUM over {other}"))),
                },
                AggFunc::Min | AggFunc::Max => t,
                AggFunc::Collect => DataType::List(Box::new(t)),
            }
        }
    })
}

fn prop_type(field: &Field, prop: &str, schema: &PropertyGraphSchema) -> Result<DataType, IrError> {
    let missing = |owner: String| IrError::UnknownProperty { owner, prop: prop.to_string() };
    match (&field.dtype, field.label) {
        (DataType::Vertex, Some(vt)) => {
            let p = schema.vertex_prop_index(vt, prop).ok_or_else(|| missing(schema.vertex_type(vt).name.clone()))?;
            Ok(schema.vertex_type(vt).properties[p].dtype.clone())
        }
        (DataType::Edge, Some(et)) => {
            let p = schema.edge_prop_index(et, prop).ok_or_else(|| missing(schema.edge_type(et).name.clone()))?;
            Ok(schema.edge_type(et).properties[p].dtype.clone())
        }
        (DataType::Vertex, None) => schema
            .vertex_types
            .iter()
            .flat_map(|t| t.properties.iter())
            .find(|p| p.name == prop)
            .map(|p| p.dtype.clone())
            .ok_or_else(|| missing(field.name.clone())),
        (DataType::Edge, None) => schema
            .edge_types
            .iter()
            .flat_map(|t| t.properties.iter())
            .find(|p| p.name == prop)
            .map(|p| p.dtype.clone())
            .ok_or_else(|| missing(field.name.clone())),
        (DataType::Null, _) => Ok(DataType::Null),
        (other, _) => Err(IrError::Type(format!("property access .{prop} on {other} field {}", field.name))),
    }
}

/// Expression resolved against a row layout: aliases become column
/// positions and property names become per-type ordinals.
#[derive(Clone, Debug)]
pub enum CExpr {
    Lit(Value),
    Col(usize),
    Prop { col: usize, vprops: Arc<[Option<usize>]>, eprops: Arc<[Option<usize>]> },
    List(Vec<CExpr>),
    Arith(ArithOp, Box<CExpr>, Box<CExpr>),
    Neg(Box<CExpr>),
    Cmp(CmpOp, Box<CExpr>, Box<CExpr>),
    And(Box<CExpr>, Box<CExpr>),
    Or(Box<CExpr>, Box<CExpr>),
    Not(Box<CExpr>),
    IsNull(Box<CExpr>, bool),
    In(Box<CExpr>, Box<CExpr>),
}

/// Column lookup used while compiling.
pub trait Layout {
    fn column(&self, alias: &str) -> Option<usize>;
}

impl Layout for FieldSchema {
    fn column(&self, alias: &str) -> Option<usize> {
        self.position(alias)
    }
}

impl Layout for [String] {
    fn column(&self, alias: &str) -> Option<usize> {
        self.iter().position(|a| a == alias)
    }
}

impl Layout for Vec<String> {
    fn column(&self, alias: &str) -> Option<usize> {
        self.iter().position(|a| a == alias)
    }
}

pub fn compile(
    expr: &Expr,
    layout: &(impl Layout + ?Sized),
    schema: &PropertyGraphSchema,
    params: &HashMap<String, Value>,
) -> Result<CExpr, IrError> {
    let rec = |e: &Expr| compile(e, layout, schema, params).map(Box::new);
    Ok(match expr {
        Expr::Lit(v) => CExpr::Lit(v.clone()),
        Expr::Param(p) => CExpr::Lit(params.get(p).cloned().ok_or_else(|| IrError::ParamUnbound(p.clone()))?),
        Expr::Field(a) => CExpr::Col(layout.column(a).ok_or_else(|| IrError::missing_alias(a))?),
        Expr::Prop(a, p) => {
            let col = layout.column(a).ok_or_else(|| IrError::missing_alias(a))?;
            let vprops: Vec<Option<usize>> = schema.vertex_type_ids().map(|t| schema.vertex_prop_index(t, p)).collect();
            let eprops: Vec<Option<usize>> = schema.edge_type_ids().map(|t| schema.edge_prop_index(t, p)).collect();
            CExpr::Prop { col, vprops: vprops.into(), eprops: eprops.into() }
        }
        Expr::List(items) => CExpr::List(
            items.iter().map(|i| compile(i, layout, schema, params)).collect::<Result<_, _>>()?,
        ),
        Expr::Arith(op, a, b) => CExpr::Arith(*op, rec(a)?, rec(b)?),
        Expr::Neg(a) => CExpr::Neg(rec(a)?),
        Expr::Cmp(op, a, b) => CExpr::Cmp(*op, rec(a)?, rec(b)?),
        Expr::And(a, b) => CExpr::And(rec(a)?, rec(b)?),
        Expr::Or(a, b) => CExpr::Or(rec(a)?, rec(b)?),
        Expr::Not(a) => CExpr::Not(rec(a)?),
        Expr::IsNull(a, n) => CExpr::IsNull(rec(a)?, *n),
        Expr::In(a, b) => CExpr::In(rec(a)?, rec(b)?),
        Expr::Agg { .. } => return Err(IrError::Type(format!("aggregate {expr} outside a grouping context"))),
    })
}

fn bool3(v: Option<bool>) -> Value {
    v.map(Value::Bool).unwrap_or(Value::Null)
}

fn truth(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        _ => None,
    }
}

pub fn arith(op: ArithOp, a: &Value, b: &Value) -> Value {
    match (a, b) {
        (Value::Null, _) | (_, Value::Null) => Value::Null,
        (Value::Int64(x), Value::Int64(y)) => {
            let r = match op {
                ArithOp::Add => x.checked_add(*y),
                ArithOp::Sub => x.checked_sub(*y),
                ArithOp::Mul => x.checked_mul(*y),
                ArithOp::Div => x.checked_div(*y),
                ArithOp::Mod => x.checked_rem(*y),
            };
            r.map(Value::Int64).unwrap_or(Value::Null)
        }
        (Value::String(x), Value::String(y)) if op == ArithOp::Add => Value::str(&format!("{x}{y}")),
        _ => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) if a.dtype().is_numeric() && b.dtype().is_numeric() => Value::Float64(match op {
                ArithOp::Add => x + y,
                ArithOp::Sub => x - y,
                ArithOp::Mul => x * y,
                ArithOp::Div => x / y,
                ArithOp::Mod => x % y,
            }),
            _ => Value::Null,
        },
    }
}

/// Three-valued list membership.
pub fn in_list(x: &Value, list: &Value) -> Value {
    let Value::List(items) = list else {
        return Value::Null;
    };
    if x.is_null() {
        return Value::Null;
    }
    let mut saw_null = false;
    for item in items.iter() {
        match CmpOp::Eq.apply(x, item) {
            Some(true) => return Value::Bool(true),
            None => saw_null = true,
            Some(false) => {}
        }
    }
    if saw_null {
        Value::Null
    } else {
        Value::Bool(false)
    }
}

impl CExpr {
    pub fn eval(&self, row: &[Value], snap: &dyn GraphSnapshot) -> Value {
        match self {
            CExpr::Lit(v) => v.clone(),
            CExpr::Col(i) => row[*i].clone(),
            CExpr::Prop { col, vprops, eprops } => match &row[*col] {
                Value::Vertex(v) => match vprops.get(v.vtype as usize).copied().flatten() {
                    Some(p) => snap.vertex_property_at(*v, p).unwrap_or(Value::Null),
                    None => Value::Null,
                },
                Value::Edge(e) => match eprops.get(e.etype as usize).copied().flatten() {
                    Some(p) => snap.edge_property_at(e, p).unwrap_or(Value::Null),
                    None => Value::Null,
                },
                _ => Value::Null,
            },
            CExpr::List(items) => Value::list(items.iter().map(|i| i.eval(row, snap)).collect()),
            CExpr::Arith(op, a, b) => arith(*op, &a.eval(row, snap), &b.eval(row, snap)),
            CExpr::Neg(a) => match a.eval(row, snap) {
                Value::Int64(i) => i.checked_neg().map(Value::Int64).unwrap_or(Value::Null),
                Value::Float64(f) => Value::Float64(-f),
                _ => Value::Null,
            },
            CExpr::Cmp(op, a, b) => bool3(op.apply(&a.eval(row, snap), &b.eval(row, snap))),
            CExpr::And(a, b) => {
                let x = truth(&a.eval(row, snap));
                if x == Some(false) {
                    return Value::Bool(false);
                }
                match (x, truth(&b.eval(row, snap))) {
                    (_, Some(false)) => Value::Bool(false),
                    (Some(true), Some(true)) => Value::Bool(true),
                    _ => Value::Null,
                }
            }
            CExpr::Or(a, b) => {
                let x = truth(&a.eval(row, snap));
                if x == Some(true) {
                    return Value::Bool(true);
                }
                match (x, truth(&b.eval(row, snap))) {
                    (_, Some(true)) => Value::Bool(true),
                    (Some(false), Some(false)) => Value::Bool(false),
                    _ => Value::Null,
                }
            }
            CExpr::Not(a) => bool3(truth(&a.eval(row, snap)).map(|b| !b)),
            CExpr::IsNull(a, negated) => Value::Bool(a.eval(row, snap).is_null() != *negated),
            CExpr::In(a, b) => in_list(&a.eval(row, snap), &b.eval(row, snap)),
        }
    }

    /// True only when the predicate evaluates to `true` (Null filters out).
    pub fn holds(&self, row: &[Value], snap: &dyn GraphSnapshot) -> bool {
        matches!(self.eval(row, snap), Value::Bool(true))
    }
}

/// Aggregate accumulator.
#[derive(Clone, Debug)]
pub enum Acc {
    Count(i64),
    Sum(Option<Value>),
    Min(Option<Value>),
    Max(Option<Value>),
    Avg(f64, i64),
    Collect(Vec<Value>),
}

impl Acc {
    pub fn new(func: AggFunc) -> Acc {
        match func {
            AggFunc::Count => Acc::Count(0),
            AggFunc::Sum => Acc::Sum(None),
            AggFunc::Min => Acc::Min(None),
            AggFunc::Max => Acc::Max(None),
            AggFunc::Avg => Acc::Avg(0.0, 0),
            AggFunc::Collect => Acc::Collect(Vec::new()),
        }
    }

    /// Adds one input; Nulls are ignored by every aggregate.
    pub fn add(&mut self, v: Value) {
        if v.is_null() {
            return;
        }
        match self {
            Acc::Count(n) => *n += 1,
            Acc::Sum(s) => {
                *s = Some(match s.take() {
                    None => v,
                    Some(prev) => arith(ArithOp::Add, &prev, &v),
                })
            }
            Acc::Min(m) => {
                if m.as_ref().is_none_or(|cur| value_compare(&v, cur).is_lt()) {
                    *m = Some(v);
                }
            }
            Acc::Max(m) => {
                if m.as_ref().is_none_or(|cur| value_compare(&v, cur).is_gt()) {
                    *m = Some(v);
                }
            }
            Acc::Avg(sum, n) => {
                if let Some(x) = v.as_f64() {
                    *sum += x;
                    *n += 1;
                }
            }
            Acc::Collect(items) => items.push(v),
        }
    }

    pub fn finish(self) -> Value {
        match self {
            Acc::Count(n) => Value::Int64(n),
            Acc::Sum(s) | Acc::Min(s) | Acc::Max(s) => s.unwrap_or(Value::Null),
            Acc::Avg(_, 0) => Value::Null,
            Acc::Avg(sum, n) => Value::Float64(sum / n as f64),
            Acc::Collect(items) => Value::list(items),
        }
    }
}

/// Aggregate item of a GROUP operator.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AggItem {
    pub func: AggFunc,
    pub arg: Option<Expr>,
    pub distinct: bool,
    pub name: String,
}

impl AggItem {
    pub fn expr(&self) -> Expr {
        Expr::Agg { func: self.func, arg: self.arg.clone().map(Box::new), distinct: self.distinct }
    }
}

/// Per-group state for a list of aggregate items.
#[derive(Clone, Debug)]
pub struct GroupState {
    accs: Vec<Acc>,
    seen: Vec<Option<std::collections::HashSet<Value>>>,
}

impl GroupState {
    pub fn new(items: &[AggItem]) -> Self {
        GroupState {
            accs: items.iter().map(|i| Acc::new(i.func)).collect(),
            seen: items.iter().map(|i| i.distinct.then(Default::default)).collect(),
        }
    }

    /// `args[i]` is the evaluated argument of item i (`Int64(1)` for `COUNT(*)`).
    pub fn add(&mut self, args: Vec<Value>) {
        for (i, v) in args.into_iter().enumerate() {
            if let Some(seen) = &mut self.seen[i] {
                if v.is_null() || !seen.insert(v.clone()) {
                    continue;
                }
            }
            self.accs[i].add(v);
        }
    }

    pub fn finish(self) -> Vec<Value> {
        self.accs.into_iter().map(Acc::finish).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_valued_logic() {
        let snap = crate::testkit::g0().snapshot();
        let t = |e: CExpr| e.eval(&[], snap.as_ref());
        let lit = |v: Value| Box::new(CExpr::Lit(v));
        assert_eq!(t(CExpr::And(lit(Value::Null), lit(Value::Bool(false)))), Value::Bool(false));
        assert_eq!(t(CExpr::And(lit(Value::Null), lit(Value::Bool(true)))), Value::Null);
        assert_eq!(t(CExpr::Or(lit(Value::Null), lit(Value::Bool(true)))), Value::Bool(true));
        assert_eq!(t(CExpr::Not(lit(Value::Null))), Value::Null);
        assert_eq!(in_list(&Value::Int64(2), &Value::list(vec![Value::Float64(2.0)])), Value::Bool(true));
        assert_eq!(in_list(&Value::Int64(3), &Value::list(vec![Value::Null])), Value::Null);
        assert_eq!(arith(ArithOp::Div, &Value::Int64(7), &Value::Int64(2)), Value::Int64(3));
        assert_eq!(arith(ArithOp::Div, &Value::Int64(7), &Value::Int64(0)), Value::Null);
        assert_eq!(arith(ArithOp::Sub, &Value::Int64(7), &Value::Float64(0.5)), Value::Float64(6.5));
    }

    #[test]
    fn aggregates_ignore_null() {
        let mut count = Acc::new(AggFunc::Count);
        let mut sum = Acc::new(AggFunc::Sum);
        let mut avg = Acc::new(AggFunc::Avg);
        for v in [Value::Int64(2), Value::Null, Value::Int64(4)] {
            count.add(v.clone());
            sum.add(v.clone());
            avg.add(v);
        }
        assert_eq!(count.finish(), Value::Int64(2));
        assert_eq!(sum.finish(), Value::Int64(6));
        assert_eq!(avg.finish(), Value::Float64(3.0));
        assert_eq!(Acc::new(AggFunc::Count).finish(), Value::Int64(0));
        assert_eq!(Acc::new(AggFunc::Max).finish(), Value::Null);
    }

    #[test]
    fn display_round_trips_precedence() {
        let e = Expr::Arith(
            ArithOp::Mul,
            Box::new(Expr::Arith(ArithOp::Add, Box::new(Expr::lit(1i64)), Box::new(Expr::lit(2i64)))),
            Box::new(Expr::prop("a", "x")),
        );
        assert_eq!(e.to_string(), "(1 + 2) * a.x");
        let c = Expr::cmp(CmpOp::Lt, Expr::Arith(ArithOp::Sub, Box::new(Expr::prop("b1", "date")), Box::new(Expr::prop("b2", "date"))), Expr::lit(5i64));
        assert_eq!(c.to_string(), "b1.date - b2.date < 5");
        assert_eq!(c.aliases().into_iter().collect::<Vec<_>>(), vec!["b1", "b2"]);
    }
}
