//! Schema, values and element references shared by every layer.

mod schema;
mod value;

pub use schema::{
    EdgeTypeDecl, PropertyDecl, PropertyGraphSchema, SchemaError, SchemaErrorKind, TypeId,
    VertexTypeDecl,
};
pub use value::{
    value_compare, DataType, Direction, EdgeRef, PathElement, PathValue, Value, VertexRef,
    MAX_LIST_DEPTH,
};

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

/// Binary comparison shared by predicates, pushdown and expressions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    /// Three-valued comparison: `None` when either side is Null or the
    /// operands are of incomparable kinds under an ordering operator.
    pub fn apply(self, a: &Value, b: &Value) -> Option<bool> {
        if a.is_null() || b.is_null() {
            return None;
        }
        let comparable = matches!(
            (a, b),
            (Value::Int64(_) | Value::Float64(_), Value::Int64(_) | Value::Float64(_))
        ) || std::mem::discriminant(a) == std::mem::discriminant(b);
        if !comparable {
            return match self {
                CmpOp::Eq => Some(false),
                CmpOp::Ne => Some(true),
                _ => None,
            };
        }
        let ord = value_compare(a, b);
        Some(self.holds(ord))
    }

    pub fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }
    }

    /// Operator with swapped operands: `a op b` iff `b op.flip() a`.
    pub fn flip(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            o => o,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}
