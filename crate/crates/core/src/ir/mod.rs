//! Logical IR: typed named fields, scalar expressions, pattern graphs and
//! the operator DAG shared by both frontends.

mod dag;
mod expr;
mod pattern;
pub mod reference;

use std::fmt;

use serde::Serialize;

use crate::model::{DataType, PropertyGraphSchema, TypeId};

pub use dag::{Endpoint, LogicalDag, LogicalOp, Node, PlanTree, VertexSource};
pub use expr::{
    arith, compile, in_list, infer_type, Acc, AggFunc, AggItem, ArithOp, CExpr, Expr, GroupState, Layout,
};
pub use pattern::{match_count, match_semantics, PatternEdge, PatternGraph, PatternVertex};

/// One named, typed column. `label` narrows vertex and edge fields to a
/// single type when it is statically known.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Field {
    pub name: String,
    pub dtype: DataType,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<TypeId>,
}

impl Field {
    pub fn new(name: &str, dtype: DataType, label: Option<TypeId>) -> Self {
        Field { name: name.to_string(), dtype, label }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct FieldSchema {
    pub fields: Vec<Field>,
}

impl FieldSchema {
    pub fn new(fields: Vec<Field>) -> Self {
        FieldSchema { fields }
    }

    pub fn get(&self, name: &str) -> Option<&Field> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.fields.iter().map(|f| f.name.clone()).collect()
    }

    /// Appends a field, rejecting duplicate aliases.
    pub fn push(&mut self, field: Field) -> Result<(), IrError> {
        if self.get(&field.name).is_some() {
            return Err(IrError::TypeError {
                alias: field.name.clone(),
                expected: "fresh alias".into(),
                found: "alias already bound".into(),
            });
        }
        self.fields.push(field);
        Ok(())
    }

    /// Requires `alias` to be bound with dtype `dtype`.
    pub fn require(&self, alias: &str, dtype: &DataType) -> Result<&Field, IrError> {
        let f = self.get(alias).ok_or_else(|| IrError::unknown_alias(alias, self))?;
        if &f.dtype != dtype {
            return Err(IrError::TypeError { alias: alias.into(), expected: dtype.to_string(), found: f.dtype.to_string() });
        }
        Ok(f)
    }

    pub fn render(&self, schema: &PropertyGraphSchema) -> String {
        let parts: Vec<String> = self
            .fields
            .iter()
            .map(|f| match (&f.dtype, f.label) {
                (DataType::Vertex, Some(l)) => format!("{}:{}", f.name, schema.vertex_type(l).name),
                (DataType::Edge, Some(l)) => format!("{}:{}", f.name, schema.edge_type(l).name),
                (d, _) => format!("{}:{d}", f.name),
            })
            .collect();
        format!("[{}]", parts.join(", "))
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum IrError {
    #[error("type error on '{alias}': expected {expected}, found {found}")]
    TypeError { alias: String, expected: String, found: String },
    #[error("type error: {0}")]
    Type(String),
    #[error("{owner} has no property '{prop}'")]
    UnknownProperty { owner: String, prop: String },
    #[error("parameter ${0} is not bound")]
    ParamUnbound(String),
    #[error("connecting {producer} -> {consumer} would create a cycle")]
    CycleError { producer: usize, consumer: usize },
    #[error("invalid plan: {0}")]
    Invalid(String),
}

impl IrError {
    pub fn unknown_alias(alias: &str, fields: &FieldSchema) -> IrError {
        IrError::TypeError {
            alias: alias.to_string(),
            expected: "a bound alias".into(),
            found: format!("nothing (bound: {})", fields.names().join(", ")),
        }
    }

    pub fn missing_alias(alias: &str) -> IrError {
        IrError::TypeError { alias: alias.to_string(), expected: "a bound alias".into(), found: "nothing".into() }
    }
}

impl fmt::Display for FieldSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.fields.iter().map(|x| format!("{}:{}", x.name, x.dtype)).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}
