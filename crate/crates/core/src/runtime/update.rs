//! Write path for the MVCC store: JSON update ops become one atomic batch.

use serde::Deserialize;
use serde_json::{Map, Value as Json};

use crate::model::Value;
use crate::store::mvcc::{Mutation, MvccStore};

use super::ExecError;

#[derive(Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
enum Op {
    InsertVertex {
        #[serde(alias = "type")]
        vtype: String,
        #[serde(default)]
        props: Map<String, Json>,
    },
    InsertEdge {
        #[serde(alias = "type")]
        etype: String,
        src: Json,
        dst: Json,
        #[serde(default)]
        props: Map<String, Json>,
    },
    DeleteEdge {
        #[serde(alias = "type")]
        etype: String,
        src: Json,
        dst: Json,
        #[serde(default)]
        ordinal: usize,
    },
    SetVertexProp {
        #[serde(alias = "type")]
        vtype: String,
        pk: Json,
        prop: String,
        value: Json,
    },
    SetEdgeProp {
        #[serde(alias = "type")]
        etype: String,
        src: Json,
        dst: Json,
        #[serde(default)]
        ordinal: usize,
        prop: String,
        value: Json,
    },
}

fn props(m: Map<String, Json>) -> Vec<(String, Value)> {
    m.into_iter().map(|(k, v)| (k, Value::from_json(&v))).collect()
}

fn v(j: &Json) -> Value {
    Value::from_json(j)
}

/// Parses a JSON array of update ops (or an object with an `ops` array).
pub fn parse_update(json: &Json) -> Result<Vec<Mutation>, ExecError> {
    let ops = match json {
        Json::Array(a) => a,
        Json::Object(o) => match o.get("ops") {
            Some(Json::Array(a)) => a,
            _ => return Err(ExecError::BadUpdate("expected an 'ops' array".into())),
        },
        _ => return Err(ExecError::BadUpdate("expected an array of ops".into())),
    };
    ops.iter()
        .enumerate()
        .map(|(i, o)| {
            let op: Op = serde_json::from_value(o.clone()).map_err(|e| ExecError::BadUpdate(format!("op {i}: {e}")))?;
            Ok(match op {
                Op::InsertVertex { vtype, props: p } => Mutation::InsertVertex { vtype, props: props(p) },
                Op::InsertEdge { etype, src, dst, props: p } => {
                    Mutation::InsertEdge { etype, src: v(&src), dst: v(&dst), props: props(p) }
                }
                Op::DeleteEdge { etype, src, dst, ordinal } => Mutation::DeleteEdge { etype, src: v(&src), dst: v(&dst), ordinal },
                Op::SetVertexProp { vtype, pk, prop, value } => Mutation::SetVertexProp { vtype, pk: v(&pk), prop, value: v(&value) },
                Op::SetEdgeProp { etype, src, dst, ordinal, prop, value } => {
                    Mutation::SetEdgeProp { etype, src: v(&src), dst: v(&dst), ordinal, prop, value: v(&value) }
                }
            })
        })
        .collect()
}

/// Commits `ops` as a single version. On any error nothing is published
/// and the committed version stays where it was.
pub fn apply_updates(store: &MvccStore, ops: Vec<Mutation>) -> Result<u64, ExecError> {
    let mut batch = store.begin_batch_blocking();
    for m in ops {
        batch.push(m);
    }
    Ok(batch.commit()?)
}
