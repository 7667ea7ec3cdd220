//! Loader-side tables and their resolution into dense internal ids.

use std::collections::HashMap;

use super::column::Column;
use super::StoreError;
use crate::model::{PropertyGraphSchema, Value};

/// Vertex rows of one type; each row lists every declared property in
/// schema order (the primary key included).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VertexTable {
    pub vtype: String,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeRow {
    pub src: Value,
    pub dst: Value,
    pub props: Vec<Value>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EdgeTable {
    pub etype: String,
    pub rows: Vec<EdgeRow>,
}

/// In-memory input accepted by every store builder.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GraphTables {
    pub vertices: Vec<VertexTable>,
    pub edges: Vec<EdgeTable>,
}

impl GraphTables {
    pub fn vertex_rows(&mut self, vtype: &str) -> &mut Vec<Vec<Value>> {
        if let Some(i) = self.vertices.iter().position(|t| t.vtype == vtype) {
            return &mut self.vertices[i].rows;
        }
        self.vertices.push(VertexTable { vtype: vtype.to_string(), rows: Vec::new() });
        &mut self.vertices.last_mut().expect("just pushed").rows
    }

    pub fn edge_rows(&mut self, etype: &str) -> &mut Vec<EdgeRow> {
        if let Some(i) = self.edges.iter().position(|t| t.etype == etype) {
            return &mut self.edges[i].rows;
        }
        self.edges.push(EdgeTable { etype: etype.to_string(), rows: Vec::new() });
        &mut self.edges.last_mut().expect("just pushed").rows
    }

    pub fn add_vertex(&mut self, vtype: &str, row: Vec<Value>) -> &mut Self {
        self.vertex_rows(vtype).push(row);
        self
    }

    pub fn add_edge(&mut self, etype: &str, src: impl Into<Value>, dst: impl Into<Value>, props: Vec<Value>) -> &mut Self {
        self.edge_rows(etype).push(EdgeRow { src: src.into(), dst: dst.into(), props });
        self
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(|t| t.rows.len()).sum()
    }
}

/// Edges of one type in canonical order: sorted by (src idx, dst idx),
/// ties kept in input order. An edge's row index is its position here.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedEdges {
    pub src: Vec<u64>,
    pub dst: Vec<u64>,
    pub columns: Vec<Column>,
}

impl ResolvedEdges {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// Tables with internal ids assigned: vertices in input-row order per type.
#[derive(Clone, Debug)]
pub struct ResolvedGraph {
    pub schema: PropertyGraphSchema,
    pub vertex_counts: Vec<u64>,
    pub vertex_columns: Vec<Vec<Column>>,
    pub pk_index: Vec<HashMap<Value, u64>>,
    pub edges: Vec<ResolvedEdges>,
}

pub fn resolve(schema: &PropertyGraphSchema, tables: &GraphTables) -> Result<ResolvedGraph, StoreError> {
    schema.validate()?;
    let nv = schema.vertex_type_count();
    let mut vertex_columns: Vec<Vec<Column>> = schema
        .vertex_types
        .iter()
        .map(|vt| vt.properties.iter().map(|p| Column::new(&p.dtype)).collect())
        .collect();
    let mut pk_index: Vec<HashMap<Value, u64>> = vec![HashMap::new(); nv];
    let mut vertex_counts = vec![0u64; nv];

    for table in &tables.vertices {
        let vt = schema
            .vertex_type_id(&table.vtype)
            .ok_or_else(|| StoreError::SchemaMismatch(format!("unknown vertex type '{}'", table.vtype)))?;
        let decl = schema.vertex_type(vt);
        let pk = schema.pk_index(vt);
        for row in &table.rows {
            if row.len() != decl.properties.len() {
                return Err(StoreError::SchemaMismatch(format!(
                    "{} row has {} values, expected {}",
                    decl.name,
                    row.len(),
                    decl.properties.len()
                )));
            }
            let key = &row[pk];
            if key.is_null() {
                return Err(StoreError::SchemaMismatch(format!("{} row with null primary key", decl.name)));
            }
            let idx = vertex_counts[vt as usize];
            if pk_index[vt as usize].insert(key.clone(), idx).is_some() {
                return Err(StoreError::DuplicatePk { vtype: decl.name.clone(), pk: key.to_string() });
            }
            for (col, (value, prop)) in
                vertex_columns[vt as usize].iter_mut().zip(row.iter().zip(&decl.properties))
            {
                if !col.push(value) {
                    return Err(StoreError::SchemaMismatch(format!(
                        "{}.{} expects {}, got {}",
                        decl.name,
                        prop.name,
                        prop.dtype,
                        value.dtype()
                    )));
                }
            }
            vertex_counts[vt as usize] += 1;
        }
    }

    let mut edges = Vec::with_capacity(schema.edge_type_count());
    for et in schema.edge_type_ids() {
        let decl = schema.edge_type(et);
        let (src_t, dst_t) = schema.edge_endpoints(et);
        let mut src = Vec::new();
        let mut dst = Vec::new();
        let mut raw_cols: Vec<Column> = decl.properties.iter().map(|p| Column::new(&p.dtype)).collect();
        for table in tables.edges.iter().filter(|t| t.etype == decl.name) {
            for row in &table.rows {
                let s = *pk_index[src_t as usize].get(&row.src).ok_or_else(|| StoreError::DanglingEdge {
                    etype: decl.name.clone(),
                    missing_pk: row.src.to_string(),
                })?;
                let d = *pk_index[dst_t as usize].get(&row.dst).ok_or_else(|| StoreError::DanglingEdge {
                    etype: decl.name.clone(),
                    missing_pk: row.dst.to_string(),
                })?;
                if row.props.len() != decl.properties.len() {
                    return Err(StoreError::SchemaMismatch(format!(
                        "{} edge has {} properties, expected {}",
                        decl.name,
                        row.props.len(),
                        decl.properties.len()
                    )));
                }
                for (col, (value, prop)) in raw_cols.iter_mut().zip(row.props.iter().zip(&decl.properties)) {
                    if !col.push(value) {
                        return Err(StoreError::SchemaMismatch(format!(
                            "{}.{} expects {}, got {}",
                            decl.name,
                            prop.name,
                            prop.dtype,
                            value.dtype()
                        )));
                    }
                }
                src.push(s);
                dst.push(d);
            }
        }
        for t in &tables.edges {
            if schema.edge_type_id(&t.etype).is_none() {
                return Err(StoreError::SchemaMismatch(format!("unknown edge type '{}'", t.etype)));
            }
        }
        let mut perm: Vec<usize> = (0..src.len()).collect();
        perm.sort_by_key(|&i| (src[i], dst[i]));
        edges.push(ResolvedEdges {
            src: perm.iter().map(|&i| src[i]).collect(),
            dst: perm.iter().map(|&i| dst[i]).collect(),
            columns: raw_cols.iter().map(|c| c.permuted(&perm)).collect(),
        });
    }

    Ok(ResolvedGraph { schema: schema.clone(), vertex_counts, vertex_columns, pk_index, edges })
}
