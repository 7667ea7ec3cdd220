//! Chunked columnar on-disk format.
//!
//! Layout under the root directory:
//! `graph.meta` (JSON), `vertex/<VType>/<prop>.c<i>`,
//! `edge/<EType>/offsets.c<i>`, `edge/<EType>/targets.c<i>` and
//! `edge/<EType>/<prop>.c<i>`. Vertex chunk `i` covers ids
//! `[i*chunk_size, min((i+1)*chunk_size, n))`; edge chunk `i` holds the
//! out-edges of exactly those source vertices. Nullable columns get an
//! extra bool chunk `<prop>.v<i>` (true = present) for chunks with nulls.

pub mod chunk;
mod csv_import;
mod reader;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use chunk::Codec;
pub use csv_import::{convert_csv_to_archive, load_csv, write_csv, CsvSpec};
pub use reader::{open_archive, ArchiveStore};

use self::chunk::{encode, ChunkData};
use super::column::{Column, ColumnData};
use super::tables::{ResolvedEdges, ResolvedGraph};
use super::{ImmutableStore, MvccStore, StoreError};
use crate::model::{DataType, Direction, PropertyGraphSchema, TypeId, Value, VertexRef};
use crate::retrieval::{GraphSnapshot, GraphStore};

pub const DEFAULT_CHUNK_SIZE: u64 = 4096;
pub const META_FILE: &str = "graph.meta";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub format_version: u32,
    pub chunk_size: u64,
    pub codec: Codec,
    pub schema: PropertyGraphSchema,
    pub vertex_counts: Vec<u64>,
    pub edge_counts: Vec<u64>,
    /// Global row of the first edge in each edge chunk, per edge type.
    pub edge_chunk_starts: Vec<Vec<u64>>,
    pub manifest: Vec<String>,
}

impl GraphMeta {
    pub fn vertex_chunks(&self, vtype: TypeId) -> u64 {
        self.vertex_counts[vtype as usize].div_ceil(self.chunk_size)
    }
}

pub(crate) fn vertex_file(schema: &PropertyGraphSchema, vt: TypeId, prop: usize, chunk: u64, validity: bool) -> String {
    let decl = schema.vertex_type(vt);
    let tag = if validity { 'v' } else { 'c' };
    format!("vertex/{}/{}.{tag}{chunk}", decl.name, decl.properties[prop].name)
}

pub(crate) fn edge_file(schema: &PropertyGraphSchema, et: TypeId, what: &str, chunk: u64) -> String {
    format!("edge/{}/{what}.c{chunk}", schema.edge_type(et).name)
}

pub(crate) fn edge_validity_file(schema: &PropertyGraphSchema, et: TypeId, prop: &str, chunk: u64) -> String {
    format!("edge/{}/{prop}.v{chunk}", schema.edge_type(et).name)
}

fn column_chunk(dtype: &DataType, values: &[Value]) -> (ChunkData, Option<Vec<bool>>) {
    let valid: Vec<bool> = values.iter().map(|v| !v.is_null()).collect();
    let data = match dtype {
        DataType::Bool => ChunkData::Bool(values.iter().map(|v| v.as_bool().unwrap_or(false)).collect()),
        DataType::Int64 => ChunkData::I64(values.iter().map(|v| v.as_i64().unwrap_or(0)).collect()),
        DataType::Float64 => ChunkData::F64(values.iter().map(|v| v.as_f64().unwrap_or(0.0)).collect()),
        DataType::String => ChunkData::Str(
            values
                .iter()
                .map(|v| match v {
                    Value::String(s) => s.clone(),
                    _ => std::sync::Arc::from(""),
                })
                .collect(),
        ),
        other => panic!("non-storable property type {other}"),
    };
    let validity = if valid.iter().all(|b| *b) { None } else { Some(valid) };
    (data, validity)
}

struct Writer {
    root: PathBuf,
    codec: Codec,
    manifest: Vec<String>,
}

impl Writer {
    fn put(&mut self, rel: String, data: &ChunkData, valid: Option<&[bool]>) -> Result<(), StoreError> {
        let path = self.root.join(&rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, encode(data, valid, self.codec))?;
        self.manifest.push(rel);
        Ok(())
    }

    fn put_values(&mut self, rel: String, vrel: String, dtype: &DataType, values: &[Value]) -> Result<(), StoreError> {
        let (data, validity) = column_chunk(dtype, values);
        self.put(rel, &data, validity.as_deref())?;
        if let Some(mask) = validity {
            self.put(vrel, &ChunkData::Bool(mask), None)?;
        }
        Ok(())
    }
}

fn ensure_empty_dir(dir: &Path) -> Result<(), StoreError> {
    if dir.exists() {
        if fs::read_dir(dir)?.next().is_some() {
            return Err(StoreError::NonEmptyDir(dir.display().to_string()));
        }
    } else {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Writes a snapshot in canonical edge order; returns the sorted manifest.
pub fn write_archive(snap: &dyn GraphSnapshot, dir: &Path, chunk_size: u64, codec: Codec) -> Result<Vec<String>, StoreError> {
    ensure_empty_dir(dir)?;
    let chunk_size = chunk_size.max(1);
    let schema = snap.schema().clone();
    let mut w = Writer { root: dir.to_path_buf(), codec, manifest: Vec::new() };
    let mut vertex_counts = Vec::new();
    for vt in schema.vertex_type_ids() {
        let n = snap.vertex_count(vt)?;
        vertex_counts.push(n);
        for (p, prop) in schema.vertex_type(vt).properties.iter().enumerate() {
            for c in 0..n.div_ceil(chunk_size) {
                let range = c * chunk_size..((c + 1) * chunk_size).min(n);
                let values = range
                    .map(|i| snap.vertex_property_at(VertexRef::new(vt, i), p))
                    .collect::<Result<Vec<_>, _>>()?;
                w.put_values(
                    vertex_file(&schema, vt, p, c, false),
                    vertex_file(&schema, vt, p, c, true),
                    &prop.dtype,
                    &values,
                )?;
            }
        }
    }
    let mut edge_counts = Vec::new();
    let mut edge_chunk_starts = Vec::new();
    for et in schema.edge_type_ids() {
        let (src_t, _) = schema.edge_endpoints(et);
        let n = vertex_counts[src_t as usize];
        let decl = schema.edge_type(et);
        let mut global = 0u64;
        let mut starts = Vec::new();
        for c in 0..n.div_ceil(chunk_size) {
            starts.push(global);
            let mut offsets = vec![global];
            let mut targets = Vec::new();
            let mut props: Vec<Vec<Value>> = vec![Vec::new(); decl.properties.len()];
            for i in c * chunk_size..((c + 1) * chunk_size).min(n) {
                let mut out: Vec<_> = snap.adjacency(VertexRef::new(src_t, i), Direction::Out, et)?.collect();
                out.sort_by_key(|(nbr, e)| (nbr.idx, e.row));
                for (nbr, e) in &out {
                    targets.push(nbr.idx);
                    for (p, col) in props.iter_mut().enumerate() {
                        col.push(snap.edge_property_at(e, p)?);
                    }
                }
                global += out.len() as u64;
                offsets.push(global);
            }
            w.put(edge_file(&schema, et, "offsets", c), &ChunkData::U64(offsets), None)?;
            w.put(edge_file(&schema, et, "targets", c), &ChunkData::U64(targets), None)?;
            for (p, prop) in decl.properties.iter().enumerate() {
                w.put_values(
                    edge_file(&schema, et, &prop.name, c),
                    edge_validity_file(&schema, et, &prop.name, c),
                    &prop.dtype,
                    &props[p],
                )?;
            }
        }
        edge_counts.push(global);
        edge_chunk_starts.push(starts);
    }
    w.manifest.sort();
    let meta = GraphMeta {
        format_version: 1,
        chunk_size,
        codec,
        schema,
        vertex_counts,
        edge_counts,
        edge_chunk_starts,
        manifest: w.manifest.clone(),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| StoreError::Meta(e.to_string()))?;
    fs::write(dir.join(META_FILE), json)?;
    Ok(w.manifest)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoreKind {
    Immutable,
    Mvcc,
}

/// Either materialized store kind.
#[derive(Clone)]
pub enum BuiltStore {
    Immutable(ImmutableStore),
    Mvcc(MvccStore),
}

impl BuiltStore {
    pub fn as_store(&self) -> &dyn GraphStore {
        match self {
            BuiltStore::Immutable(s) => s,
            BuiltStore::Mvcc(s) => s,
        }
    }
}

fn concat_column(dtype: &DataType, parts: Vec<(ChunkData, Option<Vec<bool>>)>) -> Result<Column, StoreError> {
    let total: usize = parts.iter().map(|(d, _)| d.len()).sum();
    let any_nulls = parts.iter().any(|(_, v)| v.is_some());
    let mut validity = any_nulls.then(|| Vec::with_capacity(total));
    let mut data = match dtype {
        DataType::Bool => ColumnData::Bool(Vec::with_capacity(total)),
        DataType::Int64 => ColumnData::Int64(Vec::with_capacity(total)),
        DataType::Float64 => ColumnData::Float64(Vec::with_capacity(total)),
        DataType::String => ColumnData::String(Vec::with_capacity(total)),
        other => return Err(StoreError::Meta(format!("non-storable type {other}"))),
    };
    for (chunk, valid) in parts {
        let n = chunk.len();
        match (&mut data, chunk) {
            (ColumnData::Bool(out), ChunkData::Bool(v)) => out.extend(v),
            (ColumnData::Int64(out), ChunkData::I64(v)) => out.extend(v),
            (ColumnData::Float64(out), ChunkData::F64(v)) => out.extend(v),
            (ColumnData::String(out), ChunkData::Str(v)) => out.extend(v),
            _ => return Err(StoreError::Meta(format!("chunk type does not match column type {dtype}"))),
        }
        if let Some(mask) = &mut validity {
            match valid {
                Some(v) => mask.extend(v),
                None => mask.extend(std::iter::repeat_n(true, n)),
            }
        }
    }
    Ok(Column::from_parts(data, validity))
}

/// Decodes an archive fully into resolved form.
pub fn load_resolved(dir: &Path) -> Result<ResolvedGraph, StoreError> {
    let archive = open_archive(dir)?;
    let meta = archive.meta().clone();
    let schema = meta.schema.clone();
    let mut vertex_columns = Vec::new();
    let mut pk_index = Vec::new();
    for vt in schema.vertex_type_ids() {
        let decl = schema.vertex_type(vt);
        let mut cols = Vec::new();
        for (p, prop) in decl.properties.iter().enumerate() {
            let parts = (0..meta.vertex_chunks(vt))
                .map(|c| archive.read_vertex_chunk(vt, p, c))
                .collect::<Result<Vec<_>, _>>()?;
            cols.push(concat_column(&prop.dtype, parts)?);
        }
        let pk = &cols[schema.pk_index(vt)];
        let mut index = HashMap::with_capacity(pk.len());
        for i in 0..pk.len() {
            index.insert(pk.get(i), i as u64);
        }
        pk_index.push(index);
        vertex_columns.push(cols);
    }
    let mut edges = Vec::new();
    for et in schema.edge_type_ids() {
        let (src_t, _) = schema.edge_endpoints(et);
        let chunks = meta.vertex_chunks(src_t);
        let m = meta.edge_counts[et as usize] as usize;
        let mut src = Vec::with_capacity(m);
        let mut dst = Vec::with_capacity(m);
        for c in 0..chunks {
            let offsets = archive.read_u64(&edge_file(&schema, et, "offsets", c))?;
            let targets = archive.read_u64(&edge_file(&schema, et, "targets", c))?;
            for (j, w) in offsets.windows(2).enumerate() {
                let s = c * meta.chunk_size + j as u64;
                src.extend(std::iter::repeat_n(s, (w[1] - w[0]) as usize));
            }
            dst.extend_from_slice(&targets);
        }
        let decl = schema.edge_type(et);
        let mut columns = Vec::new();
        for (p, prop) in decl.properties.iter().enumerate() {
            let parts = (0..chunks).map(|c| archive.read_edge_chunk(et, p, c)).collect::<Result<Vec<_>, _>>()?;
            columns.push(concat_column(&prop.dtype, parts)?);
        }
        edges.push(ResolvedEdges { src, dst, columns });
    }
    Ok(ResolvedGraph { schema, vertex_counts: meta.vertex_counts.clone(), vertex_columns, pk_index, edges })
}

/// Materializes an in-memory store from an archive directory.
pub fn build_store_from_archive(dir: &Path, kind: StoreKind) -> Result<BuiltStore, StoreError> {
    let resolved = load_resolved(dir)?;
    Ok(match kind {
        StoreKind::Immutable => BuiltStore::Immutable(ImmutableStore::from_resolved(resolved)),
        StoreKind::Mvcc => BuiltStore::Mvcc(MvccStore::from_resolved(&resolved)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CmpOp;
    use crate::retrieval::{all_edges, emulate_filtered_scan, filtered_vertex_list, PropertyPredicate};
    use crate::testkit::{g0, random_schema, random_tables};

    fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in fs::read_dir(&d).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn g0_chunking_and_zone() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = write_archive(g0().snapshot().as_ref(), tmp.path(), 2, Codec::Raw).unwrap();
        assert!(manifest.contains(&"vertex/Buyer/username.c0".to_string()));
        assert!(manifest.contains(&"vertex/Buyer/username.c1".to_string()));
        assert!(!manifest.contains(&"vertex/Buyer/username.c2".to_string()));
        let c0 = fs::read(tmp.path().join("vertex/Buyer/username.c0")).unwrap();
        let c1 = fs::read(tmp.path().join("vertex/Buyer/username.c1")).unwrap();
        assert_eq!(chunk::parse_header(&c0).unwrap().row_count, 2);
        assert_eq!(chunk::parse_header(&c1).unwrap().row_count, 1);
        let price = chunk::parse_header(&fs::read(tmp.path().join("vertex/Item/price.c0")).unwrap()).unwrap();
        assert_eq!(f64::from_le_bytes(price.zone_min), 50.0);
        assert_eq!(f64::from_le_bytes(price.zone_max), 100.0);
    }

    #[test]
    fn writes_are_deterministic() {
        let store = crate::store::build_immutable(&random_schema(), &random_tables(7, 60, 300)).unwrap();
        for codec in [Codec::Raw, Codec::Deflate] {
            let a = tempfile::tempdir().unwrap();
            let b = tempfile::tempdir().unwrap();
            write_archive(store.snapshot().as_ref(), a.path(), 16, codec).unwrap();
            write_archive(store.snapshot().as_ref(), b.path(), 16, codec).unwrap();
            assert_eq!(tree_bytes(a.path()), tree_bytes(b.path()));
        }
    }

    #[test]
    fn non_empty_dir_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        fs::write(tmp.path().join("x"), b"1").unwrap();
        assert!(matches!(
            write_archive(g0().snapshot().as_ref(), tmp.path(), 2, Codec::Raw),
            Err(StoreError::NonEmptyDir(_))
        ));
    }

    #[test]
    fn materialized_roundtrip_matches_source() {
        let store = crate::store::build_immutable(&random_schema(), &random_tables(3, 80, 400)).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        write_archive(store.snapshot().as_ref(), tmp.path(), 7, Codec::Deflate).unwrap();
        for kind in [StoreKind::Immutable, StoreKind::Mvcc] {
            let built = build_store_from_archive(tmp.path(), kind).unwrap();
            let snap = built.as_store().snapshot_latest().unwrap();
            let src = store.snapshot();
            assert_eq!(all_edges(snap.as_ref()).unwrap(), all_edges(src.as_ref()).unwrap());
            for vt in src.schema().vertex_type_ids() {
                for i in 0..src.vertex_count(vt).unwrap() {
                    for p in 0..4 {
                        let v = VertexRef::new(vt, i);
                        assert_eq!(snap.vertex_property_at(v, p).unwrap(), src.vertex_property_at(v, p).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn archive_store_serves_g0() {
        let tmp = tempfile::tempdir().unwrap();
        let store = g0();
        write_archive(store.snapshot().as_ref(), tmp.path(), 2, Codec::Raw).unwrap();
        let archive = open_archive(tmp.path()).unwrap();
        let snap = archive.snapshot_latest().unwrap();
        let item = snap.schema().vertex_type_id("Item").unwrap();
        let pred = PropertyPredicate::always().and("price", CmpOp::Gt, 200.0);
        let before = archive.payload_decodes();
        assert!(filtered_vertex_list(snap.as_ref(), item, &pred).unwrap().indices().is_empty());
        assert_eq!(archive.payload_decodes(), before);
        let pred = PropertyPredicate::always().and("price", CmpOp::Lt, 60.0);
        assert_eq!(
            filtered_vertex_list(snap.as_ref(), item, &pred).unwrap().indices(),
            emulate_filtered_scan(store.snapshot().as_ref(), item, &pred).unwrap().indices()
        );
    }
}
