//! Read-only lazy store over an archive directory.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use lru::LruCache;
use parking_lot::Mutex;

use super::chunk::{self, ChunkData, ChunkError, ChunkHeader, ChunkType};
use super::{edge_file, edge_validity_file, vertex_file, GraphMeta, META_FILE};
use crate::model::{Direction, EdgeRef, PropertyGraphSchema, TypeId, Value, VertexRef};
use crate::retrieval::{
    check_etype, check_vertex, check_vtype, AdjArray, AdjIter, CapabilitySet, GraphSnapshot, GraphStore,
    PropertyPredicate, Result, RetrievalError, SharedSlice, SnapshotRef,
};
use crate::store::immutable::Csr;
use crate::store::StoreError;

pub const DEFAULT_CACHE_CHUNKS: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Key {
    Vertex { vt: TypeId, prop: u32, chunk: u64, validity: bool },
    Offsets { et: TypeId, chunk: u64 },
    Targets { et: TypeId, chunk: u64 },
    Rows { et: TypeId, chunk: u64 },
    Edge { et: TypeId, prop: u32, chunk: u64, validity: bool },
}

#[derive(Clone)]
enum Cached {
    Data(Arc<ChunkData>),
    Words(Arc<Vec<u64>>),
}

pub struct ArchiveGraph {
    root: PathBuf,
    meta: GraphMeta,
    headers: HashMap<Key, ChunkHeader>,
    cache: Mutex<LruCache<Key, Cached>>,
    decodes: AtomicU64,
    pk_index: Vec<OnceLock<HashMap<Value, u64>>>,
    reverse: Vec<OnceLock<Csr>>,
}

/// Archive opened for reading; clones share the chunk cache.
#[derive(Clone)]
pub struct ArchiveStore {
    graph: Arc<ArchiveGraph>,
}

fn chunk_err(path: &str, e: ChunkError) -> StoreError {
    match e {
        ChunkError::BadMagic => StoreError::BadMagic(path.to_string()),
        ChunkError::UnsupportedVersion(v) => StoreError::UnsupportedVersion(v as u32),
        ChunkError::Corrupt(reason) => StoreError::CorruptChunk { path: path.to_string(), reason },
    }
}

fn storage(e: StoreError) -> RetrievalError {
    RetrievalError::Storage(e.to_string())
}

/// Offsets chunk, targets chunk and the local range of one vertex.
type Segment = (Arc<Vec<u64>>, Arc<Vec<u64>>, std::ops::Range<usize>);

/// Opens an archive, validating the metadata and every chunk header.
pub fn open_archive(dir: &Path) -> Result<ArchiveStore, StoreError> {
    open_archive_with_cache(dir, DEFAULT_CACHE_CHUNKS)
}

pub fn open_archive_with_cache(dir: &Path, cache_chunks: usize) -> Result<ArchiveStore, StoreError> {
    let text = fs::read_to_string(dir.join(META_FILE))?;
    let meta: GraphMeta = serde_json::from_str(&text).map_err(|e| StoreError::Meta(e.to_string()))?;
    if meta.format_version != 1 {
        return Err(StoreError::UnsupportedVersion(meta.format_version));
    }
    meta.schema.validate()?;
    let schema = &meta.schema;
    let files: HashSet<&str> = meta.manifest.iter().map(String::as_str).collect();
    let mut headers = HashMap::new();
    let mut add = |key: Key, rel: String, expect: Option<u64>, required: bool| -> Result<(), StoreError> {
        if !files.contains(rel.as_str()) {
            if required {
                return Err(StoreError::CorruptChunk { path: rel, reason: "missing from manifest".into() });
            }
            return Ok(());
        }
        let bytes = fs::read(dir.join(&rel))?;
        let h = chunk::parse_header(&bytes).map_err(|e| chunk_err(&rel, e))?;
        if let Some(n) = expect {
            if h.row_count as u64 != n {
                return Err(StoreError::CorruptChunk { path: rel, reason: format!("row_count {} != {n}", h.row_count) });
            }
        }
        let body = bytes.len() - chunk::HEADER_LEN;
        let fixed = match h.dtype {
            ChunkType::Bool => Some(1),
            ChunkType::Str => None,
            _ => Some(8),
        };
        if let (0, Some(w)) = (h.codec, fixed) {
            if body != h.row_count as usize * w {
                return Err(StoreError::CorruptChunk { path: rel, reason: "payload length mismatch".into() });
            }
        }
        headers.insert(key, h);
        Ok(())
    };
    let cs = meta.chunk_size;
    for vt in schema.vertex_type_ids() {
        let n = meta.vertex_counts[vt as usize];
        for p in 0..schema.vertex_type(vt).properties.len() {
            for c in 0..n.div_ceil(cs) {
                let rows = (n - c * cs).min(cs);
                let prop = p as u32;
                add(Key::Vertex { vt, prop, chunk: c, validity: false }, vertex_file(schema, vt, p, c, false), Some(rows), true)?;
                add(Key::Vertex { vt, prop, chunk: c, validity: true }, vertex_file(schema, vt, p, c, true), Some(rows), false)?;
            }
        }
    }
    for et in schema.edge_type_ids() {
        let (src_t, _) = schema.edge_endpoints(et);
        let n = meta.vertex_counts[src_t as usize];
        for c in 0..n.div_ceil(cs) {
            let rows = (n - c * cs).min(cs);
            add(Key::Offsets { et, chunk: c }, edge_file(schema, et, "offsets", c), Some(rows + 1), true)?;
            add(Key::Targets { et, chunk: c }, edge_file(schema, et, "targets", c), None, true)?;
            for (p, prop) in schema.edge_type(et).properties.iter().enumerate() {
                let pi = p as u32;
                add(Key::Edge { et, prop: pi, chunk: c, validity: false }, edge_file(schema, et, &prop.name, c), None, true)?;
                add(Key::Edge { et, prop: pi, chunk: c, validity: true }, edge_validity_file(schema, et, &prop.name, c), None, false)?;
            }
        }
    }
    let capacity = NonZeroUsize::new(cache_chunks.max(1)).expect("non-zero");
    Ok(ArchiveStore {
        graph: Arc::new(ArchiveGraph {
            root: dir.to_path_buf(),
            pk_index: (0..schema.vertex_type_count()).map(|_| OnceLock::new()).collect(),
            reverse: (0..schema.edge_type_count()).map(|_| OnceLock::new()).collect(),
            meta,
            headers,
            cache: Mutex::new(LruCache::new(capacity)),
            decodes: AtomicU64::new(0),
        }),
    })
}

impl ArchiveStore {
    pub fn meta(&self) -> &GraphMeta {
        &self.graph.meta
    }

    /// Number of chunk payloads decoded so far (headers excluded).
    pub fn payload_decodes(&self) -> u64 {
        self.graph.decodes.load(Ordering::Relaxed)
    }

    pub fn graph(&self) -> &ArchiveGraph {
        &self.graph
    }

    /// Decodes every chunk, surfacing the first corruption.
    pub fn verify(&self) -> Result<(), StoreError> {
        for rel in &self.graph.meta.manifest {
            self.graph.decode_file(rel)?;
        }
        Ok(())
    }

    pub(crate) fn read_vertex_chunk(&self, vt: TypeId, prop: usize, c: u64) -> Result<(ChunkData, Option<Vec<bool>>), StoreError> {
        let schema = &self.graph.meta.schema;
        let data = self.graph.decode_file(&vertex_file(schema, vt, prop, c, false))?;
        let key = Key::Vertex { vt, prop: prop as u32, chunk: c, validity: true };
        let valid = self.graph.read_validity(key, || vertex_file(schema, vt, prop, c, true))?;
        Ok((data, valid))
    }

    pub(crate) fn read_edge_chunk(&self, et: TypeId, prop: usize, c: u64) -> Result<(ChunkData, Option<Vec<bool>>), StoreError> {
        let schema = &self.graph.meta.schema;
        let name = &schema.edge_type(et).properties[prop].name;
        let data = self.graph.decode_file(&edge_file(schema, et, name, c))?;
        let key = Key::Edge { et, prop: prop as u32, chunk: c, validity: true };
        let valid = self.graph.read_validity(key, || edge_validity_file(schema, et, name, c))?;
        Ok((data, valid))
    }

    pub(crate) fn read_u64(&self, rel: &str) -> Result<Vec<u64>, StoreError> {
        match self.graph.decode_file(rel)? {
            ChunkData::U64(v) => Ok(v),
            _ => Err(StoreError::CorruptChunk { path: rel.to_string(), reason: "expected u64 chunk".into() }),
        }
    }
}

impl ArchiveGraph {
    fn decode_file(&self, rel: &str) -> Result<ChunkData, StoreError> {
        let bytes = fs::read(self.root.join(rel))?;
        self.decodes.fetch_add(1, Ordering::Relaxed);
        chunk::decode(&bytes).map(|(_, d)| d).map_err(|e| chunk_err(rel, e))
    }

    fn read_validity(&self, key: Key, rel: impl FnOnce() -> String) -> Result<Option<Vec<bool>>, StoreError> {
        if !self.headers.contains_key(&key) {
            return Ok(None);
        }
        let rel = rel();
        match self.decode_file(&rel)? {
            ChunkData::Bool(v) => Ok(Some(v)),
            _ => Err(StoreError::CorruptChunk { path: rel, reason: "validity chunk is not bool".into() }),
        }
    }

    fn path_of(&self, key: Key) -> String {
        let schema = &self.meta.schema;
        match key {
            Key::Vertex { vt, prop, chunk, validity } => vertex_file(schema, vt, prop as usize, chunk, validity),
            Key::Offsets { et, chunk } => edge_file(schema, et, "offsets", chunk),
            Key::Targets { et, chunk } => edge_file(schema, et, "targets", chunk),
            Key::Rows { .. } => unreachable!("rows are derived"),
            Key::Edge { et, prop, chunk, validity } => {
                let name = &schema.edge_type(et).properties[prop as usize].name;
                if validity {
                    edge_validity_file(schema, et, name, chunk)
                } else {
                    edge_file(schema, et, name, chunk)
                }
            }
        }
    }

    fn fetch(&self, key: Key) -> Result<Cached> {
        if let Some(hit) = self.cache.lock().get(&key) {
            return Ok(hit.clone());
        }
        let value = match key {
            Key::Rows { et, chunk } => {
                let off = self.words(Key::Offsets { et, chunk })?;
                let (lo, hi) = (off[0], *off.last().expect("offsets non-empty"));
                Cached::Words(Arc::new((lo..hi).collect()))
            }
            _ => {
                let data = self.decode_file(&self.path_of(key)).map_err(storage)?;
                match data {
                    ChunkData::U64(v) => Cached::Words(Arc::new(v)),
                    other => Cached::Data(Arc::new(other)),
                }
            }
        };
        self.cache.lock().put(key, value.clone());
        Ok(value)
    }

    fn words(&self, key: Key) -> Result<Arc<Vec<u64>>> {
        match self.fetch(key)? {
            Cached::Words(w) => Ok(w),
            Cached::Data(_) => Err(RetrievalError::Storage(format!("{} is not a u64 chunk", self.path_of(key)))),
        }
    }

    fn data(&self, key: Key) -> Result<Arc<ChunkData>> {
        match self.fetch(key)? {
            Cached::Data(d) => Ok(d),
            Cached::Words(_) => Err(RetrievalError::Storage(format!("{} is a u64 chunk", self.path_of(key)))),
        }
    }

    fn cell(&self, key: Key, vkey: Key, local: usize) -> Result<Value> {
        if self.headers.contains_key(&vkey) {
            if let ChunkData::Bool(mask) = &*self.data(vkey)? {
                if !mask[local] {
                    return Ok(Value::Null);
                }
            }
        }
        Ok(self.data(key)?.value(local))
    }

    fn out_segment(&self, v: VertexRef, et: TypeId) -> Result<Segment> {
        let cs = self.meta.chunk_size;
        let chunk = v.idx / cs;
        let local = (v.idx % cs) as usize;
        let off = self.words(Key::Offsets { et, chunk })?;
        let base = off[0];
        let range = (off[local] - base) as usize..(off[local + 1] - base) as usize;
        let targets = self.words(Key::Targets { et, chunk })?;
        let rows = self.words(Key::Rows { et, chunk })?;
        Ok((targets, rows, range))
    }

    /// Destination-sorted adjacency, built on first In access per edge type.
    fn reverse(&self, et: TypeId) -> Result<&Csr> {
        if let Some(csr) = self.reverse[et as usize].get() {
            return Ok(csr);
        }
        let (src_t, dst_t) = self.meta.schema.edge_endpoints(et);
        let n = self.meta.vertex_counts[src_t as usize];
        let m = self.meta.edge_counts[et as usize] as usize;
        let (mut srcs, mut dsts) = (Vec::with_capacity(m), Vec::with_capacity(m));
        for chunk in 0..n.div_ceil(self.meta.chunk_size) {
            let off = self.words(Key::Offsets { et, chunk })?;
            let targets = self.words(Key::Targets { et, chunk })?;
            for (j, w) in off.windows(2).enumerate() {
                srcs.extend(std::iter::repeat_n(chunk * self.meta.chunk_size + j as u64, (w[1] - w[0]) as usize));
            }
            dsts.extend_from_slice(&targets);
        }
        let rows: Vec<u64> = (0..m as u64).collect();
        let csr = Csr::build(self.meta.vertex_counts[dst_t as usize], &dsts, &srcs, &rows);
        Ok(self.reverse[et as usize].get_or_init(|| csr))
    }

    fn pk_map(&self, vt: TypeId) -> Result<&HashMap<Value, u64>> {
        if let Some(map) = self.pk_index[vt as usize].get() {
            return Ok(map);
        }
        let pk = self.meta.schema.pk_index(vt) as u32;
        let mut map = HashMap::new();
        let n = self.meta.vertex_counts[vt as usize];
        for chunk in 0..n.div_ceil(self.meta.chunk_size) {
            let data = self.data(Key::Vertex { vt, prop: pk, chunk, validity: false })?;
            for i in 0..data.len() {
                map.insert(data.value(i), chunk * self.meta.chunk_size + i as u64);
            }
        }
        Ok(self.pk_index[vt as usize].get_or_init(|| map))
    }

    fn array(&self, v: VertexRef, dir: Direction, et: TypeId) -> Result<AdjArray<'_>> {
        check_etype(&self.meta.schema, et)?;
        check_vertex(self, v)?;
        let (src_t, dst_t) = self.meta.schema.edge_endpoints(et);
        match dir {
            Direction::Out if v.vtype == src_t => {
                let (targets, rows, range) = self.out_segment(v, et)?;
                Ok(AdjArray {
                    anchor: v,
                    etype: et,
                    direction: dir,
                    neighbor_type: dst_t,
                    neighbors: SharedSlice::Chunk(targets, range.clone()),
                    rows: SharedSlice::Chunk(rows, range),
                })
            }
            Direction::In if v.vtype == dst_t => {
                let csc = self.reverse(et)?;
                let seg = csc.segment(v.idx);
                Ok(AdjArray {
                    anchor: v,
                    etype: et,
                    direction: dir,
                    neighbor_type: src_t,
                    neighbors: SharedSlice::Borrowed(&csc.targets[seg.clone()]),
                    rows: SharedSlice::Borrowed(&csc.rows[seg]),
                })
            }
            Direction::Both => Err(RetrievalError::UnsupportedCapability("adjacency_array(Both)")),
            _ => Ok(AdjArray::empty(v, et, dir)),
        }
    }

    /// Chunk `c` cannot hold a match for condition (prop, op, constant).
    fn chunk_refuted(&self, vt: TypeId, prop: usize, c: u64, op: crate::model::CmpOp, constant: &Value) -> bool {
        if constant.is_null() {
            return true;
        }
        let prop = prop as u32;
        if let Some(vh) = self.headers.get(&Key::Vertex { vt, prop, chunk: c, validity: true }) {
            if vh.zone_max[0] == 0 {
                return true;
            }
        }
        match self.headers.get(&Key::Vertex { vt, prop, chunk: c, validity: false }) {
            Some(h) => chunk::zone_refutes(h, op, constant),
            None => false,
        }
    }
}

impl GraphSnapshot for ArchiveGraph {
    fn schema(&self) -> &PropertyGraphSchema {
        &self.meta.schema
    }

    fn capabilities(&self) -> CapabilitySet {
        archive_capabilities()
    }

    fn version(&self) -> u64 {
        0
    }

    fn vertex_count(&self, vtype: TypeId) -> Result<u64> {
        check_vtype(&self.meta.schema, vtype)?;
        Ok(self.meta.vertex_counts[vtype as usize])
    }

    fn adjacency(&self, v: VertexRef, dir: Direction, etype: TypeId) -> Result<AdjIter<'_>> {
        if dir == Direction::Both {
            let out = self.array(v, Direction::Out, etype)?;
            let inn = self.array(v, Direction::In, etype)?;
            let items: Vec<_> = out.iter().chain(inn.iter()).collect();
            return Ok(Box::new(items.into_iter()));
        }
        let arr = self.array(v, dir, etype)?;
        Ok(Box::new((0..arr.len()).map(move |i| (arr.neighbor(i), arr.edge(i)))))
    }

    fn adjacency_array(&self, v: VertexRef, dir: Direction, etype: TypeId) -> Result<AdjArray<'_>> {
        self.array(v, dir, etype)
    }

    fn degree(&self, v: VertexRef, dir: Direction, etype: TypeId) -> Result<u64> {
        Ok(match dir {
            Direction::Both => {
                (self.array(v, Direction::Out, etype)?.len() + self.array(v, Direction::In, etype)?.len()) as u64
            }
            d => self.array(v, d, etype)?.len() as u64,
        })
    }

    fn vertex_property_at(&self, v: VertexRef, prop: usize) -> Result<Value> {
        check_vertex(self, v)?;
        if prop >= self.meta.schema.vertex_type(v.vtype).properties.len() {
            return Err(RetrievalError::UnknownProperty(format!("#{prop}")));
        }
        let cs = self.meta.chunk_size;
        let (chunk, local) = (v.idx / cs, (v.idx % cs) as usize);
        let p = prop as u32;
        self.cell(
            Key::Vertex { vt: v.vtype, prop: p, chunk, validity: false },
            Key::Vertex { vt: v.vtype, prop: p, chunk, validity: true },
            local,
        )
    }

    fn edge_property_at(&self, e: &EdgeRef, prop: usize) -> Result<Value> {
        check_etype(&self.meta.schema, e.etype)?;
        if prop >= self.meta.schema.edge_type(e.etype).properties.len() {
            return Err(RetrievalError::UnknownProperty(format!("#{prop}")));
        }
        let total = self.meta.edge_counts[e.etype as usize];
        if e.row >= total {
            return Err(RetrievalError::IndexOutOfRange { index: e.row, size: total });
        }
        let starts = &self.meta.edge_chunk_starts[e.etype as usize];
        // last chunk whose start is <= row; empty chunks share a start
        let chunk = starts.partition_point(|&s| s <= e.row) - 1;
        let local = (e.row - starts[chunk]) as usize;
        let (et, p, c) = (e.etype, prop as u32, chunk as u64);
        self.cell(
            Key::Edge { et, prop: p, chunk: c, validity: false },
            Key::Edge { et, prop: p, chunk: c, validity: true },
            local,
        )
    }

    fn lookup_by_pk(&self, vtype: TypeId, key: &Value) -> Result<VertexRef> {
        check_vtype(&self.meta.schema, vtype)?;
        let key = match (key, &self.meta.schema.vertex_type(vtype).properties[self.meta.schema.pk_index(vtype)].dtype) {
            (Value::Int64(i), crate::model::DataType::Float64) => Value::Float64(*i as f64),
            _ => key.clone(),
        };
        self.pk_map(vtype)?.get(&key).map(|&i| VertexRef::new(vtype, i)).ok_or(RetrievalError::NotFound)
    }

    fn shards(&self) -> Result<u32> {
        Ok(1)
    }

    fn filtered_vertices(&self, vtype: TypeId, pred: &PropertyPredicate) -> Result<Vec<u64>> {
        check_vtype(&self.meta.schema, vtype)?;
        let conds = pred.resolve(&self.meta.schema, vtype)?;
        let cs = self.meta.chunk_size;
        let n = self.meta.vertex_counts[vtype as usize];
        let mut out = Vec::new();
        for c in 0..n.div_ceil(cs) {
            if conds.iter().any(|(p, op, k)| self.chunk_refuted(vtype, *p, c, *op, k)) {
                continue;
            }
            'rows: for i in c * cs..((c + 1) * cs).min(n) {
                for (p, op, k) in &conds {
                    let value = self.vertex_property_at(VertexRef::new(vtype, i), *p)?;
                    if op.apply(&value, k) != Some(true) {
                        continue 'rows;
                    }
                }
                out.push(i);
            }
        }
        Ok(out)
    }
}

pub fn archive_capabilities() -> CapabilitySet {
    let mut caps = CapabilitySet::all();
    caps.common.snapshot_versions = false;
    caps.partition.vertex_to_shard = false;
    caps
}

impl GraphStore for ArchiveStore {
    fn schema(&self) -> &PropertyGraphSchema {
        &self.graph.meta.schema
    }

    fn capabilities(&self) -> CapabilitySet {
        archive_capabilities()
    }

    fn snapshot_latest(&self) -> Result<SnapshotRef> {
        Ok(self.graph.clone())
    }

    fn kind(&self) -> &'static str {
        "archive"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CmpOp;
    use crate::retrieval::{emulate_filtered_scan, filtered_vertex_list, lookup_by_pk};
    use crate::store::archive::{write_archive, Codec};
    use crate::testkit::{g0, random_schema, random_tables};

    fn archived(store: &crate::store::ImmutableStore, chunk: u64, codec: Codec) -> (tempfile::TempDir, ArchiveStore) {
        let tmp = tempfile::tempdir().unwrap();
        write_archive(store.snapshot().as_ref(), tmp.path(), chunk, codec).unwrap();
        let a = open_archive(tmp.path()).unwrap();
        (tmp, a)
    }

    #[test]
    fn every_retrieval_op_matches_immutable() {
        let store = crate::store::build_immutable(&random_schema(), &random_tables(11, 120, 700)).unwrap();
        let (_tmp, archive) = archived(&store, 8, Codec::Deflate);
        let a = archive.snapshot_latest().unwrap();
        let s = store.snapshot();
        let schema = s.schema().clone();
        for vt in schema.vertex_type_ids() {
            assert_eq!(a.vertex_count(vt).unwrap(), s.vertex_count(vt).unwrap());
            for i in 0..s.vertex_count(vt).unwrap() {
                let v = VertexRef::new(vt, i);
                for p in 0..4 {
                    assert_eq!(a.vertex_property_at(v, p).unwrap(), s.vertex_property_at(v, p).unwrap());
                }
                let pk = s.vertex_property_at(v, 0).unwrap();
                assert_eq!(lookup_by_pk(a.as_ref(), vt, &pk).unwrap(), v);
                for et in schema.edge_type_ids() {
                    for dir in [Direction::Out, Direction::In, Direction::Both] {
                        let x: Vec<_> = a.adjacency(v, dir, et).unwrap().collect();
                        let y: Vec<_> = s.adjacency(v, dir, et).unwrap().collect();
                        assert_eq!(x, y);
                        assert_eq!(a.degree(v, dir, et).unwrap(), s.degree(v, dir, et).unwrap());
                        for (_, e) in &x {
                            assert_eq!(a.edge_property_at(e, 0).unwrap(), s.edge_property_at(e, 0).unwrap());
                        }
                    }
                }
            }
            for (op, k) in [(CmpOp::Gt, 5i64), (CmpOp::Eq, 3), (CmpOp::Le, 0), (CmpOp::Ne, 4)] {
                let pred = PropertyPredicate::always().and("val", op, k);
                assert_eq!(
                    filtered_vertex_list(a.as_ref(), vt, &pred).unwrap().indices(),
                    emulate_filtered_scan(s.as_ref(), vt, &pred).unwrap().indices()
                );
            }
        }
        assert!(matches!(lookup_by_pk(a.as_ref(), 0, &Value::Int64(-5)), Err(RetrievalError::NotFound)));
    }

    #[test]
    fn zone_maps_skip_payloads() {
        let (_tmp, archive) = archived(&g0(), 2, Codec::Raw);
        let snap = archive.snapshot_latest().unwrap();
        let item = snap.schema().vertex_type_id("Item").unwrap();
        let before = archive.payload_decodes();
        let pred = PropertyPredicate::always().and("price", CmpOp::Gt, 60.0);
        assert_eq!(filtered_vertex_list(snap.as_ref(), item, &pred).unwrap().indices(), vec![0]);
        assert_eq!(archive.payload_decodes(), before + 1);
    }

    #[test]
    fn corruption_is_detected() {
        let tmp = tempfile::tempdir().unwrap();
        write_archive(g0().snapshot().as_ref(), tmp.path(), 2, Codec::Raw).unwrap();
        let path = tmp.path().join("vertex/Item/price.c0");
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(open_archive(tmp.path()), Err(StoreError::CorruptChunk { .. })));
        fs::write(&path, &bytes[..10]).unwrap();
        assert!(matches!(open_archive(tmp.path()), Err(StoreError::CorruptChunk { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'Z';
        fs::write(&path, &bad).unwrap();
        assert!(matches!(open_archive(tmp.path()), Err(StoreError::BadMagic(_))));
        let mut bad = bytes.clone();
        bad[4] = 2;
        fs::write(&path, &bad).unwrap();
        assert!(matches!(open_archive(tmp.path()), Err(StoreError::UnsupportedVersion(2))));
        fs::write(&path, &bytes).unwrap();
        assert!(open_archive(tmp.path()).unwrap().verify().is_ok());
    }

    #[test]
    fn deflate_truncation_found_by_verify() {
        let tmp = tempfile::tempdir().unwrap();
        write_archive(g0().snapshot().as_ref(), tmp.path(), 2, Codec::Deflate).unwrap();
        let path = tmp.path().join("edge/Buy/targets.c0");
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 2]).unwrap();
        let store = open_archive(tmp.path()).unwrap();
        assert!(matches!(store.verify(), Err(StoreError::CorruptChunk { .. })));
    }

    #[test]
    fn nulls_survive_roundtrip() {
        let schema = crate::testkit::g0_schema();
        let mut t = crate::testkit::g0_tables();
        t.add_vertex("Item", vec![Value::Int64(3), Value::Null, Value::Null]);
        t.add_edge("Buy", "A1", 3i64, vec![Value::Null]);
        let store = crate::store::build_immutable(&schema, &t).unwrap();
        let (_tmp, archive) = archived(&store, 2, Codec::Raw);
        let a = archive.snapshot_latest().unwrap();
        let item = schema.vertex_type_id("Item").unwrap();
        assert!(a.vertex_property_at(VertexRef::new(item, 2), 1).unwrap().is_null());
        let pred = PropertyPredicate::always().and("price", CmpOp::Ge, 0.0);
        assert_eq!(filtered_vertex_list(a.as_ref(), item, &pred).unwrap().indices(), vec![0, 1]);
        let b1 = VertexRef::new(0, 0);
        let edges: Vec<_> = a.adjacency(b1, Direction::Out, 1).unwrap().map(|(_, e)| e).collect();
        assert_eq!(edges.len(), 2);
        assert_eq!(a.edge_property_at(&edges[0], 0).unwrap(), Value::Int64(1));
        assert!(a.edge_property_at(&edges[1], 0).unwrap().is_null());
    }
}
