//! Versioned mutable store.
//!
//! Adjacency lives in per-vertex chains of fixed-capacity segments whose
//! entries carry `(insert_v, delete_v)`. A single writer stages a batch on
//! a copy-on-write clone of the published graph and publishes it with one
//! atomic pointer swap; readers pin a published graph plus a version and
//! filter entries with `insert_v <= v < delete_v`. Readers take no locks.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashMap};
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use arc_swap::ArcSwap;
use parking_lot::{Mutex, MutexGuard};

use super::tables::{resolve, GraphTables, ResolvedGraph};
use super::StoreError;
use crate::model::{Direction, EdgeRef, PropertyGraphSchema, TypeId, Value, VertexRef};
use crate::retrieval::{
    check_etype, check_vertex, check_vtype, AdjIter, CapabilitySet, GraphSnapshot, GraphStore,
    Result, RetrievalError, SnapshotRef,
};

pub const DEFAULT_SEGMENT_CAPACITY: usize = 64;
const PAGE: usize = 1024;
const PK_SHARDS: usize = 64;
const LIVE: u64 = u64::MAX;

/// Vector split into shared pages; cloning copies page pointers only and
/// mutation copies the touched page when it is shared.
#[derive(Clone, Debug)]
struct PagedVec<T: Clone> {
    pages: Vec<Arc<Vec<T>>>,
    len: usize,
}

impl<T: Clone> Default for PagedVec<T> {
    fn default() -> Self {
        PagedVec { pages: Vec::new(), len: 0 }
    }
}

impl<T: Clone> PagedVec<T> {
    fn len(&self) -> usize {
        self.len
    }

    fn get(&self, i: usize) -> &T {
        &self.pages[i / PAGE][i % PAGE]
    }

    fn get_mut(&mut self, i: usize) -> &mut T {
        &mut Arc::make_mut(&mut self.pages[i / PAGE])[i % PAGE]
    }

    fn push(&mut self, value: T) {
        if self.len.is_multiple_of(PAGE) {
            self.pages.push(Arc::new(Vec::with_capacity(PAGE)));
        }
        Arc::make_mut(self.pages.last_mut().expect("page exists")).push(value);
        self.len += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct AdjEntry {
    neighbor: u64,
    row: u64,
    insert_v: u64,
    delete_v: u64,
}

impl AdjEntry {
    #[inline]
    fn visible_at(&self, v: u64) -> bool {
        self.insert_v <= v && v < self.delete_v
    }
}

#[derive(Clone, Debug, Default)]
struct Segment {
    entries: Vec<AdjEntry>,
}

/// Segments of one (vertex, direction, edge type); only the tail accepts appends.
#[derive(Clone, Debug, Default)]
struct SegmentChain {
    segments: Vec<Arc<Segment>>,
}

impl SegmentChain {
    fn append(&mut self, entry: AdjEntry, capacity: usize) {
        match self.segments.last_mut() {
            Some(tail) if tail.entries.len() < capacity => Arc::make_mut(tail).entries.push(entry),
            _ => {
                let mut entries = Vec::with_capacity(capacity);
                entries.push(entry);
                self.segments.push(Arc::new(Segment { entries }));
            }
        }
    }

    fn entries(&self) -> impl Iterator<Item = &AdjEntry> {
        self.segments.iter().flat_map(|s| s.entries.iter())
    }

    /// Applies `f` to the entry with `row`, copying its segment if shared.
    fn update_row(&mut self, row: u64, f: impl FnOnce(&mut Vec<AdjEntry>, usize)) -> bool {
        for seg in &mut self.segments {
            if let Some(pos) = seg.entries.iter().position(|e| e.row == row) {
                f(&mut Arc::make_mut(seg).entries, pos);
                return true;
            }
        }
        false
    }
}

/// Latest (version, value) plus newest-first prior versions.
#[derive(Clone, Debug)]
struct PropCell {
    version: u64,
    value: Value,
    prior: Vec<(u64, Value)>,
}

impl PropCell {
    fn new(version: u64, value: Value) -> Self {
        PropCell { version, value, prior: Vec::new() }
    }

    fn read(&self, at: u64) -> Value {
        if self.version <= at {
            return self.value.clone();
        }
        self.prior
            .iter()
            .find(|(v, _)| *v <= at)
            .map(|(_, value)| value.clone())
            .unwrap_or(Value::Null)
    }

    fn write(&mut self, version: u64, value: Value) {
        if self.version != version {
            let old = std::mem::replace(&mut self.value, value);
            self.prior.insert(0, (self.version, old));
            self.version = version;
        } else {
            self.value = value;
        }
    }
}

#[derive(Clone, Debug, Default)]
struct PkIndex {
    shards: Vec<Arc<HashMap<Value, u64>>>,
}

impl PkIndex {
    fn new() -> Self {
        PkIndex { shards: (0..PK_SHARDS).map(|_| Arc::new(HashMap::new())).collect() }
    }

    fn shard(key: &Value) -> usize {
        let mut h = DefaultHasher::new();
        key.hash(&mut h);
        (h.finish() as usize) % PK_SHARDS
    }

    fn get(&self, key: &Value) -> Option<u64> {
        self.shards[Self::shard(key)].get(key).copied()
    }

    fn insert(&mut self, key: Value, idx: u64) {
        Arc::make_mut(&mut self.shards[Self::shard(&key)]).insert(key, idx);
    }
}

#[derive(Clone, Debug, Default)]
struct VertexData {
    insert_v: PagedVec<u64>,
    props: Vec<PagedVec<PropCell>>,
    pk: PkIndex,
}

#[derive(Clone, Debug, Default)]
struct EdgeData {
    src: PagedVec<u64>,
    dst: PagedVec<u64>,
    props: Vec<PagedVec<PropCell>>,
    out_chains: PagedVec<SegmentChain>,
    in_chains: PagedVec<SegmentChain>,
}

/// A published graph state; entries newer than a reader's version are
/// filtered out on read.
#[derive(Clone, Debug)]
struct VersionedGraph {
    version: u64,
    vertices: Vec<VertexData>,
    edges: Vec<EdgeData>,
}

/// One update inside a [`WriteBatch`]. Vertices are addressed by primary
/// key; edges by (type, src pk, dst pk, ordinal among live duplicates).
#[derive(Clone, Debug, PartialEq)]
pub enum Mutation {
    InsertVertex { vtype: String, props: Vec<(String, Value)> },
    InsertEdge { etype: String, src: Value, dst: Value, props: Vec<(String, Value)> },
    DeleteEdge { etype: String, src: Value, dst: Value, ordinal: usize },
    SetVertexProp { vtype: String, pk: Value, prop: String, value: Value },
    SetEdgeProp { etype: String, src: Value, dst: Value, ordinal: usize, prop: String, value: Value },
}

struct Inner {
    schema: PropertyGraphSchema,
    current: ArcSwap<VersionedGraph>,
    committed: AtomicU64,
    /// Oldest version still readable after compaction.
    oldest_readable: AtomicU64,
    writer: Mutex<()>,
    open_snapshots: Mutex<BTreeMap<u64, usize>>,
    segment_capacity: usize,
    partitions: u32,
}

#[derive(Clone)]
pub struct MvccStore {
    inner: Arc<Inner>,
}

/// Staged mutations holding the single-writer lock until commit or drop.
pub struct WriteBatch<'a> {
    store: &'a MvccStore,
    _guard: MutexGuard<'a, ()>,
    mutations: Vec<Mutation>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CompactStats {
    pub entries_dropped: u64,
}

impl MvccStore {
    pub fn new(schema: PropertyGraphSchema) -> Result<Self, StoreError> {
        Self::with_segment_capacity(schema, DEFAULT_SEGMENT_CAPACITY)
    }

    pub fn with_segment_capacity(schema: PropertyGraphSchema, capacity: usize) -> Result<Self, StoreError> {
        schema.validate()?;
        let vertices = schema
            .vertex_types
            .iter()
            .map(|vt| VertexData {
                insert_v: PagedVec::default(),
                props: vt.properties.iter().map(|_| PagedVec::default()).collect(),
                pk: PkIndex::new(),
            })
            .collect();
        let edges = schema
            .edge_types
            .iter()
            .map(|et| EdgeData {
                props: et.properties.iter().map(|_| PagedVec::default()).collect(),
                ..EdgeData::default()
            })
            .collect();
        let graph = VersionedGraph { version: 0, vertices, edges };
        Ok(MvccStore {
            inner: Arc::new(Inner {
                schema,
                current: ArcSwap::from_pointee(graph),
                committed: AtomicU64::new(0),
                oldest_readable: AtomicU64::new(0),
                writer: Mutex::new(()),
                open_snapshots: Mutex::new(BTreeMap::new()),
                segment_capacity: capacity.max(1),
                partitions: 1,
            }),
        })
    }

    /// Loads tables as a single commit (version 1), edges in canonical order.
    pub fn from_tables(schema: &PropertyGraphSchema, tables: &GraphTables) -> Result<Self, StoreError> {
        let resolved = resolve(schema, tables)?;
        let store = MvccStore::new(schema.clone())?;
        store.load_resolved(&resolved)?;
        Ok(store)
    }

    pub fn from_resolved(resolved: &ResolvedGraph) -> Result<Self, StoreError> {
        let store = MvccStore::new(resolved.schema.clone())?;
        store.load_resolved(resolved)?;
        Ok(store)
    }

    pub fn with_partitions(self, partitions: u32) -> Self {
        let inner = Arc::try_unwrap(self.inner).unwrap_or_else(|_| panic!("configure partitions before sharing"));
        MvccStore { inner: Arc::new(Inner { partitions: partitions.max(1), ..inner }) }
    }

    pub fn schema(&self) -> &PropertyGraphSchema {
        &self.inner.schema
    }

    pub fn committed_version(&self) -> u64 {
        self.inner.committed.load(Ordering::Acquire)
    }

    /// Opens the single write batch; fails with `WriterBusy` while another is open.
    pub fn begin_batch(&self) -> Result<WriteBatch<'_>, StoreError> {
        let guard = self.inner.writer.try_lock().ok_or(StoreError::WriterBusy)?;
        Ok(WriteBatch { store: self, _guard: guard, mutations: Vec::new() })
    }

    /// Like [`MvccStore::begin_batch`] but waits for the current writer.
    pub fn begin_batch_blocking(&self) -> WriteBatch<'_> {
        WriteBatch { store: self, _guard: self.inner.writer.lock(), mutations: Vec::new() }
    }

    fn publish(&self, graph: VersionedGraph) -> u64 {
        let version = graph.version;
        self.inner.current.store(Arc::new(graph));
        self.inner.committed.store(version, Ordering::Release);
        version
    }

    fn load_resolved(&self, g: &ResolvedGraph) -> Result<u64, StoreError> {
        let _guard = self.inner.writer.lock();
        let base = self.inner.current.load_full();
        let mut next = (*base).clone();
        let wv = base.version + 1;
        let cap = self.inner.segment_capacity;
        let schema = &self.inner.schema;
        for vt in schema.vertex_type_ids() {
            let pk_col = schema.pk_index(vt);
            let data = &mut next.vertices[vt as usize];
            let base_idx = data.insert_v.len() as u64;
            for i in 0..g.vertex_counts[vt as usize] as usize {
                let key = g.vertex_columns[vt as usize][pk_col].get(i);
                if data.pk.get(&key).is_some() {
                    return Err(StoreError::DuplicatePk { vtype: schema.vertex_type(vt).name.clone(), pk: key.to_string() });
                }
                data.pk.insert(key, base_idx + i as u64);
                data.insert_v.push(wv);
                for (p, col) in g.vertex_columns[vt as usize].iter().enumerate() {
                    data.props[p].push(PropCell::new(wv, col.get(i)));
                }
            }
        }
        for et in schema.edge_type_ids() {
            let (src_t, dst_t) = schema.edge_endpoints(et);
            let src_base = base.vertices[src_t as usize].insert_v.len() as u64;
            let dst_base = base.vertices[dst_t as usize].insert_v.len() as u64;
            let edges = &g.edges[et as usize];
            let n_src = next.vertices[src_t as usize].insert_v.len();
            let n_dst = next.vertices[dst_t as usize].insert_v.len();
            let data = &mut next.edges[et as usize];
            grow_chains(&mut data.out_chains, n_src);
            grow_chains(&mut data.in_chains, n_dst);
            for i in 0..edges.len() {
                let (s, d) = (src_base + edges.src[i], dst_base + edges.dst[i]);
                let props = edges.columns.iter().map(|c| c.get(i)).collect();
                push_edge(data, s, d, props, wv, cap);
            }
        }
        next.version = wv;
        Ok(self.publish(next))
    }

    /// Drops adjacency entries deleted at or before `horizon`.
    pub fn compact(&self, horizon: u64) -> Result<CompactStats, StoreError> {
        let _guard = self.inner.writer.lock();
        let committed = self.committed_version();
        if horizon > committed {
            return Err(StoreError::HorizonTooNew { horizon, limit: committed });
        }
        if let Some((&oldest, _)) = self.inner.open_snapshots.lock().iter().next() {
            if oldest < horizon {
                return Err(StoreError::HorizonTooNew { horizon, limit: oldest });
            }
        }
        let base = self.inner.current.load_full();
        let mut next = (*base).clone();
        let cap = self.inner.segment_capacity;
        let mut dropped = 0u64;
        for data in &mut next.edges {
            dropped += compact_chains(&mut data.out_chains, horizon, cap);
            compact_chains(&mut data.in_chains, horizon, cap);
        }
        self.inner.oldest_readable.fetch_max(horizon, Ordering::AcqRel);
        self.inner.current.store(Arc::new(next));
        Ok(CompactStats { entries_dropped: dropped })
    }

    pub fn snapshot(&self) -> MvccSnapshot {
        let graph = self.inner.current.load_full();
        let version = graph.version;
        MvccSnapshot::open(self.inner.clone(), graph, version)
    }

    pub fn snapshot_at_version(&self, version: u64) -> Result<MvccSnapshot> {
        let graph = self.inner.current.load_full();
        if version > graph.version || version < self.inner.oldest_readable.load(Ordering::Acquire) {
            return Err(RetrievalError::UnknownVersion(version));
        }
        Ok(MvccSnapshot::open(self.inner.clone(), graph, version))
    }
}

fn grow_chains(chains: &mut PagedVec<SegmentChain>, n: usize) {
    while chains.len() < n {
        chains.push(SegmentChain::default());
    }
}

fn push_edge(data: &mut EdgeData, s: u64, d: u64, props: Vec<Value>, wv: u64, cap: usize) -> u64 {
    let row = data.src.len() as u64;
    data.src.push(s);
    data.dst.push(d);
    for (p, value) in props.into_iter().enumerate() {
        data.props[p].push(PropCell::new(wv, value));
    }
    let entry = AdjEntry { neighbor: d, row, insert_v: wv, delete_v: LIVE };
    data.out_chains.get_mut(s as usize).append(entry, cap);
    let entry = AdjEntry { neighbor: s, ..entry };
    data.in_chains.get_mut(d as usize).append(entry, cap);
    row
}

fn compact_chains(chains: &mut PagedVec<SegmentChain>, horizon: u64, cap: usize) -> u64 {
    let mut dropped = 0;
    for i in 0..chains.len() {
        let chain = chains.get(i);
        let dead = chain.entries().filter(|e| e.delete_v <= horizon).count() as u64;
        if dead == 0 {
            continue;
        }
        dropped += dead;
        let kept: Vec<AdjEntry> = chain.entries().filter(|e| e.delete_v > horizon).copied().collect();
        let mut rebuilt = SegmentChain::default();
        for e in kept {
            rebuilt.append(e, cap);
        }
        *chains.get_mut(i) = rebuilt;
    }
    dropped
}

impl WriteBatch<'_> {
    pub fn push(&mut self, m: Mutation) -> &mut Self {
        self.mutations.push(m);
        self
    }

    pub fn insert_vertex(&mut self, vtype: &str, props: Vec<(&str, Value)>) -> &mut Self {
        self.push(Mutation::InsertVertex {
            vtype: vtype.to_string(),
            props: props.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        })
    }

    pub fn insert_edge(&mut self, etype: &str, src: impl Into<Value>, dst: impl Into<Value>, props: Vec<(&str, Value)>) -> &mut Self {
        self.push(Mutation::InsertEdge {
            etype: etype.to_string(),
            src: src.into(),
            dst: dst.into(),
            props: props.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        })
    }

    pub fn delete_edge(&mut self, etype: &str, src: impl Into<Value>, dst: impl Into<Value>, ordinal: usize) -> &mut Self {
        self.push(Mutation::DeleteEdge { etype: etype.to_string(), src: src.into(), dst: dst.into(), ordinal })
    }

    pub fn set_vertex_prop(&mut self, vtype: &str, pk: impl Into<Value>, prop: &str, value: impl Into<Value>) -> &mut Self {
        self.push(Mutation::SetVertexProp {
            vtype: vtype.to_string(),
            pk: pk.into(),
            prop: prop.to_string(),
            value: value.into(),
        })
    }

    pub fn set_edge_prop(
        &mut self,
        etype: &str,
        src: impl Into<Value>,
        dst: impl Into<Value>,
        ordinal: usize,
        prop: &str,
        value: impl Into<Value>,
    ) -> &mut Self {
        self.push(Mutation::SetEdgeProp {
            etype: etype.to_string(),
            src: src.into(),
            dst: dst.into(),
            ordinal,
            prop: prop.to_string(),
            value: value.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.mutations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mutations.is_empty()
    }

    /// Publishes every mutation at `committed + 1`, or none of them.
    pub fn commit(self) -> Result<u64, StoreError> {
        let inner = &self.store.inner;
        let base = inner.current.load_full();
        let mut next = (*base).clone();
        let wv = base.version + 1;
        let mut applier = Applier { schema: &inner.schema, graph: &mut next, wv, cap: inner.segment_capacity };
        for m in &self.mutations {
            applier.apply(m)?;
        }
        next.version = wv;
        Ok(self.store.publish(next))
    }
}

struct Applier<'a> {
    schema: &'a PropertyGraphSchema,
    graph: &'a mut VersionedGraph,
    wv: u64,
    cap: usize,
}

impl Applier<'_> {
    fn vtype(&self, name: &str) -> Result<TypeId, StoreError> {
        self.schema
            .vertex_type_id(name)
            .ok_or_else(|| StoreError::SchemaMismatch(format!("unknown vertex type '{name}'")))
    }

    fn etype(&self, name: &str) -> Result<TypeId, StoreError> {
        self.schema
            .edge_type_id(name)
            .ok_or_else(|| StoreError::SchemaMismatch(format!("unknown edge type '{name}'")))
    }

    fn check_type(&self, expected: &crate::model::DataType, value: &Value, what: &str) -> Result<Value, StoreError> {
        use crate::model::DataType;
        match (expected, value) {
            (_, Value::Null) => Ok(Value::Null),
            (DataType::Float64, Value::Int64(i)) => Ok(Value::Float64(*i as f64)),
            _ if &value.dtype() == expected => Ok(value.clone()),
            _ => Err(StoreError::SchemaMismatch(format!("{what} expects {expected}, got {}", value.dtype()))),
        }
    }

    fn find_vertex(&self, vt: TypeId, key: &Value) -> Option<u64> {
        self.graph.vertices[vt as usize].pk.get(key)
    }

    /// Row of the `ordinal`-th live edge (type, src, dst) in src's out chain.
    fn find_edge(&self, et: TypeId, src: &Value, dst: &Value, ordinal: usize) -> Result<u64, StoreError> {
        let (st, dt) = self.schema.edge_endpoints(et);
        let s = self.find_vertex(st, src).ok_or_else(|| StoreError::UnknownVertex(src.to_string()))?;
        let d = self.find_vertex(dt, dst).ok_or_else(|| StoreError::UnknownVertex(dst.to_string()))?;
        let data = &self.graph.edges[et as usize];
        data.out_chains
            .get(s as usize)
            .entries()
            .filter(|e| e.neighbor == d && e.delete_v == LIVE)
            .nth(ordinal)
            .map(|e| e.row)
            .ok_or_else(|| {
                StoreError::UnknownEdge(format!("{}({src}->{dst})#{ordinal}", self.schema.edge_type(et).name))
            })
    }

    fn apply(&mut self, m: &Mutation) -> Result<(), StoreError> {
        let wv = self.wv;
        match m {
            Mutation::InsertVertex { vtype, props } => {
                let vt = self.vtype(vtype)?;
                let decl = self.schema.vertex_type(vt);
                let mut row = vec![Value::Null; decl.properties.len()];
                for (name, value) in props {
                    let p = self
                        .schema
                        .vertex_prop_index(vt, name)
                        .ok_or_else(|| StoreError::SchemaMismatch(format!("{vtype} has no property '{name}'")))?;
                    row[p] = self.check_type(&decl.properties[p].dtype, value, name)?;
                }
                let key = row[self.schema.pk_index(vt)].clone();
                if key.is_null() {
                    return Err(StoreError::SchemaMismatch(format!("{vtype} insert without primary key")));
                }
                if self.find_vertex(vt, &key).is_some() {
                    return Err(StoreError::DuplicatePk { vtype: vtype.clone(), pk: key.to_string() });
                }
                let data = &mut self.graph.vertices[vt as usize];
                let idx = data.insert_v.len() as u64;
                data.insert_v.push(wv);
                data.pk.insert(key, idx);
                for (p, value) in row.into_iter().enumerate() {
                    data.props[p].push(PropCell::new(wv, value));
                }
                for et in self.schema.edge_type_ids() {
                    let (st, dt) = self.schema.edge_endpoints(et);
                    if st == vt {
                        grow_chains(&mut self.graph.edges[et as usize].out_chains, idx as usize + 1);
                    }
                    if dt == vt {
                        grow_chains(&mut self.graph.edges[et as usize].in_chains, idx as usize + 1);
                    }
                }
            }
            Mutation::InsertEdge { etype, src, dst, props } => {
                let et = self.etype(etype)?;
                let (st, dt) = self.schema.edge_endpoints(et);
                let dangling = |k: &Value| StoreError::DanglingEdge { etype: etype.clone(), missing_pk: k.to_string() };
                let s = self.find_vertex(st, src).ok_or_else(|| dangling(src))?;
                let d = self.find_vertex(dt, dst).ok_or_else(|| dangling(dst))?;
                let decl = self.schema.edge_type(et);
                let mut row = vec![Value::Null; decl.properties.len()];
                for (name, value) in props {
                    let p = self
                        .schema
                        .edge_prop_index(et, name)
                        .ok_or_else(|| StoreError::SchemaMismatch(format!("{etype} has no property '{name}'")))?;
                    row[p] = self.check_type(&decl.properties[p].dtype, value, name)?;
                }
                let n_src = self.graph.vertices[st as usize].insert_v.len();
                let n_dst = self.graph.vertices[dt as usize].insert_v.len();
                let data = &mut self.graph.edges[et as usize];
                grow_chains(&mut data.out_chains, n_src);
                grow_chains(&mut data.in_chains, n_dst);
                push_edge(data, s, d, row, wv, self.cap);
            }
            Mutation::DeleteEdge { etype, src, dst, ordinal } => {
                let et = self.etype(etype)?;
                let row = self.find_edge(et, src, dst, *ordinal)?;
                let data = &mut self.graph.edges[et as usize];
                let (s, d) = (*data.src.get(row as usize), *data.dst.get(row as usize));
                // An edge inserted earlier in this batch never becomes visible.
                let mark = |entries: &mut Vec<AdjEntry>, pos: usize| {
                    if entries[pos].insert_v == wv {
                        entries.remove(pos);
                    } else {
                        entries[pos].delete_v = wv;
                    }
                };
                data.out_chains.get_mut(s as usize).update_row(row, mark);
                data.in_chains.get_mut(d as usize).update_row(row, mark);
            }
            Mutation::SetVertexProp { vtype, pk, prop, value } => {
                let vt = self.vtype(vtype)?;
                let p = self
                    .schema
                    .vertex_prop_index(vt, prop)
                    .ok_or_else(|| StoreError::SchemaMismatch(format!("{vtype} has no property '{prop}'")))?;
                if p == self.schema.pk_index(vt) {
                    return Err(StoreError::SchemaMismatch(format!("primary key {vtype}.{prop} is immutable")));
                }
                let value = self.check_type(&self.schema.vertex_type(vt).properties[p].dtype, value, prop)?;
                let idx = self.find_vertex(vt, pk).ok_or_else(|| StoreError::UnknownVertex(pk.to_string()))?;
                self.graph.vertices[vt as usize].props[p].get_mut(idx as usize).write(wv, value);
            }
            Mutation::SetEdgeProp { etype, src, dst, ordinal, prop, value } => {
                let et = self.etype(etype)?;
                let p = self
                    .schema
                    .edge_prop_index(et, prop)
                    .ok_or_else(|| StoreError::SchemaMismatch(format!("{etype} has no property '{prop}'")))?;
                let value = self.check_type(&self.schema.edge_type(et).properties[p].dtype, value, prop)?;
                let row = self.find_edge(et, src, dst, *ordinal)?;
                self.graph.edges[et as usize].props[p].get_mut(row as usize).write(wv, value);
            }
        }
        Ok(())
    }
}

/// Read view pinned to one version of an [`MvccStore`].
pub struct MvccSnapshot {
    inner: Arc<Inner>,
    graph: Arc<VersionedGraph>,
    version: u64,
    vertex_counts: Vec<u64>,
}

impl MvccSnapshot {
    fn open(inner: Arc<Inner>, graph: Arc<VersionedGraph>, version: u64) -> Self {
        *inner.open_snapshots.lock().entry(version).or_insert(0) += 1;
        let vertex_counts = graph
            .vertices
            .iter()
            .map(|vd| {
                let n = vd.insert_v.len();
                // insert versions are nondecreasing in idx
                let (mut lo, mut hi) = (0usize, n);
                while lo < hi {
                    let mid = (lo + hi) / 2;
                    if *vd.insert_v.get(mid) <= version {
                        lo = mid + 1;
                    } else {
                        hi = mid;
                    }
                }
                lo as u64
            })
            .collect();
        MvccSnapshot { inner, graph, version, vertex_counts }
    }

    fn chain(&self, v: VertexRef, dir: Direction, etype: TypeId) -> Option<&SegmentChain> {
        let (st, dt) = self.inner.schema.edge_endpoints(etype);
        let data = &self.graph.edges[etype as usize];
        let (chains, anchor_t) = match dir {
            Direction::Out => (&data.out_chains, st),
            Direction::In => (&data.in_chains, dt),
            Direction::Both => unreachable!("Both is split by the caller"),
        };
        if v.vtype != anchor_t || v.idx as usize >= chains.len() {
            return None;
        }
        Some(chains.get(v.idx as usize))
    }

    fn directed(&self, v: VertexRef, dir: Direction, etype: TypeId) -> AdjIter<'_> {
        let (st, dt) = self.inner.schema.edge_endpoints(etype);
        let nbr_t = if dir == Direction::Out { dt } else { st };
        let at = self.version;
        match self.chain(v, dir, etype) {
            None => Box::new(std::iter::empty()),
            Some(chain) => Box::new(chain.entries().filter(move |e| e.visible_at(at)).map(move |e| {
                let other = VertexRef::new(nbr_t, e.neighbor);
                let (src, dst) = if dir == Direction::Out { (v, other) } else { (other, v) };
                (other, EdgeRef { etype, src, dst, row: e.row })
            })),
        }
    }
}

impl Drop for MvccSnapshot {
    fn drop(&mut self) {
        let mut open = self.inner.open_snapshots.lock();
        if let Some(n) = open.get_mut(&self.version) {
            *n -= 1;
            if *n == 0 {
                open.remove(&self.version);
            }
        }
    }
}

impl GraphSnapshot for MvccSnapshot {
    fn schema(&self) -> &PropertyGraphSchema {
        &self.inner.schema
    }

    fn capabilities(&self) -> CapabilitySet {
        mvcc_capabilities()
    }

    fn version(&self) -> u64 {
        self.version
    }

    fn vertex_count(&self, vtype: TypeId) -> Result<u64> {
        check_vtype(&self.inner.schema, vtype)?;
        Ok(self.vertex_counts[vtype as usize])
    }

    fn adjacency(&self, v: VertexRef, dir: Direction, etype: TypeId) -> Result<AdjIter<'_>> {
        check_etype(&self.inner.schema, etype)?;
        check_vertex(self, v)?;
        Ok(match dir {
            Direction::Both => Box::new(
                self.directed(v, Direction::Out, etype).chain(self.directed(v, Direction::In, etype)),
            ),
            d => self.directed(v, d, etype),
        })
    }

    fn degree(&self, v: VertexRef, dir: Direction, etype: TypeId) -> Result<u64> {
        check_etype(&self.inner.schema, etype)?;
        check_vertex(self, v)?;
        let count = |d| {
            self.chain(v, d, etype)
                .map(|c| c.entries().filter(|e| e.visible_at(self.version)).count() as u64)
                .unwrap_or(0)
        };
        Ok(match dir {
            Direction::Both => count(Direction::Out) + count(Direction::In),
            d => count(d),
        })
    }

    fn vertex_property_at(&self, v: VertexRef, prop: usize) -> Result<Value> {
        check_vertex(self, v)?;
        let cells = self.graph.vertices[v.vtype as usize]
            .props
            .get(prop)
            .ok_or_else(|| RetrievalError::UnknownProperty(format!("#{prop}")))?;
        Ok(cells.get(v.idx as usize).read(self.version))
    }

    fn edge_property_at(&self, e: &EdgeRef, prop: usize) -> Result<Value> {
        check_etype(&self.inner.schema, e.etype)?;
        let cells = self.graph.edges[e.etype as usize]
            .props
            .get(prop)
            .ok_or_else(|| RetrievalError::UnknownProperty(format!("#{prop}")))?;
        if e.row as usize >= cells.len() {
            return Err(RetrievalError::IndexOutOfRange { index: e.row, size: cells.len() as u64 });
        }
        Ok(cells.get(e.row as usize).read(self.version))
    }

    fn lookup_by_pk(&self, vtype: TypeId, key: &Value) -> Result<VertexRef> {
        check_vtype(&self.inner.schema, vtype)?;
        match self.graph.vertices[vtype as usize].pk.get(key) {
            Some(idx) if idx < self.vertex_counts[vtype as usize] => Ok(VertexRef::new(vtype, idx)),
            _ => Err(RetrievalError::NotFound),
        }
    }

    fn shards(&self) -> Result<u32> {
        Ok(self.inner.partitions)
    }

    fn shard_of(&self, v: VertexRef) -> Result<u32> {
        check_vertex(self, v)?;
        Ok(crate::retrieval::partition_of(v, self.inner.partitions))
    }
}

pub fn mvcc_capabilities() -> CapabilitySet {
    let mut caps = CapabilitySet::all();
    caps.topology.adjacency_array = false;
    caps.predicate.vertex_filter_pushdown = false;
    caps
}

impl GraphStore for MvccStore {
    fn schema(&self) -> &PropertyGraphSchema {
        &self.inner.schema
    }

    fn capabilities(&self) -> CapabilitySet {
        mvcc_capabilities()
    }

    fn snapshot_latest(&self) -> Result<SnapshotRef> {
        Ok(Arc::new(self.snapshot()))
    }

    fn snapshot_at(&self, version: u64) -> Result<SnapshotRef> {
        Ok(Arc::new(self.snapshot_at_version(version)?))
    }

    fn kind(&self) -> &'static str {
        "mvcc"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::{lookup_by_pk, vertex_property};
    use crate::testkit::{g0_schema, g0_tables};

    fn g0_mvcc() -> MvccStore {
        MvccStore::from_tables(&g0_schema(), &g0_tables()).unwrap()
    }

    fn out_degree(snap: &dyn GraphSnapshot, buyer: &str, et: &str) -> u64 {
        let s = snap.schema();
        let bt = s.vertex_type_id("Buyer").unwrap();
        let v = lookup_by_pk(snap, bt, &Value::str(buyer)).unwrap();
        snap.degree(v, Direction::Out, s.edge_type_id(et).unwrap()).unwrap()
    }

    #[test]
    fn load_is_version_one() {
        let store = g0_mvcc();
        assert_eq!(store.committed_version(), 1);
        let snap = store.snapshot_latest().unwrap();
        assert_eq!(snap.version(), 1);
        assert_eq!(snap.vertex_count(0).unwrap(), 3);
        let v0 = store.snapshot_at(0).unwrap();
        assert_eq!(v0.vertex_count(0).unwrap(), 0);
        assert!(matches!(store.snapshot_at(99), Err(RetrievalError::UnknownVersion(99))));
    }

    #[test]
    fn empty_commit_bumps_version() {
        let store = g0_mvcc();
        assert_eq!(store.begin_batch().unwrap().commit().unwrap(), 2);
        let a = store.snapshot_at(1).unwrap();
        let b = store.snapshot_at(2).unwrap();
        assert_eq!(crate::retrieval::all_edges(a.as_ref()).unwrap(), crate::retrieval::all_edges(b.as_ref()).unwrap());
    }

    #[test]
    fn insert_edge_is_versioned() {
        let store = g0_mvcc();
        let mut b = store.begin_batch().unwrap();
        b.insert_edge("Buy", "A1", 2i64, vec![("date", Value::Int64(4))]);
        assert_eq!(b.commit().unwrap(), 2);
        assert_eq!(out_degree(store.snapshot_at(1).unwrap().as_ref(), "A1", "Buy"), 1);
        assert_eq!(out_degree(store.snapshot_at(2).unwrap().as_ref(), "A1", "Buy"), 2);
    }

    #[test]
    fn deleted_edge_visible_in_old_snapshot() {
        let store = g0_mvcc();
        let old = store.snapshot_latest().unwrap();
        let mut b = store.begin_batch().unwrap();
        b.delete_edge("Buy", "A1", 1i64, 0);
        b.commit().unwrap();
        assert_eq!(out_degree(old.as_ref(), "A1", "Buy"), 1);
        assert_eq!(out_degree(store.snapshot_latest().unwrap().as_ref(), "A1", "Buy"), 0);
        let item = store.schema().vertex_type_id("Item").unwrap();
        let buy = store.schema().edge_type_id("Buy").unwrap();
        let i1 = VertexRef::new(item, 0);
        assert_eq!(old.degree(i1, Direction::In, buy).unwrap(), 2);
        assert_eq!(store.snapshot_latest().unwrap().degree(i1, Direction::In, buy).unwrap(), 1);
    }

    #[test]
    fn property_history() {
        let store = g0_mvcc();
        for v in 2..=4 {
            store.begin_batch().unwrap().commit().unwrap();
            assert_eq!(store.committed_version(), v);
        }
        let mut b = store.begin_batch().unwrap();
        b.set_vertex_prop("Item", 1i64, "price", 120.0);
        assert_eq!(b.commit().unwrap(), 5);
        let i1 = VertexRef::new(1, 0);
        let at = |v| vertex_property(store.snapshot_at(v).unwrap().as_ref(), i1, "price").unwrap();
        assert_eq!(at(4), Value::Float64(100.0));
        assert_eq!(at(5), Value::Float64(120.0));
    }

    #[test]
    fn failed_batch_publishes_nothing() {
        let store = g0_mvcc();
        let mut b = store.begin_batch().unwrap();
        b.insert_edge("Buy", "A1", 2i64, vec![]);
        b.insert_edge("Buy", "ZZ", 2i64, vec![]);
        assert!(matches!(b.commit(), Err(StoreError::DanglingEdge { .. })));
        assert_eq!(store.committed_version(), 1);
        assert_eq!(out_degree(store.snapshot_latest().unwrap().as_ref(), "A1", "Buy"), 1);
        let mut b = store.begin_batch().unwrap();
        b.insert_vertex("Buyer", vec![("username", Value::str("A1"))]);
        assert!(matches!(b.commit(), Err(StoreError::DuplicatePk { .. })));
        let mut b = store.begin_batch().unwrap();
        b.set_vertex_prop("Buyer", "Nobody", "credits", 1i64);
        assert!(matches!(b.commit(), Err(StoreError::UnknownVertex(_))));
    }

    #[test]
    fn single_writer() {
        let store = g0_mvcc();
        let first = store.begin_batch().unwrap();
        assert!(matches!(store.begin_batch(), Err(StoreError::WriterBusy)));
        drop(first);
        assert!(store.begin_batch().is_ok());
    }

    #[test]
    fn insert_vertex_then_edge_in_one_batch() {
        let store = g0_mvcc();
        let mut b = store.begin_batch().unwrap();
        b.insert_vertex("Buyer", vec![("username", Value::str("D4")), ("credits", Value::Int64(1))]);
        b.insert_edge("Knows", "C3", "D4", vec![]);
        b.insert_edge("Buy", "D4", 1i64, vec![("date", Value::Int64(5))]);
        b.commit().unwrap();
        let snap = store.snapshot_latest().unwrap();
        assert_eq!(snap.vertex_count(0).unwrap(), 4);
        assert_eq!(out_degree(snap.as_ref(), "D4", "Buy"), 1);
        assert_eq!(out_degree(snap.as_ref(), "C3", "Knows"), 1);
        assert_eq!(store.snapshot_at(1).unwrap().vertex_count(0).unwrap(), 3);
    }

    #[test]
    fn compaction() {
        let store = g0_mvcc();
        assert_eq!(store.compact(1).unwrap().entries_dropped, 0);
        let mut b = store.begin_batch().unwrap();
        b.insert_edge("Knows", "C3", "A1", vec![]);
        b.commit().unwrap();
        let mut b = store.begin_batch().unwrap();
        b.delete_edge("Knows", "C3", "A1", 0);
        b.commit().unwrap();
        let before = crate::retrieval::all_edges(store.snapshot_latest().unwrap().as_ref()).unwrap();
        {
            let _old = store.snapshot_at(2).unwrap();
            assert!(matches!(store.compact(3), Err(StoreError::HorizonTooNew { .. })));
        }
        assert_eq!(store.compact(3).unwrap().entries_dropped, 1);
        let after = crate::retrieval::all_edges(store.snapshot_latest().unwrap().as_ref()).unwrap();
        assert_eq!(before, after);
        assert!(matches!(store.snapshot_at(2), Err(RetrievalError::UnknownVersion(2))));
        assert!(matches!(store.compact(9), Err(StoreError::HorizonTooNew { .. })));
    }

    #[test]
    fn same_batch_insert_delete_leaves_no_entry() {
        let store = g0_mvcc();
        let mut b = store.begin_batch().unwrap();
        b.insert_edge("Knows", "C3", "A1", vec![]);
        b.delete_edge("Knows", "C3", "A1", 0);
        b.commit().unwrap();
        assert_eq!(out_degree(store.snapshot_latest().unwrap().as_ref(), "C3", "Knows"), 0);
    }

    #[test]
    fn segments_roll_over() {
        let store = MvccStore::with_segment_capacity(g0_schema(), 2).unwrap();
        let mut b = store.begin_batch().unwrap();
        b.insert_vertex("Buyer", vec![("username", Value::str("x"))]);
        for i in 0..5 {
            b.insert_vertex("Item", vec![("id", Value::Int64(i))]);
            b.insert_edge("Buy", "x", i, vec![]);
        }
        b.commit().unwrap();
        let snap = store.snapshot_latest().unwrap();
        let nbrs: Vec<u64> = snap.adjacency(VertexRef::new(0, 0), Direction::Out, 1).unwrap().map(|(v, _)| v.idx).collect();
        assert_eq!(nbrs, vec![0, 1, 2, 3, 4]);
        assert!(vertex_property(snap.as_ref(), VertexRef::new(1, 3), "price").unwrap().is_null());
    }
}
