//! Capability-negotiated retrieval interface between engines and stores.
//!
//! Every engine in this crate reads graph data exclusively through
//! [`GraphSnapshot`]. A store advertises what it can do with a
//! [`CapabilitySet`]; operations whose flag is absent fail with
//! [`RetrievalError::UnsupportedCapability`], and engines fall back to the
//! emulated paths in this module.

use std::ops::{Deref, Range};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{CmpOp, Direction, EdgeRef, PropertyGraphSchema, TypeId, Value, VertexRef};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyCaps {
    pub vertex_list_array: bool,
    pub adjacency_iter: bool,
    pub adjacency_array: bool,
    pub degree: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyCaps {
    pub vertex_props: bool,
    pub edge_props: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionCaps {
    pub shard_enumeration: bool,
    pub vertex_to_shard: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexCaps {
    pub pk_lookup: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateCaps {
    pub vertex_filter_pushdown: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommonCaps {
    pub snapshot_versions: bool,
}

/// What a store can do, grouped by retrieval category.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapabilitySet {
    pub topology: TopologyCaps,
    pub property: PropertyCaps,
    pub partition: PartitionCaps,
    pub index: IndexCaps,
    pub predicate: PredicateCaps,
    pub common: CommonCaps,
}

impl CapabilitySet {
    pub fn all() -> Self {
        CapabilitySet {
            topology: TopologyCaps {
                vertex_list_array: true,
                adjacency_iter: true,
                adjacency_array: true,
                degree: true,
            },
            property: PropertyCaps { vertex_props: true, edge_props: true },
            partition: PartitionCaps { shard_enumeration: true, vertex_to_shard: true },
            index: IndexCaps { pk_lookup: true },
            predicate: PredicateCaps { vertex_filter_pushdown: true },
            common: CommonCaps { snapshot_versions: true },
        }
    }

    /// adjacency_array implies adjacency_iter.
    pub fn is_consistent(&self) -> bool {
        !self.topology.adjacency_array || self.topology.adjacency_iter
    }

    /// Named flags in a fixed order, for reports and capability checks.
    pub fn flags(&self) -> [(&'static str, bool); 11] {
        [
            ("vertex_list_array", self.topology.vertex_list_array),
            ("adjacency_iter", self.topology.adjacency_iter),
            ("adjacency_array", self.topology.adjacency_array),
            ("degree", self.topology.degree),
            ("vertex_props", self.property.vertex_props),
            ("edge_props", self.property.edge_props),
            ("shard_enumeration", self.partition.shard_enumeration),
            ("vertex_to_shard", self.partition.vertex_to_shard),
            ("pk_lookup", self.index.pk_lookup),
            ("vertex_filter_pushdown", self.predicate.vertex_filter_pushdown),
            ("snapshot_versions", self.common.snapshot_versions),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum RetrievalError {
    #[error("unsupported capability: {0}")]
    UnsupportedCapability(&'static str),
    #[error("unknown type: {0}")]
    UnknownType(String),
    #[error("unknown property: {0}")]
    UnknownProperty(String),
    #[error("unknown version: {0}")]
    UnknownVersion(u64),
    #[error("index {index} out of range for list of size {size}")]
    IndexOutOfRange { index: u64, size: u64 },
    #[error("invalid vertex {0:?}")]
    InvalidVertex(VertexRef),
    #[error("not found")]
    NotFound,
    #[error("storage failure: {0}")]
    Storage(String),
}

pub type Result<T, E = RetrievalError> = std::result::Result<T, E>;

/// A slice that is either borrowed from the store or shares a decoded chunk.
#[derive(Clone, Debug)]
pub enum SharedSlice<'a, T> {
    Borrowed(&'a [T]),
    Chunk(Arc<Vec<T>>, Range<usize>),
}

impl<T> Deref for SharedSlice<'_, T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        match self {
            SharedSlice::Borrowed(s) => s,
            SharedSlice::Chunk(c, r) => &c[r.clone()],
        }
    }
}

/// Array-like adjacency list for one direction of one edge type.
#[derive(Clone, Debug)]
pub struct AdjArray<'a> {
    pub anchor: VertexRef,
    pub etype: TypeId,
    pub direction: Direction,
    pub neighbor_type: TypeId,
    pub neighbors: SharedSlice<'a, u64>,
    pub rows: SharedSlice<'a, u64>,
}

impl<'a> AdjArray<'a> {
    pub fn empty(anchor: VertexRef, etype: TypeId, direction: Direction) -> Self {
        AdjArray {
            anchor,
            etype,
            direction,
            neighbor_type: 0,
            neighbors: SharedSlice::Borrowed(&[]),
            rows: SharedSlice::Borrowed(&[]),
        }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbor(&self, i: usize) -> VertexRef {
        VertexRef::new(self.neighbor_type, self.neighbors[i])
    }

    pub fn edge(&self, i: usize) -> EdgeRef {
        let other = self.neighbor(i);
        let (src, dst) = match self.direction {
            Direction::In => (other, self.anchor),
            _ => (self.anchor, other),
        };
        EdgeRef { etype: self.etype, src, dst, row: self.rows[i] }
    }

    pub fn iter(&self) -> impl Iterator<Item = (VertexRef, EdgeRef)> + '_ {
        (0..self.len()).map(move |i| (self.neighbor(i), self.edge(i)))
    }
}

/// Iterator over `(neighbor, edge)` pairs of one adjacency list.
pub type AdjIter<'a> = Box<dyn Iterator<Item = (VertexRef, EdgeRef)> + Send + 'a>;

/// Handle over the vertices of one type in a snapshot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VertexListHandle {
    pub vtype: TypeId,
    pub size: u64,
    /// Explicit members for filtered lists; `None` means the dense range `0..size`.
    members: Option<Arc<[u64]>>,
}

impl VertexListHandle {
    pub fn dense(vtype: TypeId, size: u64) -> Self {
        VertexListHandle { vtype, size, members: None }
    }

    pub fn from_members(vtype: TypeId, members: Vec<u64>) -> Self {
        VertexListHandle { vtype, size: members.len() as u64, members: Some(members.into()) }
    }

    pub fn is_dense(&self) -> bool {
        self.members.is_none()
    }

    pub fn vertex_at(&self, i: u64) -> Result<VertexRef> {
        if i >= self.size {
            return Err(RetrievalError::IndexOutOfRange { index: i, size: self.size });
        }
        let idx = match &self.members {
            Some(m) => m[i as usize],
            None => i,
        };
        Ok(VertexRef::new(self.vtype, idx))
    }

    pub fn iter(&self) -> impl Iterator<Item = VertexRef> + '_ {
        (0..self.size).map(move |i| match &self.members {
            Some(m) => VertexRef::new(self.vtype, m[i as usize]),
            None => VertexRef::new(self.vtype, i),
        })
    }

    pub fn indices(&self) -> Vec<u64> {
        self.iter().map(|v| v.idx).collect()
    }
}

/// One `(property, comparison, constant)` factor of a pushdown predicate.
#[derive(Clone, Debug, PartialEq)]
pub struct PropertyCondition {
    pub prop: String,
    pub op: CmpOp,
    pub value: Value,
}

/// Conjunction of property conditions; the empty conjunction is always true.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PropertyPredicate {
    pub conditions: Vec<PropertyCondition>,
}

impl PropertyPredicate {
    pub fn always() -> Self {
        PropertyPredicate::default()
    }

    pub fn and(mut self, prop: &str, op: CmpOp, value: impl Into<Value>) -> Self {
        self.conditions.push(PropertyCondition { prop: prop.to_string(), op, value: value.into() });
        self
    }

    pub fn is_always_true(&self) -> bool {
        self.conditions.is_empty()
    }

    /// Resolves property names against a vertex type.
    pub fn resolve(&self, schema: &PropertyGraphSchema, vtype: TypeId) -> Result<Vec<(usize, CmpOp, Value)>> {
        self.conditions
            .iter()
            .map(|c| {
                schema
                    .vertex_prop_index(vtype, &c.prop)
                    .map(|i| (i, c.op, c.value.clone()))
                    .ok_or_else(|| RetrievalError::UnknownProperty(c.prop.clone()))
            })
            .collect()
    }
}

/// Read view over a consistent graph state.
///
/// All methods are safe to call concurrently. Property accessors take
/// resolved property ordinals; the name-based convenience functions live
/// in this module.
pub trait GraphSnapshot: Send + Sync {
    fn schema(&self) -> &PropertyGraphSchema;

    fn capabilities(&self) -> CapabilitySet;

    fn version(&self) -> u64;

    fn vertex_count(&self, vtype: TypeId) -> Result<u64>;

    /// Iterator adjacency; `Both` yields the Out list followed by the In list.
    fn adjacency(&self, v: VertexRef, dir: Direction, etype: TypeId) -> Result<AdjIter<'_>>;

    /// Array adjacency for `Out` or `In`.
    fn adjacency_array(&self, v: VertexRef, dir: Direction, etype: TypeId) -> Result<AdjArray<'_>> {
        let _ = (v, dir, etype);
        Err(RetrievalError::UnsupportedCapability("adjacency_array"))
    }

    fn degree(&self, v: VertexRef, dir: Direction, etype: TypeId) -> Result<u64>;

    fn vertex_property_at(&self, v: VertexRef, prop: usize) -> Result<Value>;

    fn edge_property_at(&self, e: &EdgeRef, prop: usize) -> Result<Value>;

    fn lookup_by_pk(&self, vtype: TypeId, key: &Value) -> Result<VertexRef> {
        let _ = (vtype, key);
        Err(RetrievalError::UnsupportedCapability("pk_lookup"))
    }

    fn shards(&self) -> Result<u32> {
        Err(RetrievalError::UnsupportedCapability("shard_enumeration"))
    }

    fn shard_of(&self, v: VertexRef) -> Result<u32> {
        let _ = v;
        Err(RetrievalError::UnsupportedCapability("vertex_to_shard"))
    }

    /// Store-side predicate evaluation; returns matching indices in order.
    fn filtered_vertices(&self, vtype: TypeId, pred: &PropertyPredicate) -> Result<Vec<u64>> {
        let _ = (vtype, pred);
        Err(RetrievalError::UnsupportedCapability("vertex_filter_pushdown"))
    }
}

/// Shared read view; stays valid and unchanged for its whole lifetime.
pub type SnapshotRef = Arc<dyn GraphSnapshot>;

/// A source of snapshots.
pub trait GraphStore: Send + Sync {
    fn schema(&self) -> &PropertyGraphSchema;

    fn capabilities(&self) -> CapabilitySet;

    fn snapshot_latest(&self) -> Result<SnapshotRef>;

    fn snapshot_at(&self, version: u64) -> Result<SnapshotRef> {
        let _ = version;
        Err(RetrievalError::UnsupportedCapability("snapshot_versions"))
    }

    /// Short name of the backend kind.
    fn kind(&self) -> &'static str;
}

/// Validates a vertex reference against a snapshot.
pub fn check_vertex(snap: &dyn GraphSnapshot, v: VertexRef) -> Result<()> {
    if (v.vtype as usize) >= snap.schema().vertex_type_count() {
        return Err(RetrievalError::InvalidVertex(v));
    }
    if v.idx >= snap.vertex_count(v.vtype)? {
        return Err(RetrievalError::InvalidVertex(v));
    }
    Ok(())
}

pub fn check_vtype(schema: &PropertyGraphSchema, vtype: TypeId) -> Result<()> {
    if (vtype as usize) < schema.vertex_type_count() {
        Ok(())
    } else {
        Err(RetrievalError::UnknownType(format!("vertex type #{vtype}")))
    }
}

pub fn check_etype(schema: &PropertyGraphSchema, etype: TypeId) -> Result<()> {
    if (etype as usize) < schema.edge_type_count() {
        Ok(())
    } else {
        Err(RetrievalError::UnknownType(format!("edge type #{etype}")))
    }
}

pub fn vertex_list(snap: &dyn GraphSnapshot, vtype: TypeId) -> Result<VertexListHandle> {
    check_vtype(snap.schema(), vtype)?;
    Ok(VertexListHandle::dense(vtype, snap.vertex_count(vtype)?))
}

pub fn vertex_property(snap: &dyn GraphSnapshot, v: VertexRef, prop: &str) -> Result<Value> {
    check_vtype(snap.schema(), v.vtype)?;
    let idx = snap
        .schema()
        .vertex_prop_index(v.vtype, prop)
        .ok_or_else(|| RetrievalError::UnknownProperty(prop.to_string()))?;
    snap.vertex_property_at(v, idx)
}

pub fn edge_property(snap: &dyn GraphSnapshot, e: &EdgeRef, prop: &str) -> Result<Value> {
    check_etype(snap.schema(), e.etype)?;
    let idx = snap
        .schema()
        .edge_prop_index(e.etype, prop)
        .ok_or_else(|| RetrievalError::UnknownProperty(prop.to_string()))?;
    snap.edge_property_at(e, idx)
}

/// Primary-key index lookup; requires `pk_lookup`.
pub fn lookup_by_pk(snap: &dyn GraphSnapshot, vtype: TypeId, key: &Value) -> Result<VertexRef> {
    if !snap.capabilities().index.pk_lookup {
        return Err(RetrievalError::UnsupportedCapability("pk_lookup"));
    }
    check_vtype(snap.schema(), vtype)?;
    snap.lookup_by_pk(vtype, key)
}

/// Pushed-down filtered scan; requires `vertex_filter_pushdown`.
pub fn filtered_vertex_list(
    snap: &dyn GraphSnapshot,
    vtype: TypeId,
    pred: &PropertyPredicate,
) -> Result<VertexListHandle> {
    check_vtype(snap.schema(), vtype)?;
    Ok(VertexListHandle::from_members(vtype, snap.filtered_vertices(vtype, pred)?))
}

/// Engine-side fallback: full scan plus predicate evaluation.
pub fn emulate_filtered_scan(
    snap: &dyn GraphSnapshot,
    vtype: TypeId,
    pred: &PropertyPredicate,
) -> Result<VertexListHandle> {
    check_vtype(snap.schema(), vtype)?;
    let conds = pred.resolve(snap.schema(), vtype)?;
    let n = snap.vertex_count(vtype)?;
    let mut members = Vec::new();
    'outer: for idx in 0..n {
        let v = VertexRef::new(vtype, idx);
        for (prop, op, constant) in &conds {
            let value = snap.vertex_property_at(v, *prop)?;
            if op.apply(&value, constant) != Some(true) {
                continue 'outer;
            }
        }
        members.push(idx);
    }
    Ok(VertexListHandle::from_members(vtype, members))
}

/// Uses pushdown when the store offers it, the emulated scan otherwise.
pub fn scan_with_predicate(
    snap: &dyn GraphSnapshot,
    vtype: TypeId,
    pred: &PropertyPredicate,
) -> Result<VertexListHandle> {
    if snap.capabilities().predicate.vertex_filter_pushdown {
        filtered_vertex_list(snap, vtype, pred)
    } else {
        emulate_filtered_scan(snap, vtype, pred)
    }
}

/// Evaluates a resolved predicate against values fetched by `get`.
pub fn predicate_holds(
    conds: &[(usize, CmpOp, Value)],
    mut get: impl FnMut(usize) -> Result<Value>,
) -> Result<bool> {
    for (prop, op, constant) in conds {
        if op.apply(&get(*prop)?, constant) != Some(true) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Partition of a vertex under `shards` in-process shards.
pub fn partition_of(v: VertexRef, shards: u32) -> u32 {
    (v.idx % shards.max(1) as u64) as u32
}

/// Adjacency helper for `Both` built from the two single-direction lists.
pub fn both_from_directions<'a>(
    snap: &'a dyn GraphSnapshot,
    v: VertexRef,
    etype: TypeId,
) -> Result<AdjIter<'a>> {
    let out = snap.adjacency(v, Direction::Out, etype)?;
    let inn = snap.adjacency(v, Direction::In, etype)?;
    Ok(Box::new(out.chain(inn)))
}

/// Every edge of every type, enumerated through Out adjacency.
pub fn all_edges(snap: &dyn GraphSnapshot) -> Result<Vec<EdgeRef>> {
    let schema = snap.schema();
    let mut edges = Vec::new();
    for et in schema.edge_type_ids() {
        let (src_t, _) = schema.edge_endpoints(et);
        for idx in 0..snap.vertex_count(src_t)? {
            edges.extend(snap.adjacency(VertexRef::new(src_t, idx), Direction::Out, et)?.map(|(_, e)| e));
        }
    }
    Ok(edges)
}
