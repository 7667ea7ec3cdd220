//! In-memory immutable store: CSR and CSC per edge type, columnar
//! properties and a primary-key index.

use std::collections::HashMap;
use std::sync::Arc;

use super::column::{Column, ColumnData};
use super::tables::{resolve, GraphTables, ResolvedGraph};
use super::StoreError;
use crate::model::{Direction, EdgeRef, PropertyGraphSchema, TypeId, Value, VertexRef};
use crate::retrieval::{
    check_etype, check_vertex, check_vtype, AdjArray, AdjIter, CapabilitySet, GraphSnapshot,
    GraphStore, PropertyPredicate, Result, RetrievalError, SharedSlice, SnapshotRef,
};

/// Compressed adjacency for one direction of one edge type.
#[derive(Clone, Debug, Default)]
pub struct Csr {
    pub offsets: Vec<u64>,
    pub targets: Vec<u64>,
    pub rows: Vec<u64>,
}

impl Csr {
    /// Builds from (anchor, neighbor, row) triples; each anchor segment is
    /// sorted by (neighbor, row).
    pub(crate) fn build(anchor_count: u64, anchors: &[u64], neighbors: &[u64], rows: &[u64]) -> Csr {
        let mut offsets = vec![0u64; anchor_count as usize + 1];
        for &a in anchors {
            offsets[a as usize + 1] += 1;
        }
        for i in 1..offsets.len() {
            offsets[i] += offsets[i - 1];
        }
        let mut order: Vec<usize> = (0..anchors.len()).collect();
        order.sort_unstable_by_key(|&i| (anchors[i], neighbors[i], rows[i]));
        Csr {
            offsets,
            targets: order.iter().map(|&i| neighbors[i]).collect(),
            rows: order.iter().map(|&i| rows[i]).collect(),
        }
    }

    pub fn segment(&self, idx: u64) -> std::ops::Range<usize> {
        self.offsets[idx as usize] as usize..self.offsets[idx as usize + 1] as usize
    }

    pub fn degree(&self, idx: u64) -> u64 {
        self.offsets[idx as usize + 1] - self.offsets[idx as usize]
    }

    pub fn edge_count(&self) -> u64 {
        *self.offsets.last().unwrap_or(&0)
    }
}

pub struct ImmutableGraph {
    schema: PropertyGraphSchema,
    vertex_counts: Vec<u64>,
    vertex_columns: Vec<Vec<Column>>,
    pk_index: Vec<HashMap<Value, u64>>,
    csr: Vec<Csr>,
    csc: Vec<Csr>,
    edge_columns: Vec<Vec<Column>>,
    partitions: u32,
}

/// Immutable store handle; cloning is cheap and every snapshot is the same
/// version 0 view.
#[derive(Clone)]
pub struct ImmutableStore {
    graph: Arc<ImmutableGraph>,
}

pub fn build_immutable(schema: &PropertyGraphSchema, tables: &GraphTables) -> Result<ImmutableStore, StoreError> {
    Ok(ImmutableStore::from_resolved(resolve(schema, tables)?))
}

impl ImmutableStore {
    pub fn from_resolved(g: ResolvedGraph) -> Self {
        let mut csr = Vec::with_capacity(g.edges.len());
        let mut csc = Vec::with_capacity(g.edges.len());
        for (et, edges) in g.edges.iter().enumerate() {
            let (src_t, dst_t) = g.schema.edge_endpoints(et as TypeId);
            let rows: Vec<u64> = (0..edges.len() as u64).collect();
            csr.push(Csr::build(g.vertex_counts[src_t as usize], &edges.src, &edges.dst, &rows));
            csc.push(Csr::build(g.vertex_counts[dst_t as usize], &edges.dst, &edges.src, &rows));
        }
        let edge_columns = g.edges.into_iter().map(|e| e.columns).collect();
        ImmutableStore {
            graph: Arc::new(ImmutableGraph {
                schema: g.schema,
                vertex_counts: g.vertex_counts,
                vertex_columns: g.vertex_columns,
                pk_index: g.pk_index,
                csr,
                csc,
                edge_columns,
                partitions: 1,
            }),
        }
    }

    /// Number of shards reported through the partition capability.
    pub fn with_partitions(self, partitions: u32) -> Self {
        let mut g = Arc::try_unwrap(self.graph).unwrap_or_else(|arc| (*arc).clone_shallow());
        g.partitions = partitions.max(1);
        ImmutableStore { graph: Arc::new(g) }
    }

    pub fn graph(&self) -> &ImmutableGraph {
        &self.graph
    }

    pub fn snapshot(&self) -> SnapshotRef {
        self.graph.clone()
    }
}

impl ImmutableGraph {
    fn clone_shallow(&self) -> ImmutableGraph {
        ImmutableGraph {
            schema: self.schema.clone(),
            vertex_counts: self.vertex_counts.clone(),
            vertex_columns: self.vertex_columns.clone(),
            pk_index: self.pk_index.clone(),
            csr: self.csr.clone(),
            csc: self.csc.clone(),
            edge_columns: self.edge_columns.clone(),
            partitions: self.partitions,
        }
    }

    pub fn csr(&self, etype: TypeId) -> &Csr {
        &self.csr[etype as usize]
    }

    pub fn csc(&self, etype: TypeId) -> &Csr {
        &self.csc[etype as usize]
    }

    pub fn vertex_column(&self, vtype: TypeId, prop: usize) -> &Column {
        &self.vertex_columns[vtype as usize][prop]
    }

    pub fn edge_column(&self, etype: TypeId, prop: usize) -> &Column {
        &self.edge_columns[etype as usize][prop]
    }

    pub fn total_edges(&self) -> u64 {
        self.csr.iter().map(Csr::edge_count).sum()
    }

    fn array(&self, v: VertexRef, dir: Direction, etype: TypeId) -> Result<AdjArray<'_>> {
        check_etype(&self.schema, etype)?;
        check_vertex(self, v)?;
        let (src_t, dst_t) = self.schema.edge_endpoints(etype);
        let (csr, anchor_t, nbr_t) = match dir {
            Direction::Out => (&self.csr[etype as usize], src_t, dst_t),
            Direction::In => (&self.csc[etype as usize], dst_t, src_t),
            Direction::Both => return Err(RetrievalError::UnsupportedCapability("adjacency_array(Both)")),
        };
        if v.vtype != anchor_t {
            return Ok(AdjArray::empty(v, etype, dir));
        }
        let seg = csr.segment(v.idx);
        Ok(AdjArray {
            anchor: v,
            etype,
            direction: dir,
            neighbor_type: nbr_t,
            neighbors: SharedSlice::Borrowed(&csr.targets[seg.clone()]),
            rows: SharedSlice::Borrowed(&csr.rows[seg]),
        })
    }
}

impl GraphSnapshot for ImmutableGraph {
    fn schema(&self) -> &PropertyGraphSchema {
        &self.schema
    }

    fn capabilities(&self) -> CapabilitySet {
        let mut caps = CapabilitySet::all();
        caps.common.snapshot_versions = false;
        caps
    }

    fn version(&self) -> u64 {
        0
    }

    fn vertex_count(&self, vtype: TypeId) -> Result<u64> {
        check_vtype(&self.schema, vtype)?;
        Ok(self.vertex_counts[vtype as usize])
    }

    fn adjacency(&self, v: VertexRef, dir: Direction, etype: TypeId) -> Result<AdjIter<'_>> {
        match dir {
            Direction::Both => {
                let out = self.array(v, Direction::Out, etype)?;
                let inn = self.array(v, Direction::In, etype)?;
                Ok(Box::new(
                    (0..out.len())
                        .map(move |i| (out.neighbor(i), out.edge(i)))
                        .chain((0..inn.len()).map(move |i| (inn.neighbor(i), inn.edge(i)))),
                ))
            }
            _ => {
                let arr = self.array(v, dir, etype)?;
                Ok(Box::new((0..arr.len()).map(move |i| (arr.neighbor(i), arr.edge(i)))))
            }
        }
    }

    fn adjacency_array(&self, v: VertexRef, dir: Direction, etype: TypeId) -> Result<AdjArray<'_>> {
        self.array(v, dir, etype)
    }

    fn degree(&self, v: VertexRef, dir: Direction, etype: TypeId) -> Result<u64> {
        check_etype(&self.schema, etype)?;
        check_vertex(self, v)?;
        let (src_t, dst_t) = self.schema.edge_endpoints(etype);
        let out = if v.vtype == src_t { self.csr[etype as usize].degree(v.idx) } else { 0 };
        let inn = if v.vtype == dst_t { self.csc[etype as usize].degree(v.idx) } else { 0 };
        Ok(match dir {
            Direction::Out => out,
            Direction::In => inn,
            Direction::Both => out + inn,
        })
    }

    fn vertex_property_at(&self, v: VertexRef, prop: usize) -> Result<Value> {
        check_vertex(self, v)?;
        let col = self.vertex_columns[v.vtype as usize]
            .get(prop)
            .ok_or_else(|| RetrievalError::UnknownProperty(format!("#{prop}")))?;
        Ok(col.get(v.idx as usize))
    }

    fn edge_property_at(&self, e: &EdgeRef, prop: usize) -> Result<Value> {
        check_etype(&self.schema, e.etype)?;
        let col = self.edge_columns[e.etype as usize]
            .get(prop)
            .ok_or_else(|| RetrievalError::UnknownProperty(format!("#{prop}")))?;
        if e.row as usize >= col.len() {
            return Err(RetrievalError::IndexOutOfRange { index: e.row, size: col.len() as u64 });
        }
        Ok(col.get(e.row as usize))
    }

    fn lookup_by_pk(&self, vtype: TypeId, key: &Value) -> Result<VertexRef> {
        check_vtype(&self.schema, vtype)?;
        self.pk_index[vtype as usize]
            .get(key)
            .map(|&idx| VertexRef::new(vtype, idx))
            .ok_or(RetrievalError::NotFound)
    }

    fn shards(&self) -> Result<u32> {
        Ok(self.partitions)
    }

    fn shard_of(&self, v: VertexRef) -> Result<u32> {
        check_vertex(self, v)?;
        Ok(crate::retrieval::partition_of(v, self.partitions))
    }

    fn filtered_vertices(&self, vtype: TypeId, pred: &PropertyPredicate) -> Result<Vec<u64>> {
        check_vtype(&self.schema, vtype)?;
        let conds = pred.resolve(&self.schema, vtype)?;
        let n = self.vertex_counts[vtype as usize] as usize;
        let mut keep = vec![true; n];
        for (prop, op, constant) in &conds {
            let col = &self.vertex_columns[vtype as usize][*prop];
            scan_column(col, *op, constant, &mut keep);
        }
        Ok(keep.iter().enumerate().filter(|(_, k)| **k).map(|(i, _)| i as u64).collect())
    }
}

/// Clears `keep[i]` for every row whose value fails `value op constant`.
pub(crate) fn scan_column(col: &Column, op: crate::model::CmpOp, constant: &Value, keep: &mut [bool]) {
    match (col.data(), constant) {
        (ColumnData::Int64(vals), Value::Int64(c)) if col.validity().is_none() => {
            for (k, v) in keep.iter_mut().zip(vals) {
                if *k {
                    *k = op.holds(v.cmp(c));
                }
            }
        }
        _ => {
            for (i, k) in keep.iter_mut().enumerate() {
                if *k {
                    *k = op.apply(&col.get(i), constant) == Some(true);
                }
            }
        }
    }
}

impl GraphStore for ImmutableStore {
    fn schema(&self) -> &PropertyGraphSchema {
        &self.graph.schema
    }

    fn capabilities(&self) -> CapabilitySet {
        self.graph.capabilities()
    }

    fn snapshot_latest(&self) -> Result<SnapshotRef> {
        Ok(self.snapshot())
    }

    fn kind(&self) -> &'static str {
        "immutable"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CmpOp;
    use crate::retrieval::{
        emulate_filtered_scan, filtered_vertex_list, lookup_by_pk as lookup, vertex_list, vertex_property,
    };
    use crate::testkit::{g0, g0_schema, g0_tables};

    fn vid(snap: &dyn GraphSnapshot, ty: &str, idx: u64) -> VertexRef {
        VertexRef::new(snap.schema().vertex_type_id(ty).unwrap(), idx)
    }

    #[test]
    fn g0_shape() {
        let store = g0();
        let snap = store.snapshot();
        let buyer = snap.schema().vertex_type_id("Buyer").unwrap();
        assert_eq!(snap.vertex_count(buyer).unwrap(), 3);
        let buy = snap.schema().edge_type_id("Buy").unwrap();
        assert_eq!(store.graph().csr(buy).offsets, vec![0, 1, 3, 4]);
        let list = vertex_list(snap.as_ref(), buyer).unwrap();
        assert_eq!(list.vertex_at(0).unwrap(), VertexRef::new(buyer, 0));
        assert!(matches!(list.vertex_at(3), Err(RetrievalError::IndexOutOfRange { .. })));
    }

    #[test]
    fn adjacency_and_degree() {
        let snap = g0().snapshot();
        let s = snap.schema();
        let buy = s.edge_type_id("Buy").unwrap();
        let sell = s.edge_type_id("Sell").unwrap();
        let b2 = vid(snap.as_ref(), "Buyer", 1);
        let nbrs: Vec<_> = snap.adjacency(b2, Direction::Out, buy).unwrap().map(|(v, _)| v).collect();
        assert_eq!(nbrs, vec![vid(snap.as_ref(), "Item", 0), vid(snap.as_ref(), "Item", 1)]);
        assert_eq!(snap.degree(vid(snap.as_ref(), "Seller", 0), Direction::Out, sell).unwrap(), 2);
        let i1 = vid(snap.as_ref(), "Item", 0);
        assert_eq!(snap.adjacency(i1, Direction::Out, buy).unwrap().count(), 0);
        assert_eq!(snap.degree(i1, Direction::In, buy).unwrap(), 2);
        assert_eq!(snap.degree(i1, Direction::Both, buy).unwrap(), 2);
        assert!(matches!(
            snap.adjacency(VertexRef::new(0, 99), Direction::Out, buy),
            Err(RetrievalError::InvalidVertex(_))
        ));
        assert!(matches!(snap.degree(b2, Direction::Out, 42), Err(RetrievalError::UnknownType(_))));
    }

    #[test]
    fn properties_and_pk() {
        let snap = g0().snapshot();
        let b1 = vid(snap.as_ref(), "Buyer", 0);
        assert_eq!(vertex_property(snap.as_ref(), b1, "username").unwrap(), Value::str("A1"));
        assert_eq!(
            vertex_property(snap.as_ref(), vid(snap.as_ref(), "Item", 0), "price").unwrap(),
            Value::Float64(100.0)
        );
        assert!(matches!(
            vertex_property(snap.as_ref(), b1, "rating"),
            Err(RetrievalError::UnknownProperty(_))
        ));
        let buyer = snap.schema().vertex_type_id("Buyer").unwrap();
        assert_eq!(lookup(snap.as_ref(), buyer, &Value::str("A1")).unwrap(), b1);
        assert_eq!(lookup(snap.as_ref(), buyer, &Value::str("ZZ")), Err(RetrievalError::NotFound));
    }

    #[test]
    fn pushdown_matches_emulation() {
        let snap = g0().snapshot();
        let item = snap.schema().vertex_type_id("Item").unwrap();
        let pred = PropertyPredicate::always().and("price", CmpOp::Gt, 60.0);
        let pushed = filtered_vertex_list(snap.as_ref(), item, &pred).unwrap();
        assert_eq!(pushed.indices(), vec![0]);
        assert_eq!(pushed, emulate_filtered_scan(snap.as_ref(), item, &pred).unwrap());
        let all = filtered_vertex_list(snap.as_ref(), item, &PropertyPredicate::always()).unwrap();
        assert_eq!(all.indices(), vertex_list(snap.as_ref(), item).unwrap().indices());
        let int_pred = PropertyPredicate::always().and("price", CmpOp::Ge, 50i64);
        assert_eq!(filtered_vertex_list(snap.as_ref(), item, &int_pred).unwrap().size, 2);
    }

    #[test]
    fn build_errors() {
        let schema = g0_schema();
        let mut t = g0_tables();
        t.add_edge("Buy", "ZZ", 1i64, vec![Value::Int64(0)]);
        assert!(matches!(build_immutable(&schema, &t), Err(StoreError::DanglingEdge { .. })));
        let mut t = g0_tables();
        t.add_vertex("Buyer", vec![Value::str("A1"), Value::Int64(0)]);
        assert!(matches!(build_immutable(&schema, &t), Err(StoreError::DuplicatePk { .. })));
    }

    #[test]
    fn csr_csc_agree() {
        let store = g0();
        let g = store.graph();
        let snap = store.snapshot();
        for et in g.schema.edge_type_ids() {
            let (src_t, dst_t) = g.schema.edge_endpoints(et);
            let mut out = Vec::new();
            for i in 0..g.vertex_counts[src_t as usize] {
                let v = VertexRef::new(src_t, i);
                assert_eq!(snap.degree(v, Direction::Out, et).unwrap(), g.csr(et).degree(i));
                out.extend(snap.adjacency(v, Direction::Out, et).unwrap().map(|(_, e)| e));
            }
            let mut inn = Vec::new();
            for i in 0..g.vertex_counts[dst_t as usize] {
                inn.extend(snap.adjacency(VertexRef::new(dst_t, i), Direction::In, et).unwrap().map(|(_, e)| e));
            }
            out.sort();
            inn.sort();
            assert_eq!(out, inn);
            assert!(g.csr(et).offsets.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn partitions() {
        let store = g0().with_partitions(4);
        let snap = store.snapshot();
        assert_eq!(snap.shards().unwrap(), 4);
        assert_eq!(crate::retrieval::partition_of(VertexRef::new(0, 10), 4), 2);
        let buyer = snap.schema().vertex_type_id("Buyer").unwrap();
        let mut owned: Vec<u64> = Vec::new();
        for shard in 0..4 {
            owned.extend(
                (0..3).filter(|&i| snap.shard_of(VertexRef::new(buyer, i)).unwrap() == shard),
            );
        }
        owned.sort();
        assert_eq!(owned, vec![0, 1, 2]);
    }
}
