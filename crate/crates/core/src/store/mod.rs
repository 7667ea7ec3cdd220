//! Storage backends behind the retrieval interface.

pub mod archive;
mod column;
pub mod immutable;
pub mod mvcc;
mod tables;

use std::time::Instant;

pub use column::{Column, ColumnData};
pub use immutable::{build_immutable, ImmutableStore};
pub use mvcc::MvccStore;
pub use tables::{resolve, EdgeRow, EdgeTable, GraphTables, ResolvedEdges, ResolvedGraph, VertexTable};

use crate::model::{Direction, SchemaError, VertexRef};
use crate::retrieval::{GraphSnapshot, RetrievalError};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("edge type {etype} references unknown primary key {missing_pk}")]
    DanglingEdge { etype: String, missing_pk: String },
    #[error("duplicate primary key {pk} for vertex type {vtype}")]
    DuplicatePk { vtype: String, pk: String },
    #[error("unknown vertex: {0}")]
    UnknownVertex(String),
    #[error("unknown edge: {0}")]
    UnknownEdge(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("another write batch is open")]
    WriterBusy,
    #[error("compaction horizon {horizon} is newer than open snapshot or committed version {limit}")]
    HorizonTooNew { horizon: u64, limit: u64 },
    #[error("store is read-only")]
    ReadOnly,
    #[error("target directory {0} is not empty")]
    NonEmptyDir(String),
    #[error("corrupt chunk {path}: {reason}")]
    CorruptChunk { path: String, reason: String },
    #[error("bad magic in {0}")]
    BadMagic(String),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("CSV parse error at line {line}: {message}")]
    CsvParse { line: u64, message: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("metadata error: {0}")]
    Meta(String),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}

/// Outcome of a full sequential edge scan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanReport {
    pub edges: u64,
    pub seconds: f64,
    /// Folded neighbor ids, kept so the scan cannot be optimized away.
    pub checksum: u64,
}

impl ScanReport {
    pub fn edges_per_second(&self) -> f64 {
        self.edges as f64 / self.seconds.max(1e-9)
    }
}

/// Visits every edge of every type through Out adjacency, using the array
/// form when the store offers it.
pub fn edge_scan(snap: &dyn GraphSnapshot) -> Result<ScanReport, RetrievalError> {
    let start = Instant::now();
    let schema = snap.schema();
    let array = snap.capabilities().topology.adjacency_array;
    let mut edges = 0u64;
    let mut checksum = 0u64;
    for et in schema.edge_type_ids() {
        let (src_t, _) = schema.edge_endpoints(et);
        for idx in 0..snap.vertex_count(src_t)? {
            let v = VertexRef::new(src_t, idx);
            if array {
                let adj = snap.adjacency_array(v, Direction::Out, et)?;
                edges += adj.len() as u64;
                checksum = adj.neighbors.iter().fold(checksum, |acc, n| acc.wrapping_add(*n));
            } else {
                for (n, _) in snap.adjacency(v, Direction::Out, et)? {
                    edges += 1;
                    checksum = checksum.wrapping_add(n.idx);
                }
            }
        }
    }
    Ok(ScanReport { edges, seconds: start.elapsed().as_secs_f64(), checksum })
}
