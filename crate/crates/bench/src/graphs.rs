//! Store construction from CSV and backend-neutral graph observations.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::Path;

use flexgraph_core::model::{Direction, PropertyGraphSchema, TypeId, VertexRef};
use flexgraph_core::retrieval::{GraphSnapshot, GraphStore, Result, SnapshotRef};
use flexgraph_core::store::archive::{convert_csv_to_archive, load_csv, open_archive, write_csv, ArchiveStore, Codec, CsvSpec};
use flexgraph_core::store::{build_immutable, GraphTables, ImmutableStore, MvccStore};
use tempfile::TempDir;

/// The same graph loaded into all three backends from one set of CSVs.
pub struct StoreSet {
    pub immutable: ImmutableStore,
    pub mvcc: MvccStore,
    pub archive: ArchiveStore,
    pub csv_spec: CsvSpec,
    _dirs: Vec<TempDir>,
}

impl StoreSet {
    pub fn from_csv(spec: &CsvSpec, chunk_size: u64) -> StoreSet {
        let (schema, tables) = load_csv(spec).expect("csv loads");
        let immutable = build_immutable(&schema, &tables).expect("immutable build");
        let (schema, tables) = load_csv(spec).expect("csv loads");
        let mvcc = MvccStore::from_tables(&schema, &tables).expect("mvcc build");
        let dir = tempfile::tempdir().expect("tempdir");
        convert_csv_to_archive(spec, dir.path(), chunk_size, Codec::Deflate).expect("archive write");
        let archive = open_archive(dir.path()).expect("archive opens");
        StoreSet { immutable, mvcc, archive, csv_spec: spec.clone(), _dirs: vec![dir] }
    }

    /// Writes `tables` as CSV first so every backend parses the same files.
    pub fn from_tables(schema: &PropertyGraphSchema, tables: &GraphTables, chunk_size: u64) -> StoreSet {
        let dir = tempfile::tempdir().expect("tempdir");
        let spec = write_csv(schema, tables, dir.path()).expect("csv export");
        let mut s = StoreSet::from_csv(&spec, chunk_size);
        s._dirs.push(dir);
        s
    }

    pub fn snapshots(&self) -> Vec<(&'static str, SnapshotRef)> {
        vec![
            ("immutable", self.immutable.snapshot()),
            ("mvcc", self.mvcc.snapshot_latest().expect("mvcc snapshot")),
            ("archive", self.archive.snapshot_latest().expect("archive snapshot")),
        ]
    }
}

pub fn fixture_dir(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

/// Hash of the graph content keyed by primary keys, so it is independent
/// of internal ids and adjacency order.
pub fn fingerprint(snap: &dyn GraphSnapshot) -> Result<u64> {
    let schema = snap.schema();
    let mut lines: Vec<String> = Vec::new();
    let pk = |v: VertexRef| snap.vertex_property_at(v, schema.pk_index(v.vtype));
    for t in 0..schema.vertex_type_count() as TypeId {
        let np = schema.vertex_type(t).properties.len();
        for idx in 0..snap.vertex_count(t)? {
            let v = VertexRef { vtype: t, idx };
            let props: Vec<String> = (0..np).map(|p| snap.vertex_property_at(v, p).map(|x| x.to_string())).collect::<Result<_>>()?;
            lines.push(format!("V{t}|{}", props.join("|")));
        }
    }
    for e in 0..schema.edge_type_count() as TypeId {
        let (st, _) = schema.edge_endpoints(e);
        let np = schema.edge_type(e).properties.len();
        for idx in 0..snap.vertex_count(st)? {
            let v = VertexRef { vtype: st, idx };
            let src = pk(v)?;
            for (n, er) in snap.adjacency(v, Direction::Out, e)? {
                let props: Vec<String> = (0..np).map(|p| snap.edge_property_at(&er, p).map(|x| x.to_string())).collect::<Result<_>>()?;
                lines.push(format!("E{e}|{src}|{}|{}", pk(n)?, props.join("|")));
            }
        }
    }
    lines.sort_unstable();
    let mut h = DefaultHasher::new();
    lines.hash(&mut h);
    Ok(h.finish())
}

/// Visits every edge once through Out adjacency; returns the edge count.
pub fn edge_scan(snap: &dyn GraphSnapshot) -> Result<u64> {
    let schema = snap.schema();
    let mut n = 0u64;
    let mut checksum = 0u64;
    for e in 0..schema.edge_type_count() as TypeId {
        let (st, _) = schema.edge_endpoints(e);
        for idx in 0..snap.vertex_count(st)? {
            for (v, _) in snap.adjacency(VertexRef { vtype: st, idx }, Direction::Out, e)? {
                n += 1;
                checksum = checksum.wrapping_add(v.idx);
            }
        }
    }
    std::hint::black_box(checksum);
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use flexgraph_core::testkit::{g0, random_schema, random_tables};

    #[test]
    fn fixture_csvs_match_the_builtin_g0() {
        let spec = CsvSpec::from_file(&fixture_dir("g0").join("csv_spec.json")).unwrap();
        let set = StoreSet::from_csv(&spec, 2);
        let want = fingerprint(g0().snapshot().as_ref()).unwrap();
        for (name, s) in set.snapshots() {
            assert_eq!(fingerprint(s.as_ref()).unwrap(), want, "{name}");
            assert_eq!(edge_scan(s.as_ref()).unwrap(), 8);
        }
    }

    #[test]
    fn fingerprint_sees_changes() {
        let set = StoreSet::from_tables(&random_schema(), &random_tables(1, 30, 80), 8);
        let before = fingerprint(set.immutable.snapshot().as_ref()).unwrap();
        assert_eq!(fingerprint(set.archive.snapshot_latest().unwrap().as_ref()).unwrap(), before);
        let mut b = set.mvcc.begin_batch_blocking();
        // Ids 0 and 1 are always an A and a B in the generated tables.
        b.insert_edge("AB", 0i64, 1i64, vec![]);
        b.commit().unwrap();
        assert_ne!(fingerprint(set.mvcc.snapshot_latest().unwrap().as_ref()).unwrap(), before);
    }
}
