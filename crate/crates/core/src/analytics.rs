//! PageRank and BFS written purely against the retrieval interface, so any
//! backend can run them. The typed graph is treated as one homogeneous
//! graph over the union of all edge types.

use std::collections::VecDeque;

use num_traits::Float;
use rayon::prelude::*;

use crate::model::{Direction, TypeId, VertexRef};
use crate::retrieval::{check_vertex, GraphSnapshot, Result, RetrievalError};
use crate::store::ImmutableStore;

/// Dense numbering of every vertex: type-major, then index.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexSpace {
    /// `base[t]` is the first global id of vertex type `t`; one extra entry
    /// holds the total.
    base: Vec<u64>,
}

impl VertexSpace {
    pub fn of(snap: &dyn GraphSnapshot) -> Result<VertexSpace> {
        let mut base = vec![0];
        for t in 0..snap.schema().vertex_type_count() {
            let last = *base.last().unwrap();
            base.push(last + snap.vertex_count(t as TypeId)?);
        }
        Ok(VertexSpace { base })
    }

    pub fn len(&self) -> usize {
        *self.base.last().unwrap() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn gid(&self, v: VertexRef) -> usize {
        (self.base[v.vtype as usize] + v.idx) as usize
    }

    pub fn vertex(&self, gid: usize) -> VertexRef {
        let t = self.base.partition_point(|&b| b <= gid as u64) - 1;
        VertexRef { vtype: t as TypeId, idx: gid as u64 - self.base[t] }
    }

    pub fn iter(&self) -> impl Iterator<Item = VertexRef> + '_ {
        (0..self.len()).map(|g| self.vertex(g))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankVector<T> {
    pub space: VertexSpace,
    pub scores: Vec<T>,
    pub iterations: usize,
}

pub type RankVector64 = RankVector<f64>;
pub type RankVector32 = RankVector<f32>;

impl<T: Float> RankVector<T> {
    pub fn get(&self, v: VertexRef) -> T {
        self.scores[self.space.gid(v)]
    }

    pub fn sum(&self) -> T {
        self.scores.iter().fold(T::zero(), |a, &b| a + b)
    }
}

pub const UNREACHED: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct BfsResult {
    pub space: VertexSpace,
    pub depth: Vec<u64>,
}

impl BfsResult {
    /// `None` when `v` was not reached.
    pub fn get(&self, v: VertexRef) -> Option<u64> {
        let d = self.depth[self.space.gid(v)];
        (d != UNREACHED).then_some(d)
    }
}

/// Edge types leaving vertex type `t`, each with its target type's base id.
fn out_types(snap: &dyn GraphSnapshot, space: &VertexSpace, t: TypeId) -> Vec<(TypeId, usize)> {
    let schema = snap.schema();
    (0..schema.edge_type_count() as TypeId)
        .filter(|&et| schema.edge_endpoints(et).0 == t)
        .map(|et| (et, space.base[schema.edge_endpoints(et).1 as usize] as usize))
        .collect()
}

/// Every outgoing neighbour of `v` over the given edge types, as global ids.
fn out_neighbors(snap: &dyn GraphSnapshot, space: &VertexSpace, v: VertexRef, ets: &[(TypeId, usize)], out: &mut Vec<u32>) -> Result<()> {
    for &(et, base) in ets {
        match snap.adjacency_array(v, Direction::Out, et) {
            Ok(a) => out.extend(a.neighbors.iter().map(|&n| (base + n as usize) as u32)),
            Err(RetrievalError::UnsupportedCapability(_)) => {
                out.extend(snap.adjacency(v, Direction::Out, et)?.map(|(n, _)| space.gid(n) as u32))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

/// Pull-side topology: in-neighbour lists sorted by global id, so sums are
/// accumulated in the same order whatever the backend's adjacency order.
struct InTopology {
    offsets: Vec<usize>,
    sources: Vec<u32>,
    out_degree: Vec<u32>,
}

fn in_topology(snap: &dyn GraphSnapshot, space: &VertexSpace) -> Result<InTopology> {
    let n = space.len();
    let schema = snap.schema();
    let mut out_off = Vec::with_capacity(n + 1);
    let mut out_dst: Vec<u32> = Vec::new();
    out_off.push(0);
    for t in 0..schema.vertex_type_count() as TypeId {
        let ets = out_types(snap, space, t);
        for idx in 0..space.base[t as usize + 1] - space.base[t as usize] {
            out_neighbors(snap, space, VertexRef { vtype: t, idx }, &ets, &mut out_dst)?;
            out_off.push(out_dst.len());
        }
    }
    let mut offsets = vec![0usize; n + 1];
    for &d in &out_dst {
        offsets[d as usize + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    // Filling in ascending source order leaves every in-list sorted.
    let mut fill = offsets.clone();
    let mut sources = vec![0u32; out_dst.len()];
    let mut out_degree = vec![0u32; n];
    for g in 0..n {
        out_degree[g] = (out_off[g + 1] - out_off[g]) as u32;
        for &d in &out_dst[out_off[g]..out_off[g + 1]] {
            sources[fill[d as usize]] = g as u32;
            fill[d as usize] += 1;
        }
    }
    Ok(InTopology { offsets, sources, out_degree })
}

/// Power iteration with uniform redistribution of dangling mass. Stops when
/// the L1 change drops below `tol` or after `max_iters` rounds.
pub fn pagerank_generic<T: Float + Send + Sync>(
    snap: &dyn GraphSnapshot,
    damping: T,
    max_iters: usize,
    tol: T,
) -> Result<RankVector<T>> {
    let space = VertexSpace::of(snap)?;
    let n = space.len();
    if n == 0 {
        return Ok(RankVector { space, scores: Vec::new(), iterations: 0 });
    }
    let topo = in_topology(snap, &space)?;
    let nf = T::from(n).expect("vertex count fits the scalar type");
    let mut rank = vec![T::one() / nf; n];
    let mut contrib = vec![T::zero(); n];
    let mut next = vec![T::zero(); n];
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let mut dangling = T::zero();
        for g in 0..n {
            let d = topo.out_degree[g];
            if d == 0 {
                dangling = dangling + rank[g];
                contrib[g] = T::zero();
            } else {
                contrib[g] = rank[g] / T::from(d).unwrap();
            }
        }
        let teleport = (T::one() - damping) / nf + damping * dangling / nf;
        next.par_iter_mut().enumerate().for_each(|(v, slot)| {
            let mut s = T::zero();
            for &u in &topo.sources[topo.offsets[v]..topo.offsets[v + 1]] {
                s = s + contrib[u as usize];
            }
            *slot = teleport + damping * s;
        });
        let delta = rank.iter().zip(&next).fold(T::zero(), |a, (&x, &y)| a + (x - y).abs());
        std::mem::swap(&mut rank, &mut next);
        if delta < tol {
            break;
        }
    }
    Ok(RankVector { space, scores: rank, iterations })
}

pub fn pagerank(snap: &dyn GraphSnapshot, damping: f64, max_iters: usize, tol: f64) -> Result<RankVector64> {
    pagerank_generic(snap, damping, max_iters, tol)
}

/// Hand-inlined baseline over the immutable store's CSC arrays; used to
/// measure what the retrieval layer costs.
pub fn pagerank_inlined_csr(store: &ImmutableStore, damping: f64, max_iters: usize, tol: f64) -> Vec<f64> {
    let g = store.graph();
    let schema = g.schema();
    let nt = schema.vertex_type_count();
    let mut base = vec![0usize; nt + 1];
    for t in 0..nt {
        base[t + 1] = base[t] + g.vertex_count(t as TypeId).unwrap() as usize;
    }
    let n = base[nt];
    if n == 0 {
        return Vec::new();
    }
    let ets: Vec<(usize, usize, usize)> = (0..schema.edge_type_count())
        .map(|e| {
            let (s, d) = schema.edge_endpoints(e as TypeId);
            (e, s as usize, d as usize)
        })
        .collect();
    let mut out_degree = vec![0u32; n];
    for &(e, s, _) in &ets {
        let csr = g.csr(e as TypeId);
        for i in 0..csr.offsets.len() - 1 {
            out_degree[base[s] + i] += (csr.offsets[i + 1] - csr.offsets[i]) as u32;
        }
    }
    let vtype_of: Vec<usize> = (0..nt).flat_map(|t| std::iter::repeat_n(t, base[t + 1] - base[t])).collect();
    let nf = n as f64;
    let mut rank = vec![1.0 / nf; n];
    let mut contrib = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..max_iters {
        let mut dangling = 0.0;
        for v in 0..n {
            if out_degree[v] == 0 {
                dangling += rank[v];
                contrib[v] = 0.0;
            } else {
                contrib[v] = rank[v] / out_degree[v] as f64;
            }
        }
        let teleport = (1.0 - damping) / nf + damping * dangling / nf;
        next.par_iter_mut().enumerate().for_each(|(v, slot)| {
            let t = vtype_of[v];
            let local = v - base[t];
            let mut s = 0.0;
            for &(e, st, dt) in &ets {
                if dt != t {
                    continue;
                }
                let csc = g.csc(e as TypeId);
                let (lo, hi) = (csc.offsets[local] as usize, csc.offsets[local + 1] as usize);
                for &u in &csc.targets[lo..hi] {
                    s += contrib[base[st] + u as usize];
                }
            }
            *slot = teleport + damping * s;
        });
        let delta: f64 = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if delta < tol {
            break;
        }
    }
    rank
}

/// Level-synchronous BFS over outgoing edges of every type.
pub fn bfs(snap: &dyn GraphSnapshot, src: VertexRef) -> Result<BfsResult> {
    check_vertex(snap, src)?;
    let space = VertexSpace::of(snap)?;
    let mut depth = vec![UNREACHED; space.len()];
    depth[space.gid(src)] = 0;
    let mut frontier = VecDeque::from([space.gid(src)]);
    let types: Vec<_> = (0..snap.schema().vertex_type_count() as TypeId).map(|t| out_types(snap, &space, t)).collect();
    let mut buf = Vec::new();
    while let Some(g) = frontier.pop_front() {
        buf.clear();
        let v = space.vertex(g);
        out_neighbors(snap, &space, v, &types[v.vtype as usize], &mut buf)?;
        for n in buf.iter().map(|&n| n as usize) {
            if depth[n] == UNREACHED {
                depth[n] = depth[g] + 1;
                frontier.push_back(n);
            }
        }
    }
    Ok(BfsResult { space, depth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DataType, EdgeTypeDecl, PropertyDecl, PropertyGraphSchema, Value, VertexTypeDecl};
    use crate::retrieval::GraphStore;
    use crate::store::archive::{open_archive, write_archive, Codec};
    use crate::store::{build_immutable, GraphTables, MvccStore};
    use crate::testkit::{g0, g0_schema, g0_tables, random_homogeneous};

    fn homogeneous(n: i64, edges: &[(i64, i64)]) -> (PropertyGraphSchema, GraphTables) {
        let schema = PropertyGraphSchema {
            vertex_types: vec![VertexTypeDecl {
                name: "V".into(),
                properties: vec![PropertyDecl::new("id", DataType::Int64)],
                primary_key: "id".into(),
            }],
            edge_types: vec![EdgeTypeDecl { name: "E".into(), src_type: "V".into(), dst_type: "V".into(), properties: vec![] }],
        };
        let mut t = GraphTables::default();
        for i in 0..n {
            t.add_vertex("V", vec![Value::Int64(i)]);
        }
        for &(s, d) in edges {
            t.add_edge("E", s, d, vec![]);
        }
        (schema, t)
    }

    /// Dense transition-matrix power iteration.
    fn dense_pagerank(n: usize, edges: &[(usize, usize)], damping: f64, iters: usize) -> Vec<f64> {
        let mut m = vec![vec![0.0; n]; n];
        let mut deg = vec![0usize; n];
        for &(s, _) in edges {
            deg[s] += 1;
        }
        for &(s, d) in edges {
            m[d][s] += 1.0 / deg[s] as f64;
        }
        for (s, &dg) in deg.iter().enumerate() {
            if dg == 0 {
                for row in m.iter_mut() {
                    row[s] = 1.0 / n as f64;
                }
            }
        }
        let mut r = vec![1.0 / n as f64; n];
        for _ in 0..iters {
            r = (0..n)
                .map(|i| (1.0 - damping) / n as f64 + damping * (0..n).map(|j| m[i][j] * r[j]).sum::<f64>())
                .collect();
        }
        r
    }

    #[test]
    fn three_cycle_is_uniform() {
        let (s, t) = homogeneous(3, &[(0, 1), (1, 2), (2, 0)]);
        let r = pagerank(build_immutable(&s, &t).unwrap().snapshot().as_ref(), 0.85, 100, 1e-6).unwrap();
        for x in &r.scores {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn small_graphs_match_dense_power_iteration() {
        let star: Vec<(i64, i64)> = (1..5).map(|i| (0, i)).chain([(1, 0), (2, 0)]).collect();
        let chain = vec![(0, 1), (1, 2), (2, 3), (3, 4), (1, 1), (0, 1)];
        for edges in [star, chain] {
            let (s, t) = homogeneous(5, &edges);
            let r = pagerank(build_immutable(&s, &t).unwrap().snapshot().as_ref(), 0.85, 1000, 1e-15).unwrap();
            let e: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (a as usize, b as usize)).collect();
            let want = dense_pagerank(5, &e, 0.85, 1000);
            for (a, b) in r.scores.iter().zip(&want) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
        for seed in 0..5 {
            let (s, mut t) = random_homogeneous(seed, 12, 30);
            let snap = build_immutable(&s, &t).unwrap().snapshot();
            let r = pagerank(snap.as_ref(), 0.85, 1000, 1e-15).unwrap();
            let e: Vec<(usize, usize)> = t
                .edge_rows("E")
                .iter()
                .map(|r| (r.src.as_i64().unwrap() as usize, r.dst.as_i64().unwrap() as usize))
                .collect();
            let want = dense_pagerank(12, &e, 0.85, 1000);
            for (a, b) in r.scores.iter().zip(&want) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn scores_sum_to_one() {
        let (s, t) = random_homogeneous(9, 200, 500);
        let r = pagerank(build_immutable(&s, &t).unwrap().snapshot().as_ref(), 0.85, 100, 1e-6).unwrap();
        assert!((r.sum() - 1.0).abs() < 1e-9);
        let r = pagerank(g0().snapshot().as_ref(), 0.85, 100, 1e-6).unwrap();
        assert!((r.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_precision_rank_vector() {
        let r: RankVector32 = pagerank_generic(g0().snapshot().as_ref(), 0.85f32, 100, 1e-6).unwrap();
        let d = pagerank(g0().snapshot().as_ref(), 0.85, 100, 1e-6).unwrap();
        for (a, b) in r.scores.iter().zip(&d.scores) {
            assert!((*a as f64 - b).abs() < 1e-5);
        }
    }

    #[test]
    fn inlined_baseline_agrees() {
        let (s, t) = random_homogeneous(4, 300, 1500);
        let store = build_immutable(&s, &t).unwrap();
        let a = pagerank(store.snapshot().as_ref(), 0.85, 50, 1e-9).unwrap();
        let b = pagerank_inlined_csr(&store, 0.85, 50, 1e-9);
        for (x, y) in a.scores.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let g = g0();
        let a = pagerank(g.snapshot().as_ref(), 0.85, 100, 1e-6).unwrap();
        let b = pagerank_inlined_csr(&g, 0.85, 100, 1e-6);
        for (x, y) in a.scores.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    fn g0_backends() -> (tempfile::TempDir, Vec<crate::retrieval::SnapshotRef>) {
        let imm = g0();
        let mvcc = MvccStore::from_tables(&g0_schema(), &g0_tables()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_archive(imm.snapshot().as_ref(), dir.path(), 2, Codec::Deflate).unwrap();
        let arch = open_archive(dir.path()).unwrap();
        (dir, vec![imm.snapshot(), mvcc.snapshot_latest().unwrap(), arch.snapshot_latest().unwrap()])
    }

    #[test]
    fn backends_agree() {
        let (_dir, snaps) = g0_backends();
        let ranks: Vec<_> = snaps.iter().map(|s| pagerank(s.as_ref(), 0.85, 100, 1e-6).unwrap()).collect();
        let b1 = VertexRef { vtype: 0, idx: 0 };
        let depths: Vec<_> = snaps.iter().map(|s| bfs(s.as_ref(), b1).unwrap()).collect();
        for r in &ranks[1..] {
            for (a, b) in r.scores.iter().zip(&ranks[0].scores) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
        for d in &depths[1..] {
            assert_eq!(d, &depths[0]);
        }
    }

    #[test]
    fn bfs_depths_on_g0() {
        let snap = g0().snapshot();
        let r = bfs(snap.as_ref(), VertexRef { vtype: 0, idx: 0 }).unwrap();
        let d = |vtype, idx| r.get(VertexRef { vtype, idx });
        assert_eq!((d(0, 0), d(0, 1), d(1, 0), d(0, 2), d(1, 1), d(2, 0)), (Some(0), Some(1), Some(1), Some(2), Some(2), None));
        let err = bfs(snap.as_ref(), VertexRef { vtype: 0, idx: 9 }).unwrap_err();
        assert!(matches!(err, RetrievalError::InvalidVertex(_)));
    }

    #[test]
    fn isolated_source_reaches_only_itself() {
        let (s, t) = homogeneous(4, &[(1, 2), (2, 3)]);
        let r = bfs(build_immutable(&s, &t).unwrap().snapshot().as_ref(), VertexRef { vtype: 0, idx: 0 }).unwrap();
        assert_eq!(r.depth, vec![0, UNREACHED, UNREACHED, UNREACHED]);
    }
}
