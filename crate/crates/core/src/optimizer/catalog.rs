//! Pattern-frequency catalog: exact counts of every small connected typed
//! pattern, plus an extension-rate estimator for larger ones.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ir::{PatternEdge, PatternGraph};
use crate::model::{Direction, PropertyGraphSchema, TypeId, VertexRef};
use crate::retrieval::GraphSnapshot;

use super::OptError;

pub const DEFAULT_K: u8 = 3;
pub const MAX_K: u8 = 4;
pub const DEFAULT_PATTERN_BOUND: usize = 1_000_000;
/// Largest pattern `pattern_canon` accepts.
pub const MAX_CANON_VERTICES: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub k: u8,
    /// Canonical pattern code to exact match count.
    pub entries: BTreeMap<String, u64>,
    pub vertex_counts: Vec<u64>,
    pub edge_counts: Vec<u64>,
}

/// A pattern with types resolved and edges as `(src, dst, etype)` over
/// vertex positions. `both` edges are kept separately.
#[derive(Clone, Debug)]
struct Typed {
    types: Vec<TypeId>,
    edges: Vec<(usize, usize, TypeId)>,
    both: Vec<(usize, usize, TypeId)>,
}

impl Typed {
    fn from_pattern(p: &PatternGraph, types: &[TypeId]) -> Typed {
        let idx = |a: &str| p.vertex_index(a).expect("validated pattern");
        let mut t = Typed { types: types.to_vec(), edges: vec![], both: vec![] };
        for e in &p.edges {
            let (s, d) = (idx(&e.src), idx(&e.dst));
            if e.both {
                t.both.push((s.min(d), s.max(d), e.etype));
            } else {
                t.edges.push((s, d, e.etype));
            }
        }
        t
    }

    fn n(&self) -> usize {
        self.types.len()
    }

    fn degree(&self, v: usize) -> usize {
        self.edges.iter().chain(&self.both).filter(|(a, b, _)| *a == v || *b == v).count()
    }

    fn connected_without(&self, skip: usize) -> bool {
        let keep: Vec<usize> = (0..self.n()).filter(|&i| i != skip).collect();
        if keep.is_empty() {
            return false;
        }
        let mut seen = vec![false; self.n()];
        seen[keep[0]] = true;
        let mut stack = vec![keep[0]];
        while let Some(v) = stack.pop() {
            for &(a, b, _) in self.edges.iter().chain(&self.both) {
                for (x, y) in [(a, b), (b, a)] {
                    if x == v && y != skip && !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
        }
        keep.iter().all(|&i| seen[i])
    }

    fn without(&self, skip: usize) -> Typed {
        let map = |i: usize| if i > skip { i - 1 } else { i };
        let keep = |e: &&(usize, usize, TypeId)| e.0 != skip && e.1 != skip;
        Typed {
            types: self.types.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, t)| *t).collect(),
            edges: self.edges.iter().filter(keep).map(|&(a, b, t)| (map(a), map(b), t)).collect(),
            both: self.both.iter().filter(keep).map(|&(a, b, t)| (map(a), map(b), t)).collect(),
        }
    }
}

/// Canonical code of a directed typed pattern (no `both` edges). Parallel
/// duplicate edges collapse, matching per-pair edge semantics.
fn canon_typed(types: &[TypeId], edges: &[(usize, usize, TypeId)], schema: &PropertyGraphSchema) -> String {
    let n = types.len();
    // Only permutations that sort vertices by type are considered.
    let mut by_type: BTreeMap<TypeId, Vec<usize>> = BTreeMap::new();
    for (i, t) in types.iter().enumerate() {
        by_type.entry(*t).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = by_type.into_values().collect();
    let mut best: Option<String> = None;
    let mut pos = vec![0usize; n];
    fn rec(
        groups: &[Vec<usize>],
        g: usize,
        offset: usize,
        pos: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]),
    ) {
        if g == groups.len() {
            f(pos);
            return;
        }
        let mut members = groups[g].clone();
        permute(&mut members, 0, &mut |perm| {
            for (k, &v) in perm.iter().enumerate() {
                pos[v] = offset + k;
            }
            rec(groups, g + 1, offset + perm.len(), pos, f);
        });
    }
    let mut sorted_types = types.to_vec();
    sorted_types.sort_unstable();
    let head: Vec<String> = sorted_types.iter().map(|t| schema.vertex_type(*t).name.clone()).collect();
    let head = head.join(",");
    rec(&groups, 0, 0, &mut pos, &mut |pos| {
        let mut es: Vec<(usize, usize, TypeId)> = edges.iter().map(|&(a, b, t)| (pos[a], pos[b], t)).collect();
        es.sort_unstable();
        es.dedup();
        let body: Vec<String> = es.iter().map(|(a, b, t)| format!("{a}>{b}:{}", schema.edge_type(*t).name)).collect();
        let code = format!("{head}|{}", body.join(","));
        if best.as_ref().is_none_or(|b| code < *b) {
            best = Some(code);
        }
    });
    best.expect("at least one permutation")
}

fn permute(v: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, f);
        v.swap(k, i);
    }
}

/// Canonical code of a typed pattern: the lexicographically least encoding
/// over vertex renumberings consistent with types. Predicates and edge
/// names are ignored. Undirected edges are encoded as `a-b:T`.
pub fn pattern_canon(p: &PatternGraph, schema: &PropertyGraphSchema) -> Result<String, OptError> {
    if p.vertices.len() > MAX_CANON_VERTICES {
        return Err(OptError::PatternTooLarge(p.vertices.len()));
    }
    let mut types = Vec::new();
    for v in &p.vertices {
        match p.effective_label(&v.alias, schema) {
            Some(t) => types.push(t),
            None => return Err(OptError::Untyped(v.alias.clone())),
        }
    }
    let t = Typed::from_pattern(p, &types);
    if t.both.is_empty() {
        return Ok(canon_typed(&t.types, &t.edges, schema));
    }
    // Encode undirected edges as a marker type beyond the real ones.
    let marker = schema.edge_type_count() as TypeId;
    let mut edges = t.edges.clone();
    for &(a, b, et) in &t.both {
        edges.push((a, b, marker + et));
        edges.push((b, a, marker + et));
    }
    let ext = extend_schema_for_both(schema);
    Ok(canon_typed(&t.types, &edges, &ext))
}

fn extend_schema_for_both(schema: &PropertyGraphSchema) -> PropertyGraphSchema {
    let mut s = schema.clone();
    let extra: Vec<_> = schema
        .edge_types
        .iter()
        .map(|e| {
            let mut e = e.clone();
            e.name = format!("~{}", e.name);
            e
        })
        .collect();
    s.edge_types.extend(extra);
    s
}

/// Counts vertex-injective embeddings with one binding per adjacent pair,
/// expanding along adjacency from a BFS order.
fn count_embeddings(t: &Typed, snap: &dyn GraphSnapshot) -> u64 {
    let n = t.n();
    // BFS order with the edge used to reach each vertex.
    let mut order = vec![0usize];
    let mut parent: Vec<Option<(usize, Direction, TypeId)>> = vec![None; n];
    let mut seen = vec![false; n];
    seen[0] = true;
    let mut i = 0;
    while i < order.len() {
        let v = order[i];
        for &(a, b, et) in &t.edges {
            let (from, to, dir) = if a == v { (a, b, Direction::Out) } else if b == v { (b, a, Direction::In) } else { continue };
            if !seen[to] {
                seen[to] = true;
                parent[to] = Some((from, dir, et));
                order.push(to);
            }
        }
        i += 1;
    }
    debug_assert!(order.len() == n, "connected pattern");
    let pos: Vec<usize> = {
        let mut p = vec![0; n];
        for (k, &v) in order.iter().enumerate() {
            p[v] = k;
        }
        p
    };
    // Non-tree edges, checked once both ends are placed.
    let mut checks: Vec<Vec<(usize, usize, TypeId)>> = vec![Vec::new(); n];
    for &(a, b, et) in &t.edges {
        let tree = parent[b] == Some((a, Direction::Out, et)) || parent[a] == Some((b, Direction::In, et));
        if !tree {
            checks[pos[a].max(pos[b])].push((a, b, et));
        }
    }
    let has_edge = |a: VertexRef, b: VertexRef, et: TypeId| -> bool {
        snap.adjacency(a, Direction::Out, et).map(|mut it| it.any(|(x, _)| x == b)).unwrap_or(false)
    };
    #[allow(clippy::too_many_arguments)]
    fn go(
        depth: usize,
        assigned: &mut Vec<Option<VertexRef>>,
        t: &Typed,
        order: &[usize],
        parent: &[Option<(usize, Direction, TypeId)>],
        checks: &[Vec<(usize, usize, TypeId)>],
        snap: &dyn GraphSnapshot,
        has_edge: &dyn Fn(VertexRef, VertexRef, TypeId) -> bool,
    ) -> u64 {
        if depth == order.len() {
            return 1;
        }
        let v = order[depth];
        let (from, dir, et) = parent[v].expect("non-root has a parent");
        let anchor = assigned[from].expect("parent placed first");
        let mut cands: Vec<VertexRef> = match snap.adjacency(anchor, dir, et) {
            Ok(it) => it.map(|(x, _)| x).filter(|x| x.vtype == t.types[v]).collect(),
            Err(_) => Vec::new(),
        };
        cands.sort_unstable();
        cands.dedup();
        let mut total = 0;
        for c in cands {
            if assigned.contains(&Some(c)) {
                continue;
            }
            assigned[v] = Some(c);
            let ok = checks[depth].iter().all(|&(a, b, et)| has_edge(assigned[a].expect("placed"), assigned[b].expect("placed"), et));
            if ok {
                total += go(depth + 1, assigned, t, order, parent, checks, snap, has_edge);
            }
        }
        assigned[v] = None;
        total
    }
    let roots = snap.vertex_count(t.types[order[0]]).unwrap_or(0);
    (0..roots)
        .into_par_iter()
        .map(|r| {
            let mut assigned = vec![None; n];
            let root = VertexRef::new(t.types[order[0]], r);
            assigned[order[0]] = Some(root);
            go(1, &mut assigned, t, &order, &parent, &checks, snap, &has_edge)
        })
        .sum()
}

fn connected(n: usize, edges: &[(usize, usize, TypeId)]) -> bool {
    let mut seen = vec![false; n];
    seen[0] = true;
    let mut stack = vec![0];
    while let Some(v) = stack.pop() {
        for &(a, b, _) in edges {
            for (x, y) in [(a, b), (b, a)] {
                if x == v && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
    }
    seen.iter().all(|s| *s)
}

fn type_multisets(types: &[TypeId], n: usize) -> Vec<Vec<TypeId>> {
    fn rec(types: &[TypeId], n: usize, start: usize, cur: &mut Vec<TypeId>, out: &mut Vec<Vec<TypeId>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for i in start..types.len() {
            cur.push(types[i]);
            rec(types, n, i, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(types, n, 0, &mut Vec::new(), &mut out);
    out
}

/// Exhaustively counts every connected typed pattern with up to `k`
/// vertices.
pub fn catalog_build(snap: &dyn GraphSnapshot, k: u8) -> Result<Catalog, OptError> {
    catalog_build_bounded(snap, k, DEFAULT_PATTERN_BOUND)
}

pub fn catalog_build_bounded(snap: &dyn GraphSnapshot, k: u8, bound: usize) -> Result<Catalog, OptError> {
    if !(1..=MAX_K).contains(&k) {
        return Err(OptError::BadK(k));
    }
    let schema = snap.schema();
    let vtypes: Vec<TypeId> = schema.vertex_type_ids().collect();
    let vertex_counts: Vec<u64> = vtypes.iter().map(|&t| snap.vertex_count(t).unwrap_or(0)).collect();
    let mut edge_counts = vec![0u64; schema.edge_type_count()];
    for &t in &vtypes {
        for i in 0..vertex_counts[t as usize] {
            for et in schema.edge_type_ids() {
                if schema.edge_endpoints(et).0 == t {
                    edge_counts[et as usize] += snap.degree(VertexRef::new(t, i), Direction::Out, et).unwrap_or(0);
                }
            }
        }
    }
    let mut shapes: Vec<Typed> = Vec::new();
    let mut codes: HashSet<String> = HashSet::new();
    for n in 1..=k as usize {
        for types in type_multisets(&vtypes, n) {
            let mut slots = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    for et in schema.edge_type_ids() {
                        if schema.edge_endpoints(et) == (types[i], types[j]) {
                            slots.push((i, j, et));
                        }
                    }
                }
            }
            if slots.len() > 24 {
                return Err(OptError::CatalogTooLarge { patterns: 1 << slots.len().min(62), bound });
            }
            let subsets: u64 = 1 << slots.len();
            for mask in 0..subsets {
                if n == 1 && mask != 0 {
                    break;
                }
                let edges: Vec<(usize, usize, TypeId)> =
                    slots.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, s)| *s).collect();
                if n > 1 && (edges.len() < n - 1 || !connected(n, &edges)) {
                    continue;
                }
                let code = canon_typed(&types, &edges, schema);
                if codes.insert(code) {
                    if codes.len() > bound {
                        return Err(OptError::CatalogTooLarge { patterns: codes.len(), bound });
                    }
                    shapes.push(Typed { types: types.clone(), edges, both: vec![] });
                }
            }
        }
    }
    let mut entries = BTreeMap::new();
    for t in shapes {
        let code = canon_typed(&t.types, &t.edges, schema);
        entries.insert(code, count_embeddings(&t, snap));
    }
    Ok(Catalog { k, entries, vertex_counts, edge_counts })
}

impl Catalog {
    /// Catalog with base counts only; every pattern lookup is estimated.
    pub fn base_only(snap: &dyn GraphSnapshot) -> Result<Catalog, OptError> {
        let mut c = catalog_build(snap, 1)?;
        c.entries.retain(|code, _| !code.contains('>'));
        Ok(c)
    }

    pub fn pattern_count(&self) -> usize {
        self.entries.len()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plain data")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Catalog, OptError> {
        serde_json::from_value(v.clone()).map_err(|e| OptError::Catalog(e.to_string()))
    }

    fn lookup(&self, types: &[TypeId], edges: &[(usize, usize, TypeId)], schema: &PropertyGraphSchema) -> u64 {
        if types.len() == 1 {
            return self.vertex_counts.get(types[0] as usize).copied().unwrap_or(0);
        }
        // Orientations a schema forbids have no entry and count zero.
        let ok = edges.iter().all(|&(a, b, et)| schema.edge_endpoints(et) == (types[a], types[b]));
        if !ok {
            return 0;
        }
        self.entries.get(&canon_typed(types, edges, schema)).copied().unwrap_or(0)
    }

    /// Exact count for typed patterns within `k`; undirected edges are
    /// resolved by inclusion-exclusion over their orientations.
    fn exact(&self, t: &Typed, schema: &PropertyGraphSchema) -> u64 {
        let m = t.both.len();
        let mut total: i128 = 0;
        for combo in 0..3usize.pow(m as u32) {
            let mut edges = t.edges.clone();
            let mut sign = 1i128;
            let mut c = combo;
            for &(a, b, et) in &t.both {
                match c % 3 {
                    0 => edges.push((a, b, et)),
                    1 => edges.push((b, a, et)),
                    _ => {
                        edges.push((a, b, et));
                        edges.push((b, a, et));
                        sign = -sign;
                    }
                }
                c /= 3;
            }
            total += sign * self.lookup(&t.types, &edges, schema) as i128;
        }
        total.max(0) as u64
    }

    /// Frequency of the single-edge pattern between `u` and `v` in `t`.
    fn edge_freq(&self, t: &Typed, u: usize, v: usize, et: TypeId, both: bool, schema: &PropertyGraphSchema) -> u64 {
        if self.k < 2 {
            let c = self.edge_counts.get(et as usize).copied().unwrap_or(0);
            return if both && t.types[u] == t.types[v] { 2 * c } else { c };
        }
        let pair = Typed {
            types: vec![t.types[u], t.types[v]],
            edges: if both { vec![] } else { vec![(0, 1, et)] },
            both: if both { vec![(0, 1, et)] } else { vec![] },
        };
        self.exact(&pair, schema)
    }

    fn estimate_typed(&self, t: &Typed, schema: &PropertyGraphSchema) -> u64 {
        if t.n() <= self.k as usize {
            return self.exact(t, schema);
        }
        // Drop a removable vertex of minimum degree, the last one on ties.
        let mut pick = None;
        for v in 0..t.n() {
            if !t.connected_without(v) {
                continue;
            }
            if pick.is_none_or(|p| t.degree(v) <= t.degree(p)) {
                pick = Some(v);
            }
        }
        let v = pick.unwrap_or(t.n() - 1);
        let rest = self.estimate_typed(&t.without(v), schema);
        let mut rate = f64::INFINITY;
        for &(a, b, et) in &t.edges {
            if a == v || b == v {
                let u = if a == v { b } else { a };
                let f = self.edge_freq(t, a, b, et, false, schema) as f64;
                rate = rate.min(f / (self.vertex_counts[t.types[u] as usize].max(1) as f64));
            }
        }
        for &(a, b, et) in &t.both {
            if a == v || b == v {
                let u = if a == v { b } else { a };
                let f = self.edge_freq(t, a, b, et, true, schema) as f64;
                rate = rate.min(f / (self.vertex_counts[t.types[u] as usize].max(1) as f64));
            }
        }
        if !rate.is_finite() {
            rate = 0.0;
        }
        (rest as f64 * rate).floor() as u64
    }
}

/// Estimated match count of a connected pattern: exact lookup up to `k`
/// vertices, extension-rate chaining beyond. Untyped vertices sum over
/// their candidate types.
pub fn freq_estimate(catalog: &Catalog, p: &PatternGraph, schema: &PropertyGraphSchema) -> u64 {
    let cands: Vec<Vec<TypeId>> = p.vertices.iter().map(|v| p.candidate_types(&v.alias, schema)).collect();
    let mut total = 0u64;
    let mut choice = vec![0usize; cands.len()];
    if cands.iter().any(|c| c.is_empty()) {
        return 0;
    }
    loop {
        let types: Vec<TypeId> = choice.iter().zip(&cands).map(|(&i, c)| c[i]).collect();
        let consistent = p.edges.iter().all(|e| {
            let (s, d) = schema.edge_endpoints(e.etype);
            let (a, b) = (types[p.vertex_index(&e.src).expect("valid")], types[p.vertex_index(&e.dst).expect("valid")]);
            (a, b) == (s, d) || (e.both && (b, a) == (s, d))
        });
        if consistent {
            total = total.saturating_add(catalog.estimate_typed(&Typed::from_pattern(p, &types), schema));
        }
        let mut k = 0;
        loop {
            if k == choice.len() {
                return total;
            }
            choice[k] += 1;
            if choice[k] < cands[k].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}

/// Codes present in the catalog, for reporting.
pub fn sample_entries(c: &Catalog, n: usize) -> Vec<(String, u64)> {
    let mut by_size: BTreeSet<(usize, String)> = BTreeSet::new();
    for code in c.entries.keys() {
        by_size.insert((code.matches(',').count(), code.clone()));
    }
    by_size.into_iter().take(n).map(|(_, code)| {
        let v = c.entries[&code];
        (code, v)
    }).collect()
}

/// Builds a pattern edge list for tests and callers working with types.
pub fn typed_pattern(types: &[(&str, TypeId)], edges: &[(usize, usize, TypeId, bool)]) -> PatternGraph {
    let mut p = PatternGraph::default();
    for (a, t) in types {
        p.add_vertex(a, Some(*t));
    }
    for (i, &(s, d, et, both)) in edges.iter().enumerate() {
        p.edges.push(PatternEdge {
            src: types[s].0.to_string(),
            dst: types[d].0.to_string(),
            etype: et,
            both,
            pred: None,
            alias: format!("_c{i}"),
            named: false,
        });
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::match_count;
    use crate::store::build_immutable;
    use crate::testkit::{g0, random_schema, random_tables};

    #[test]
    fn g0_counts() {
        let store = g0();
        let snap = store.snapshot();
        let c = catalog_build(snap.as_ref(), 3).unwrap();
        let g = snap.schema();
        let f = |types: &[(&str, TypeId)], edges: &[(usize, usize, TypeId, bool)]| freq_estimate(&c, &typed_pattern(types, edges), g);
        assert_eq!(f(&[("a", 0)], &[]), 3);
        assert_eq!(f(&[("a", 1)], &[]), 2);
        assert_eq!(f(&[("a", 2)], &[]), 1);
        assert_eq!(f(&[("a", 0), ("b", 1)], &[(0, 1, 1, false)]), 4);
        assert_eq!(f(&[("a", 0), ("b", 0)], &[(0, 1, 0, false)]), 2);
        assert_eq!(f(&[("a", 2), ("b", 1)], &[(0, 1, 2, false)]), 2);
        assert_eq!(f(&[("a", 0), ("b", 0), ("c", 1)], &[(0, 1, 0, false), (1, 2, 1, false)]), 3);
        // Undirected Knows: each friendship counted from both sides.
        assert_eq!(f(&[("a", 0), ("b", 0)], &[(0, 1, 0, true)]), 4);
    }

    #[test]
    fn estimate_beyond_k_uses_extension_rates() {
        let store = g0();
        let snap = store.snapshot();
        let c = catalog_build(snap.as_ref(), 2).unwrap();
        let p = typed_pattern(&[("a", 0), ("b", 0), ("c", 1)], &[(0, 1, 0, false), (1, 2, 1, false)]);
        assert_eq!(freq_estimate(&c, &p, snap.schema()), 2);
    }

    #[test]
    fn canon_is_rename_invariant_and_direction_sensitive() {
        let g = crate::testkit::g0_schema();
        let a = typed_pattern(&[("a", 0), ("b", 0)], &[(0, 1, 0, false)]);
        let b = typed_pattern(&[("x", 0), ("y", 0)], &[(1, 0, 0, false)]);
        assert_eq!(pattern_canon(&a, &g).unwrap(), pattern_canon(&b, &g).unwrap());
        let chain = typed_pattern(&[("a", 0), ("b", 0), ("c", 1)], &[(0, 1, 0, false), (1, 2, 1, false)]);
        let rev = typed_pattern(&[("a", 0), ("b", 0), ("c", 1)], &[(1, 0, 0, false), (1, 2, 1, false)]);
        assert_ne!(pattern_canon(&chain, &g).unwrap(), pattern_canon(&rev, &g).unwrap());
        let big = typed_pattern(&(0..9).map(|i| (["a", "b", "c", "d", "e", "f", "g", "h", "i"][i], 0)).collect::<Vec<_>>(), &[]);
        assert!(matches!(pattern_canon(&big, &g), Err(OptError::PatternTooLarge(9))));
    }

    #[test]
    fn catalog_matches_oracle_on_random_graph() {
        let schema = random_schema();
        let store = build_immutable(&schema, &random_tables(7, 40, 120)).unwrap();
        let snap = store.snapshot();
        let c = catalog_build(snap.as_ref(), 3).unwrap();
        assert!(c.pattern_count() > 10);
        for (code, count) in c.entries.iter().take(60) {
            let p = pattern_from_code(code, &schema);
            assert_eq!(match_count(&p, snap.as_ref()).unwrap(), *count, "{code}");
        }
    }

    #[test]
    fn bound_is_enforced() {
        let store = g0();
        let snap = store.snapshot();
        assert!(matches!(catalog_build_bounded(snap.as_ref(), 3, 4), Err(OptError::CatalogTooLarge { .. })));
        assert!(matches!(catalog_build(snap.as_ref(), 5), Err(OptError::BadK(5))));
    }

    fn pattern_from_code(code: &str, schema: &PropertyGraphSchema) -> PatternGraph {
        let (head, body) = code.split_once('|').unwrap();
        let names = ["a", "b", "c", "d"];
        let types: Vec<(&str, TypeId)> =
            head.split(',').enumerate().map(|(i, t)| (names[i], schema.vertex_type_id(t).unwrap())).collect();
        let edges: Vec<(usize, usize, TypeId, bool)> = body
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|e| {
                let (ab, t) = e.split_once(':').unwrap();
                let (a, b) = ab.split_once('>').unwrap();
                (a.parse().unwrap(), b.parse().unwrap(), schema.edge_type_id(t).unwrap(), false)
            })
            .collect();
        typed_pattern(&types, &edges)
    }
}
