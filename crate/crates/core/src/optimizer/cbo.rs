//! Join-order search for MATCH patterns: exact DP over connected vertex
//! subsets, greedy above the subset cap, and lowering to expand chains.

use serde::Serialize;

use crate::ir::{Endpoint, Expr, LogicalOp, PatternGraph, PlanTree, VertexSource};
use crate::model::{CmpOp, PropertyGraphSchema};

use super::catalog::{freq_estimate, Catalog};

/// Patterns above this size fall back to greedy ordering.
pub const DP_MAX_VERTICES: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatchStep {
    StartScan { alias: String },
    /// Binds `to` through pattern edge `edge` from the bound `from`.
    ExpandNew { from: String, edge: usize, to: String },
    /// Checks pattern edge `edge` between two bound vertices.
    ExpandClose { from: String, edge: usize, existing: String },
}

#[derive(Clone, Debug, Serialize)]
pub struct MatchPlan {
    pub order: Vec<String>,
    pub steps: Vec<MatchStep>,
    /// Estimated frequency of each vertex-prefix subpattern.
    pub prefix_freq: Vec<u64>,
    pub cost: u64,
}

/// Selectivity of a vertex predicate: `1/count` when it pins the primary
/// key by equality, 1 otherwise.
fn selectivity(p: &PatternGraph, vi: usize, catalog: &Catalog, schema: &PropertyGraphSchema, use_pk: bool) -> f64 {
    let v = &p.vertices[vi];
    let (Some(pred), true) = (&v.pred, use_pk) else { return 1.0 };
    let Some(t) = p.effective_label(&v.alias, schema) else { return 1.0 };
    let pk = &schema.vertex_type(t).primary_key;
    let pins = pred.conjuncts().iter().any(|c| match c {
        Expr::Cmp(CmpOp::Eq, l, r) => {
            let is_pk = |e: &Expr| matches!(e, Expr::Prop(a, k) if *a == v.alias && k == pk);
            let is_const = |e: &Expr| matches!(e, Expr::Lit(_) | Expr::Param(_));
            (is_pk(l) && is_const(r)) || (is_pk(r) && is_const(l))
        }
        _ => false,
    });
    if pins {
        1.0 / catalog.vertex_counts.get(t as usize).copied().unwrap_or(1).max(1) as f64
    } else {
        1.0
    }
}

pub struct CostModel<'a> {
    pub pattern: &'a PatternGraph,
    pub catalog: &'a Catalog,
    pub schema: &'a PropertyGraphSchema,
    pub use_pk: bool,
}

impl CostModel<'_> {
    /// Estimated frequency of the subpattern induced by `subset`, scaled
    /// by predicate selectivity.
    pub fn subset_freq(&self, subset: &[usize]) -> f64 {
        let sub = self.pattern.induced(subset);
        let base = freq_estimate(self.catalog, &sub, self.schema) as f64;
        subset.iter().fold(base, |f, &v| f * selectivity(self.pattern, v, self.catalog, self.schema, self.use_pk))
    }

    fn mask_freq(&self, mask: u32) -> f64 {
        let subset: Vec<usize> = (0..self.pattern.vertices.len()).filter(|i| mask >> i & 1 == 1).collect();
        self.subset_freq(&subset)
    }

    /// Per-prefix frequencies and total cost of a vertex order.
    pub fn order_cost(&self, order: &[usize]) -> (Vec<f64>, f64) {
        let mut freqs = Vec::with_capacity(order.len());
        for i in 1..=order.len() {
            freqs.push(self.subset_freq(&order[..i]));
        }
        let total = freqs.iter().sum();
        (freqs, total)
    }

    fn adjacent(&self, mask: u32, v: usize) -> bool {
        let a = &self.pattern.vertices[v].alias;
        self.pattern.edges.iter().filter(|e| e.touches(a)).any(|e| {
            let o = self.pattern.vertex_index(e.other(a)).expect("validated pattern");
            mask >> o & 1 == 1
        })
    }

    fn alias_key(&self, order: &[usize]) -> Vec<&str> {
        order.iter().map(|&i| self.pattern.vertices[i].alias.as_str()).collect()
    }

    /// Exact minimum-cost connected order. Ties go to the lexicographically
    /// smallest alias sequence.
    pub fn dp_order(&self) -> Vec<usize> {
        let n = self.pattern.vertices.len();
        let full = (1u32 << n) - 1;
        let mut memo: Vec<Option<f64>> = vec![None; 1 << n];
        let mut best: Vec<Option<(f64, Vec<usize>)>> = vec![None; 1 << n];
        let freq = |mask: u32, memo: &mut Vec<Option<f64>>| -> f64 {
            *memo[mask as usize].get_or_insert_with(|| self.mask_freq(mask))
        };
        for v in 0..n {
            let m = 1u32 << v;
            best[m as usize] = Some((freq(m, &mut memo), vec![v]));
        }
        // Masks in increasing popcount order are processed before supersets
        // because a superset of `m` is numerically larger.
        for mask in 1..=full {
            let Some((cost, order)) = best[mask as usize].clone() else { continue };
            for v in 0..n {
                if mask >> v & 1 == 1 || !self.adjacent(mask, v) {
                    continue;
                }
                let next = mask | 1 << v;
                let c = cost + freq(next, &mut memo);
                let mut o = order.clone();
                o.push(v);
                let better = match &best[next as usize] {
                    None => true,
                    Some((bc, bo)) => c < *bc || (c == *bc && self.alias_key(&o) < self.alias_key(bo)),
                };
                if better {
                    best[next as usize] = Some((c, o));
                }
            }
        }
        best[full as usize].take().map(|(_, o)| o).unwrap_or_else(|| self.pattern.bfs_order())
    }

    /// Start at the cheapest single vertex and repeatedly add the adjacent
    /// vertex whose extended prefix is cheapest.
    pub fn greedy_order(&self) -> Vec<usize> {
        let n = self.pattern.vertices.len();
        let start = (0..n)
            .min_by(|&a, &b| self.subset_freq(&[a]).total_cmp(&self.subset_freq(&[b])).then(a.cmp(&b)))
            .expect("non-empty pattern");
        let mut order = vec![start];
        while order.len() < n {
            let mask: u32 = order.iter().fold(0, |m, &v| m | 1 << v);
            let next = (0..n)
                .filter(|&v| mask >> v & 1 == 0 && self.adjacent(mask, v))
                .map(|v| {
                    let mut o = order.clone();
                    o.push(v);
                    (self.subset_freq(&o), v)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .expect("connected pattern")
                .1;
            order.push(next);
        }
        order
    }

    /// Every order whose prefixes are all connected.
    pub fn connected_orders(&self) -> Vec<Vec<usize>> {
        let n = self.pattern.vertices.len();
        let mut out = Vec::new();
        fn rec(m: &CostModel<'_>, n: usize, cur: &mut Vec<usize>, mask: u32, out: &mut Vec<Vec<usize>>) {
            if cur.len() == n {
                out.push(cur.clone());
                return;
            }
            for v in 0..n {
                if mask >> v & 1 == 0 && (cur.is_empty() || m.adjacent(mask, v)) {
                    cur.push(v);
                    rec(m, n, cur, mask | 1 << v, out);
                    cur.pop();
                }
            }
        }
        rec(self, n, &mut Vec::new(), 0, &mut out);
        out
    }

    pub fn plan_for(&self, order: &[usize]) -> MatchPlan {
        let p = self.pattern;
        let alias = |i: usize| p.vertices[i].alias.clone();
        let mut steps = vec![MatchStep::StartScan { alias: alias(order[0]) }];
        for (k, &v) in order.iter().enumerate().skip(1) {
            let placed = &order[..k];
            let va = &p.vertices[v].alias;
            let mut first = true;
            for (ei, e) in p.edges.iter().enumerate() {
                if !e.touches(va) {
                    continue;
                }
                let o = p.vertex_index(e.other(va)).expect("validated pattern");
                if !placed.contains(&o) {
                    continue;
                }
                if first {
                    steps.push(MatchStep::ExpandNew { from: alias(o), edge: ei, to: va.clone() });
                    first = false;
                } else {
                    steps.push(MatchStep::ExpandClose { from: va.clone(), edge: ei, existing: alias(o) });
                }
            }
        }
        let (freqs, total) = self.order_cost(order);
        MatchPlan {
            order: order.iter().map(|&i| alias(i)).collect(),
            steps,
            prefix_freq: freqs.iter().map(|f| f.round() as u64).collect(),
            cost: total.ceil() as u64,
        }
    }
}

/// Cost-minimal plan for `pattern`.
pub fn cbo_order(pattern: &PatternGraph, catalog: &Catalog, schema: &PropertyGraphSchema) -> MatchPlan {
    let m = CostModel { pattern, catalog, schema, use_pk: true };
    let order = if pattern.vertices.len() <= DP_MAX_VERTICES { m.dp_order() } else { m.greedy_order() };
    m.plan_for(&order)
}

/// Lowers a plan to a linear chain of scan and expand operators.
pub fn lower_plan(pattern: &PatternGraph, plan: &MatchPlan, schema: &PropertyGraphSchema) -> PlanTree {
    let mut placed: Vec<String> = Vec::new();
    let mut tree: Option<PlanTree> = None;
    for step in &plan.steps {
        tree = Some(match step {
            MatchStep::StartScan { alias } => {
                let v = pattern.vertex(alias).expect("plan over pattern");
                placed.push(alias.clone());
                PlanTree::leaf(LogicalOp::GetVertex {
                    mode: VertexSource::Scan,
                    label: v.label.or_else(|| pattern.effective_label(alias, schema)),
                    pred: v.pred.clone(),
                    distinct_from: vec![],
                    out: alias.clone(),
                })
            }
            MatchStep::ExpandNew { from, edge, to } => {
                let e = &pattern.edges[*edge];
                let v = pattern.vertex(to).expect("plan over pattern");
                let expand = PlanTree::unary(
                    LogicalOp::ExpandEdge {
                        input: from.clone(),
                        dir: e.direction_from(from),
                        etype: e.etype,
                        pred: e.pred.clone(),
                        out: e.alias.clone(),
                        per_neighbor: !e.named,
                        close_with: None,
                    },
                    tree.take().expect("scan first"),
                );
                let get = LogicalOp::GetVertex {
                    mode: VertexSource::FromEdge { edge: e.alias.clone(), which: Endpoint::Other(from.clone()) },
                    label: v.label,
                    pred: v.pred.clone(),
                    distinct_from: placed.clone(),
                    out: to.clone(),
                };
                placed.push(to.clone());
                PlanTree::unary(get, expand)
            }
            MatchStep::ExpandClose { from, edge, existing } => {
                let e = &pattern.edges[*edge];
                PlanTree::unary(
                    LogicalOp::ExpandEdge {
                        input: from.clone(),
                        dir: e.direction_from(from),
                        etype: e.etype,
                        pred: e.pred.clone(),
                        out: e.alias.clone(),
                        per_neighbor: !e.named,
                        close_with: Some(existing.clone()),
                    },
                    tree.take().expect("scan first"),
                )
            }
        });
    }
    tree.expect("non-empty plan")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::reference::{canonical_rows, evaluate};
    use crate::ir::Expr;
    use crate::optimizer::catalog::{catalog_build, typed_pattern};
    use crate::store::build_immutable;
    use crate::testkit::{g0, random_schema, random_tables};
    use std::collections::HashMap;

    #[test]
    fn single_edge_starts_at_rarer_side() {
        let store = g0();
        let snap = store.snapshot();
        let c = catalog_build(snap.as_ref(), 2).unwrap();
        // Seller (1) is rarer than Item (2).
        let p = typed_pattern(&[("i", 1), ("s", 2)], &[(1, 0, 2, false)]);
        let plan = cbo_order(&p, &c, snap.schema());
        assert_eq!(plan.order, vec!["s", "i"]);
        assert_eq!(plan.cost, 1 + 2);
        // Buyer (3) vs Item (2) on Buy.
        let p = typed_pattern(&[("b", 0), ("i", 1)], &[(0, 1, 1, false)]);
        assert_eq!(cbo_order(&p, &c, snap.schema()).order, vec!["i", "b"]);
    }

    #[test]
    fn pk_equality_makes_a_cheap_start() {
        let store = g0();
        let snap = store.snapshot();
        let c = catalog_build(snap.as_ref(), 3).unwrap();
        let mut p = typed_pattern(&[("a", 0), ("b", 0), ("c", 1)], &[(0, 1, 0, false), (1, 2, 1, false)]);
        p.add_pred("a", Expr::cmp(CmpOp::Eq, Expr::prop("a", "username"), Expr::lit("A1")));
        let plan = cbo_order(&p, &c, snap.schema());
        assert_eq!(plan.order, vec!["a", "b", "c"]);
        assert!(matches!(plan.steps[1], MatchStep::ExpandNew { .. }));
    }

    #[test]
    fn dp_never_loses_to_enumeration() {
        let schema = random_schema();
        let shapes: Vec<PatternGraph> = vec![
            typed_pattern(&[("a", 0), ("b", 1), ("c", 2)], &[(0, 1, 1, false), (1, 2, 2, false)]),
            typed_pattern(&[("a", 0), ("b", 1), ("c", 2), ("d", 0)], &[(0, 1, 1, false), (1, 2, 2, false), (2, 3, 3, false)]),
            typed_pattern(&[("a", 0), ("b", 1), ("c", 2)], &[(0, 1, 1, false), (1, 2, 2, false), (2, 0, 3, false)]),
            typed_pattern(&[("a", 0), ("b", 0), ("c", 1), ("d", 0)], &[(0, 1, 0, true), (0, 2, 1, false), (3, 2, 1, false)]),
        ];
        for seed in 0..50 {
            let store = build_immutable(&schema, &random_tables(seed, 30, 90)).unwrap();
            let snap = store.snapshot();
            let c = catalog_build(snap.as_ref(), 2).unwrap();
            for p in &shapes {
                let m = CostModel { pattern: p, catalog: &c, schema: &schema, use_pk: true };
                let (_, dp) = m.order_cost(&m.dp_order());
                for o in m.connected_orders() {
                    assert!(dp <= m.order_cost(&o).1 + 1e-9, "seed {seed}");
                }
            }
        }
    }

    #[test]
    fn every_order_lowers_to_the_same_rows() {
        let schema = random_schema();
        let store = build_immutable(&schema, &random_tables(3, 40, 140)).unwrap();
        let snap = store.snapshot();
        let c = catalog_build(snap.as_ref(), 2).unwrap();
        let mut p = typed_pattern(&[("a", 0), ("b", 1), ("c", 2), ("d", 0)], &[(0, 1, 1, false), (1, 2, 2, false), (2, 3, 3, false), (0, 3, 0, true)]);
        p.edges[1].named = true;
        p.edges[1].alias = "r".into();
        let params = HashMap::new();
        let want = canonical_rows(evaluate(&PlanTree::leaf(LogicalOp::Match { pattern: p.clone() }), snap.as_ref(), &params).unwrap().1);
        let names: Vec<String> = p.output_schema(&schema).names();
        let m = CostModel { pattern: &p, catalog: &c, schema: &schema, use_pk: true };
        for o in m.connected_orders() {
            let tree = lower_plan(&p, &m.plan_for(&o), &schema);
            let items = names.iter().map(|n| (Expr::field(n), n.clone())).collect();
            let tree = PlanTree::unary(LogicalOp::Project { items }, tree);
            let got = canonical_rows(evaluate(&tree, snap.as_ref(), &params).unwrap().1);
            assert_eq!(got, want, "{o:?}");
        }
    }
}
