//! Rewrite rules: predicate push-down into graph operators and fusion of
//! edge expansion with endpoint extraction.

use std::collections::BTreeSet;

use crate::ir::{Endpoint, Expr, LogicalOp, PlanTree, VertexSource};

/// Field names a subtree outputs.
pub fn output_names(t: &PlanTree) -> Vec<String> {
    let input = || t.inputs.first().map(output_names).unwrap_or_default();
    match &t.op {
        LogicalOp::GetVertex { mode: VertexSource::Scan, out, .. } => vec![out.clone()],
        LogicalOp::GetVertex { out, .. }
        | LogicalOp::ExpandEdge { out, .. }
        | LogicalOp::ExpandVertex { out, .. }
        | LogicalOp::Path { out, .. } => {
            let mut v = input();
            v.push(out.clone());
            v
        }
        LogicalOp::Match { pattern } => pattern
            .vertices
            .iter()
            .map(|v| v.alias.clone())
            .chain(pattern.edges.iter().filter(|e| e.named).map(|e| e.alias.clone()))
            .collect(),
        LogicalOp::Project { items } => items.iter().map(|(_, n)| n.clone()).collect(),
        LogicalOp::Group { keys, aggs } => keys.iter().map(|(_, n)| n.clone()).chain(aggs.iter().map(|a| a.name.clone())).collect(),
        LogicalOp::Join { .. } => {
            let mut v = input();
            for n in output_names(&t.inputs[1]) {
                if !v.contains(&n) {
                    v.push(n);
                }
            }
            v
        }
        _ => input(),
    }
}

fn and_into(slot: &mut Option<Expr>, c: Expr) {
    *slot = Some(match slot.take() {
        None => c,
        Some(p) => Expr::and(p, c),
    });
}

/// Moves `c`, which reads only `alias`, to the operator that binds
/// `alias`. Passes through row-local operators only.
fn sink(t: &mut PlanTree, alias: &str, c: &Expr) -> bool {
    match &mut t.op {
        LogicalOp::Match { pattern } => {
            if pattern.vertex(alias).is_some() {
                return pattern.add_pred(alias, c.clone());
            }
            match pattern.edges.iter_mut().find(|e| e.alias == alias) {
                Some(e) => {
                    and_into(&mut e.pred, c.clone());
                    true
                }
                None => false,
            }
        }
        LogicalOp::GetVertex { out, pred, .. } | LogicalOp::ExpandVertex { out, pred, .. } if out == alias => {
            and_into(pred, c.clone());
            true
        }
        // Per-neighbor expansion filters before dedup, which changes which
        // edge survives; only plain expansions take edge predicates.
        LogicalOp::ExpandEdge { out, pred, per_neighbor: false, .. } if out == alias => {
            and_into(pred, c.clone());
            true
        }
        LogicalOp::GetVertex { out, .. }
        | LogicalOp::ExpandEdge { out, .. }
        | LogicalOp::ExpandVertex { out, .. }
        | LogicalOp::Path { out, .. }
            if out == alias =>
        {
            false
        }
        LogicalOp::GetVertex { mode: VertexSource::FromEdge { .. }, .. }
        | LogicalOp::ExpandEdge { .. }
        | LogicalOp::ExpandVertex { .. }
        | LogicalOp::Path { .. }
        | LogicalOp::Select { .. } => sink(&mut t.inputs[0], alias, c),
        LogicalOp::Join { .. } => {
            let side = if output_names(&t.inputs[0]).iter().any(|n| n == alias) { 0 } else { 1 };
            sink(&mut t.inputs[side], alias, c)
        }
        _ => false,
    }
}

/// Pushes single-alias conjuncts of every SELECT into the pattern vertex,
/// pattern edge or graph operator that binds the alias. Literal `true`
/// factors are dropped and emptied SELECTs removed.
pub fn rule_filter_push_into_match(t: &PlanTree) -> PlanTree {
    let mut inputs: Vec<PlanTree> = t.inputs.iter().map(rule_filter_push_into_match).collect();
    let LogicalOp::Select { pred } = &t.op else {
        return PlanTree { op: t.op.clone(), inputs };
    };
    let mut child = inputs.remove(0);
    let mut residual = Vec::new();
    for c in pred.conjuncts() {
        if c.is_true_literal() {
            continue;
        }
        let aliases = c.aliases();
        let pushed = aliases.len() == 1 && sink(&mut child, aliases.first().expect("one alias"), &c);
        if !pushed {
            residual.push(c);
        }
    }
    if residual.is_empty() {
        child
    } else {
        PlanTree::unary(LogicalOp::Select { pred: Expr::conjunction(residual) }, child)
    }
}

fn fuse(t: &PlanTree, live: &BTreeSet<String>, projected: bool, shards: u32) -> PlanTree {
    let mut op = t.op.clone();
    let mut inputs = t.inputs.clone();
    if let LogicalOp::GetVertex { mode: VertexSource::FromEdge { edge, which: Endpoint::Other(anchor) }, label, pred, distinct_from, out } = &t.op {
        if let LogicalOp::ExpandEdge { input, dir, etype, pred: None, out: e_out, per_neighbor, close_with: None } = &t.inputs[0].op {
            let edge_read = live.contains(edge) || pred.as_ref().is_some_and(|p| p.aliases().contains(edge));
            if e_out == edge && input == anchor && projected && !edge_read && (shards <= 1 || pred.is_none()) {
                op = LogicalOp::ExpandVertex {
                    input: input.clone(),
                    dir: *dir,
                    etype: *etype,
                    label: *label,
                    pred: pred.clone(),
                    distinct_from: distinct_from.clone(),
                    per_neighbor: *per_neighbor,
                    out: out.clone(),
                };
                inputs = t.inputs[0].inputs.clone();
            }
        }
    }
    let (child_live, child_projected) = match &op {
        LogicalOp::Project { .. } | LogicalOp::Group { .. } => (op.reads().into_iter().collect(), true),
        _ => {
            let mut l = live.clone();
            l.extend(op.reads());
            (l, projected)
        }
    };
    let inputs = inputs.iter().map(|c| fuse(c, &child_live, child_projected, shards)).collect();
    PlanTree { op, inputs }
}

/// Replaces EXPAND_EDGE + GET_VERTEX pairs with EXPAND_VERTEX when the
/// edge column is dead. With more than one shard, pairs whose vertex side
/// carries a predicate stay apart.
pub fn rule_edge_vertex_fusion(t: &PlanTree, shards: u32) -> PlanTree {
    fuse(t, &BTreeSet::new(), false, shards)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::cypher_parse;
    use crate::testkit::g0_schema;

    fn tree(q: &str) -> PlanTree {
        cypher_parse(q, &g0_schema()).unwrap().to_tree().unwrap()
    }

    #[test]
    fn single_alias_factor_moves_into_pattern() {
        let t = rule_filter_push_into_match(&tree(
            r#"MATCH (a:Buyer)-[:Knows]->(b:Buyer)-[:Buy]->(c:Item) WHERE a.username = "A1" RETURN c.price"#,
        ));
        assert_eq!(t.kinds(), vec!["MATCH", "PROJECT", "SINK"]);
        let LogicalOp::Match { pattern } = &t.inputs[0].inputs[0].op else { panic!() };
        assert!(pattern.vertex("a").unwrap().pred.is_some());
    }

    #[test]
    fn two_alias_factor_stays() {
        let t = rule_filter_push_into_match(&tree(
            "MATCH (a:Buyer)-[x:Buy]->(i:Item)<-[y:Buy]-(b:Buyer) WHERE x.date - y.date < 5 AND b.credits > 1 RETURN a",
        ));
        assert_eq!(t.kinds(), vec!["MATCH", "SELECT", "PROJECT", "SINK"]);
        let LogicalOp::Select { pred } = &t.inputs[0].inputs[0].op else { panic!() };
        assert_eq!(pred.to_string(), "x.date - y.date < 5");
    }

    #[test]
    fn true_select_disappears_and_rules_are_idempotent() {
        let base = tree("MATCH (a:Buyer) RETURN a");
        let with_true = PlanTree {
            op: base.op.clone(),
            inputs: vec![PlanTree {
                op: base.inputs[0].op.clone(),
                inputs: vec![PlanTree::unary(LogicalOp::Select { pred: Expr::lit(true) }, base.inputs[0].inputs[0].clone())],
            }],
        };
        let once = rule_filter_push_into_match(&with_true);
        assert_eq!(once, base);
        assert_eq!(rule_filter_push_into_match(&once), once);
    }

    #[test]
    fn aggregate_filter_is_not_pushed() {
        let t = tree("MATCH (a:Buyer)-[:Buy]->(i:Item) WITH a, COUNT(i) AS n WHERE n > 1 RETURN a");
        assert_eq!(rule_filter_push_into_match(&t), t);
    }
}
