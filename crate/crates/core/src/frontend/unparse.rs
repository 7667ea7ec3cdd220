//! Renders parser-shaped plans back to Cypher text.

use crate::ir::{Endpoint, Expr, IrError, LogicalDag, LogicalOp, PatternGraph, PlanTree, VertexSource};
use crate::model::{CmpOp, Direction, PropertyGraphSchema};

struct Clause {
    text: String,
    filters: Vec<String>,
    /// Whether a WHERE may still be attached.
    open: bool,
}

fn ident(a: &str) -> String {
    let mut chars = a.chars();
    if chars.next().is_some_and(|c| c.is_alphabetic() || c == '_') && chars.all(|c| c.is_alphanumeric() || c == '_') {
        a.to_string()
    } else {
        format!("`{a}`")
    }
}

fn invalid<T>(msg: &str) -> Result<T, IrError> {
    Err(IrError::Invalid(format!("cannot unparse: {msg}")))
}

fn pattern_text(p: &PatternGraph, g: &PropertyGraphSchema, filters: &mut Vec<String>) -> String {
    let mut seen = std::collections::HashSet::new();
    let mut node = |alias: &str, seen: &mut std::collections::HashSet<String>| -> String {
        let v = p.vertex(alias).expect("validated pattern");
        if !seen.insert(alias.to_string()) {
            return format!("({})", ident(alias));
        }
        if let Some(pr) = &v.pred {
            filters.push(pr.to_string());
        }
        match v.label {
            Some(l) => format!("({}:{})", ident(alias), ident(&g.vertex_type(l).name)),
            None => format!("({})", ident(alias)),
        }
    };
    let mut parts = Vec::new();
    let mut edge_filters = Vec::new();
    for e in &p.edges {
        let a = node(&e.src, &mut seen);
        let b = node(&e.dst, &mut seen);
        let mut name = if e.named { ident(&e.alias) } else { String::new() };
        let mut inline = String::new();
        if let Some(pr) = &e.pred {
            match inline_map(pr, &e.alias) {
                Some(m) if !e.named => inline = format!(" {{{m}}}"),
                _ => {
                    name = ident(&e.alias);
                    edge_filters.push(pr.to_string());
                }
            }
        }
        let rel = format!("[{name}:{}{inline}]", ident(&g.edge_type(e.etype).name));
        parts.push(if e.both { format!("{a}-{rel}-{b}") } else { format!("{a}-{rel}->{b}") });
    }
    for v in &p.vertices {
        if !seen.contains(&v.alias) {
            parts.push(node(&v.alias, &mut seen));
        }
    }
    filters.extend(edge_filters);
    parts.join(", ")
}

/// `{k: v, ...}` when `pred` is a conjunction of equalities on `alias`.
fn inline_map(pred: &Expr, alias: &str) -> Option<String> {
    let mut parts = Vec::new();
    for c in pred.conjuncts() {
        match &c {
            Expr::Cmp(CmpOp::Eq, l, r) => match (l.as_ref(), r.as_ref()) {
                (Expr::Prop(a, k), v) if a == alias && !v.aliases().contains(alias) => parts.push(format!("{}: {v}", ident(k))),
                _ => return None,
            },
            _ => return None,
        }
    }
    Some(parts.join(", "))
}

fn items_text(items: &[(Expr, String)]) -> String {
    items.iter().map(|(e, n)| format!("{e} AS {}", ident(n))).collect::<Vec<_>>().join(", ")
}

fn walk(t: &PlanTree, g: &PropertyGraphSchema, last: bool, out: &mut Vec<Clause>) -> Result<(), IrError> {
    match &t.op {
        LogicalOp::Match { pattern } => {
            if !t.inputs.is_empty() {
                return invalid("MATCH with inputs");
            }
            let mut filters = Vec::new();
            let text = format!("MATCH {}", pattern_text(pattern, g, &mut filters));
            out.push(Clause { text, filters, open: true });
        }
        LogicalOp::Join { .. } => {
            walk(&t.inputs[0], g, false, out)?;
            let LogicalOp::Match { pattern } = &t.inputs[1].op else {
                return invalid("JOIN whose right side is not a MATCH");
            };
            let mut filters = Vec::new();
            let text = format!("MATCH {}", pattern_text(pattern, g, &mut filters));
            out.push(Clause { text, filters, open: true });
        }
        LogicalOp::GetVertex { mode: VertexSource::FromEdge { edge, which: Endpoint::End }, label, pred, out: v, .. } => {
            let path = &t.inputs[0];
            let LogicalOp::Path { input, dir, etype, min, max, out: p } = &path.op else {
                return invalid("GET_VERTEX outside a variable-length pattern");
            };
            if p != edge {
                return invalid("GET_VERTEX reads another path");
            }
            walk(&path.inputs[0], g, false, out)?;
            let lbl = label.map(|l| format!(":{}", ident(&g.vertex_type(l).name))).unwrap_or_default();
            let rel = format!("[{}:{}*{min}..{max}]", ident(p), ident(&g.edge_type(*etype).name));
            let text = match dir {
                Direction::Out => format!("MATCH ({})-{rel}->({}{lbl})", ident(input), ident(v)),
                Direction::In => format!("MATCH ({})<-{rel}-({}{lbl})", ident(input), ident(v)),
                Direction::Both => format!("MATCH ({})-{rel}-({}{lbl})", ident(input), ident(v)),
            };
            out.push(Clause { text, filters: pred.iter().map(|p| p.to_string()).collect(), open: true });
        }
        LogicalOp::Select { pred } => {
            walk(&t.inputs[0], g, false, out)?;
            match out.last_mut() {
                Some(c) if c.open => c.filters.push(pred.to_string()),
                _ => return invalid("SELECT without a clause to attach to"),
            }
        }
        LogicalOp::Project { items } => {
            walk(&t.inputs[0], g, false, out)?;
            let kw = if last { "RETURN" } else { "WITH" };
            out.push(Clause { text: format!("{kw} {}", items_text(items)), filters: vec![], open: !last });
        }
        LogicalOp::Group { keys, aggs } => {
            walk(&t.inputs[0], g, false, out)?;
            let kw = if last { "RETURN" } else { "WITH" };
            let text = if aggs.is_empty() {
                format!("{kw} DISTINCT {}", items_text(keys))
            } else {
                let mut items = keys.clone();
                items.extend(aggs.iter().map(|a| (a.expr(), a.name.clone())));
                format!("{kw} {}", items_text(&items))
            };
            out.push(Clause { text, filters: vec![], open: !last });
        }
        LogicalOp::Order { keys, limit } => {
            if !last {
                return invalid("ORDER before the final projection");
            }
            walk(&t.inputs[0], g, true, out)?;
            let ks: Vec<String> = keys.iter().map(|(e, d)| format!("{e}{}", if *d { " DESC" } else { "" })).collect();
            let c = out.last_mut().expect("projection emitted");
            c.text.push_str(&format!(" ORDER BY {}", ks.join(", ")));
            if let Some(n) = limit {
                c.text.push_str(&format!(" LIMIT {n}"));
            }
        }
        LogicalOp::Limit { n } => {
            if !last {
                return invalid("LIMIT before the final projection");
            }
            walk(&t.inputs[0], g, true, out)?;
            out.last_mut().expect("projection emitted").text.push_str(&format!(" LIMIT {n}"));
        }
        LogicalOp::Sink => walk(&t.inputs[0], g, true, out)?,
        other => return invalid(other.kind()),
    }
    Ok(())
}

/// Cypher text for a plan of the shape [`cypher_parse`](super::cypher_parse)
/// produces. Other shapes (optimized plans, step chains) are rejected.
pub fn unparse(dag: &LogicalDag) -> Result<String, IrError> {
    let tree = dag.to_tree()?;
    let mut clauses = Vec::new();
    walk(&tree, dag.graph_schema(), true, &mut clauses)?;
    let text: Vec<String> = clauses
        .into_iter()
        .map(|c| if c.filters.is_empty() { c.text } else { format!("{} WHERE {}", c.text, c.filters.join(" AND ")) })
        .collect();
    Ok(text.join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{cypher_parse, frontend_equivalence};
    use crate::testkit::g0_schema;

    #[test]
    fn round_trips() {
        let g = g0_schema();
        for q in [
            r#"MATCH (a:Buyer)-[:Knows]->(b:Buyer)-[:Buy]->(c:Item) WHERE a.username = "A1" RETURN c.price"#,
            "MATCH (a:Buyer)-[r:Buy]->(i:Item {id: 3}), (a)-[:Buy {date: 2}]->(j:Item) RETURN a.username AS u, r.date ORDER BY u DESC LIMIT 4",
            "MATCH (a:Buyer)-[:Knows]-(b:Buyer) WITH a, COUNT(b) AS n WHERE n >= 1 RETURN DISTINCT n",
            "MATCH (a:Buyer)-[p:Knows*1..3]->(b) WHERE a.credits > 10 RETURN b.username, COUNT(*) AS c",
            "MATCH (v:Buyer)-[:Buy]->(i:Item) WITH v, COUNT(i) AS c1 MATCH (v)-[:Knows]-(f:Buyer), (f)-[:Buy]->(j:Item) \
             WITH v, c1, COUNT(j) AS c2 WHERE c1 * $w + c2 > 1 RETURN v.username LIMIT 2",
        ] {
            let a = cypher_parse(q, &g).unwrap();
            let text = unparse(&a).unwrap();
            let b = cypher_parse(&text, &g).unwrap_or_else(|d| panic!("{text}: {d}"));
            assert!(frontend_equivalence(&a, &b), "{q}\n{text}");
        }
    }
}
