//! Structural equivalence of logical plans modulo alias names and the
//! choice between MATCH and expand/get-vertex encodings of a pattern.

use std::collections::{BTreeSet, HashMap};

use crate::ir::{Endpoint, Expr, LogicalDag, LogicalOp, PatternEdge, PatternGraph, PlanTree, VertexSource};
use crate::model::{Direction, PropertyGraphSchema, TypeId};

/// An edge expanded from `anchor` whose far vertex is not bound yet.
#[derive(Clone)]
struct Pending {
    edge: String,
    anchor: String,
    dir: Direction,
    etype: TypeId,
    pred: Option<Expr>,
    named: bool,
}

#[derive(Clone, Default)]
struct Acc {
    pattern: PatternGraph,
    pending: Vec<Pending>,
    residual: Vec<Expr>,
}

enum Lifted {
    Graph(Acc),
    Tree(PlanTree),
}

fn absorb(mut acc: Acc, op: &LogicalOp, g: &PropertyGraphSchema) -> Option<Acc> {
    match op {
        LogicalOp::ExpandEdge { input, dir, etype, pred, out, per_neighbor, close_with } => {
            acc.pattern.vertex(input)?;
            match close_with {
                Some(b) => {
                    acc.pattern.vertex(b)?;
                    let (src, dst) = if *dir == Direction::In { (b, input) } else { (input, b) };
                    acc.pattern.edges.push(PatternEdge {
                        src: src.clone(),
                        dst: dst.clone(),
                        etype: *etype,
                        both: *dir == Direction::Both,
                        pred: pred.clone(),
                        alias: out.clone(),
                        named: !per_neighbor,
                    });
                }
                None => acc.pending.push(Pending {
                    edge: out.clone(),
                    anchor: input.clone(),
                    dir: *dir,
                    etype: *etype,
                    pred: pred.clone(),
                    named: !per_neighbor,
                }),
            }
            Some(acc)
        }
        LogicalOp::GetVertex { mode: VertexSource::FromEdge { edge, which }, label, pred, distinct_from, out } => {
            let i = acc.pending.iter().position(|p| p.edge == *edge)?;
            let p = acc.pending[i].clone();
            let far = match which {
                Endpoint::Other(a) => *a == p.anchor,
                Endpoint::End => p.dir == Direction::Out,
                Endpoint::Start => p.dir == Direction::In,
            };
            let bound: BTreeSet<&String> = acc.pattern.vertices.iter().map(|v| &v.alias).collect();
            let distinct: BTreeSet<&String> = distinct_from.iter().collect();
            if !far || bound != distinct {
                return None;
            }
            acc.pending.remove(i);
            add_far_vertex(&mut acc, &p, out, *label, pred.clone(), g);
            Some(acc)
        }
        LogicalOp::ExpandVertex { input, dir, etype, label, pred, distinct_from, per_neighbor, out } => {
            acc.pattern.vertex(input)?;
            let bound: BTreeSet<&String> = acc.pattern.vertices.iter().map(|v| &v.alias).collect();
            if bound != distinct_from.iter().collect() || !per_neighbor {
                return None;
            }
            let p = Pending { edge: format!("{out}#edge"), anchor: input.clone(), dir: *dir, etype: *etype, pred: None, named: false };
            add_far_vertex(&mut acc, &p, out, *label, pred.clone(), g);
            Some(acc)
        }
        LogicalOp::Select { pred } => {
            for c in pred.conjuncts() {
                let aliases = c.aliases();
                let only = (aliases.len() == 1).then(|| aliases.iter().next().cloned()).flatten();
                if let Some(a) = only {
                    if acc.pattern.vertex(&a).is_some() || acc.pattern.edges.iter().any(|e| e.alias == a && e.named) {
                        acc.pattern.add_pred(&a, c);
                        continue;
                    }
                    if let Some(p) = acc.pending.iter_mut().find(|p| p.edge == a && p.named) {
                        p.pred = Some(match p.pred.take() {
                            Some(q) => Expr::and(q, c),
                            None => c,
                        });
                        continue;
                    }
                }
                acc.residual.push(c);
            }
            Some(acc)
        }
        _ => None,
    }
}

fn add_far_vertex(acc: &mut Acc, p: &Pending, out: &str, label: Option<TypeId>, pred: Option<Expr>, g: &PropertyGraphSchema) {
    let (s, d) = g.edge_endpoints(p.etype);
    let implied = match p.dir {
        Direction::Out => Some(d),
        Direction::In => Some(s),
        Direction::Both => (s == d).then_some(s),
    };
    acc.pattern.add_vertex(out, label.or(implied));
    if let Some(pr) = pred {
        acc.pattern.add_pred(out, pr);
    }
    let (src, dst) = if p.dir == Direction::In { (out.to_string(), p.anchor.clone()) } else { (p.anchor.clone(), out.to_string()) };
    acc.pattern.edges.push(PatternEdge {
        src,
        dst,
        etype: p.etype,
        both: p.dir == Direction::Both,
        pred: p.pred.clone(),
        alias: p.edge.clone(),
        named: p.named,
    });
}

fn finalize(acc: Acc, g: &PropertyGraphSchema) -> Option<PlanTree> {
    if !acc.pending.is_empty() {
        return None;
    }
    let mut pattern = acc.pattern;
    let labels: Vec<Option<TypeId>> = pattern.vertices.iter().map(|v| pattern.effective_label(&v.alias, g)).collect();
    for (v, l) in pattern.vertices.iter_mut().zip(labels) {
        v.label = l;
    }
    let m = PlanTree::leaf(LogicalOp::Match { pattern });
    Some(if acc.residual.is_empty() { m } else { PlanTree::unary(LogicalOp::Select { pred: Expr::conjunction(acc.residual) }, m) })
}

fn lift(t: &PlanTree, g: &PropertyGraphSchema) -> Lifted {
    match &t.op {
        LogicalOp::Match { pattern } => return Lifted::Graph(Acc { pattern: pattern.clone(), ..Acc::default() }),
        LogicalOp::GetVertex { mode: VertexSource::Scan, label, pred, .. } if t.inputs.is_empty() => {
            let LogicalOp::GetVertex { out, .. } = &t.op else { unreachable!() };
            let mut acc = Acc::default();
            acc.pattern.add_vertex(out, *label);
            if let Some(p) = pred {
                acc.pattern.add_pred(out, p.clone());
            }
            return Lifted::Graph(acc);
        }
        _ => {}
    }
    let mut children = Vec::new();
    for c in &t.inputs {
        let l = lift(c, g);
        if let (Lifted::Graph(acc), 1) = (&l, t.inputs.len()) {
            if let Some(acc) = absorb(acc.clone(), &t.op, g) {
                return Lifted::Graph(acc);
            }
        }
        children.push(settle(l, c, g));
    }
    Lifted::Tree(PlanTree { op: t.op.clone(), inputs: children })
}

fn settle(l: Lifted, original: &PlanTree, g: &PropertyGraphSchema) -> PlanTree {
    match l {
        Lifted::Tree(t) => t,
        Lifted::Graph(acc) => finalize(acc, g).unwrap_or_else(|| original.clone()),
    }
}

struct Canon<'g> {
    g: &'g PropertyGraphSchema,
    map: HashMap<String, String>,
    vertices: usize,
    edges: usize,
    cols: usize,
}

fn sorted_conjuncts(e: &Expr, map: &HashMap<String, String>) -> String {
    let mut parts: Vec<String> = e.conjuncts().iter().map(|c| c.rename(map).to_string()).collect();
    parts.sort();
    parts.join(" AND ")
}

impl Canon<'_> {
    fn name(&mut self, old: &str, prefix: char) -> String {
        let n = match prefix {
            'v' => &mut self.vertices,
            'e' => &mut self.edges,
            _ => &mut self.cols,
        };
        let new = format!("{prefix}{n}");
        *n += 1;
        self.map.insert(old.to_string(), new.clone());
        new
    }

    fn pattern_encoding(&self, p: &PatternGraph, map: &HashMap<String, String>) -> (String, Vec<(String, usize)>) {
        let mut vs: Vec<String> = p
            .vertices
            .iter()
            .map(|v| {
                let label = v.label.map(|l| self.g.vertex_type(l).name.clone()).unwrap_or_default();
                let pred = v.pred.as_ref().map(|e| sorted_conjuncts(e, map)).unwrap_or_default();
                format!("({}:{label} {{{pred}}})", map[&v.alias])
            })
            .collect();
        vs.sort();
        let mut es: Vec<(String, usize)> = p
            .edges
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let mut self_map = map.clone();
                self_map.insert(e.alias.clone(), "_self".into());
                let pred = e.pred.as_ref().map(|x| sorted_conjuncts(x, &self_map)).unwrap_or_default();
                let (mut a, mut b) = (map[&e.src].clone(), map[&e.dst].clone());
                if e.both && a > b {
                    std::mem::swap(&mut a, &mut b);
                }
                let arrow = if e.both { "-" } else { "->" };
                let kind = if e.named { "named" } else { "anon" };
                (format!("({a})-[{}:{kind} {{{pred}}}]{arrow}({b})", self.g.edge_type(e.etype).name), i)
            })
            .collect();
        es.sort();
        let mut s = vs.join(",");
        s.push('|');
        s.push_str(&es.iter().map(|(t, _)| t.as_str()).collect::<Vec<_>>().join(","));
        (s, es)
    }

    fn pattern(&mut self, p: &PatternGraph) -> String {
        let free: Vec<usize> = (0..p.vertices.len()).filter(|&i| !self.map.contains_key(&p.vertices[i].alias)).collect();
        let base = self.vertices;
        let assign = |order: &[usize], map: &mut HashMap<String, String>| {
            for (k, &i) in order.iter().enumerate() {
                map.insert(p.vertices[i].alias.clone(), format!("v{}", base + k));
            }
        };
        let mut best: Option<(String, Vec<usize>)> = None;
        if free.len() <= 7 {
            let mut perm = free.clone();
            permutations(&mut perm, 0, &mut |order| {
                let mut m = self.map.clone();
                assign(order, &mut m);
                let (enc, _) = self.pattern_encoding(p, &m);
                if best.as_ref().is_none_or(|(b, _)| enc < *b) {
                    best = Some((enc, order.to_vec()));
                }
            });
        }
        let order = match best {
            Some((_, o)) => o,
            None => {
                let bfs = p.bfs_order();
                bfs.into_iter().filter(|i| free.contains(i)).collect()
            }
        };
        let mut m = self.map.clone();
        assign(&order, &mut m);
        self.vertices += order.len();
        self.map = m;
        let (enc, edges) = self.pattern_encoding(p, &self.map.clone());
        for (_, i) in edges {
            let e = &p.edges[i];
            if e.named {
                self.name(&e.alias, 'e');
            }
        }
        format!("MATCH[{enc}]")
    }

    fn render(&mut self, t: &PlanTree) -> String {
        let kids: Vec<String> = t.inputs.iter().map(|c| self.render(c)).collect();
        let map = self.map.clone();
        let rn = |e: &Expr| e.rename(&map).to_string();
        let body = match &t.op {
            LogicalOp::Match { pattern } => self.pattern(pattern),
            LogicalOp::Select { pred } => format!("SELECT[{}]", sorted_conjuncts(pred, &map)),
            LogicalOp::Project { items } => {
                let exprs: Vec<String> = items.iter().map(|(e, _)| rn(e)).collect();
                let names: Vec<String> = items.iter().map(|(_, n)| self.name(n, 'c')).collect();
                let parts: Vec<String> = exprs.iter().zip(&names).map(|(e, n)| format!("{e} AS {n}")).collect();
                format!("PROJECT[{}]", parts.join(", "))
            }
            LogicalOp::Group { keys, aggs } => {
                let mut parts = Vec::new();
                for (e, n) in keys {
                    let e = rn(e);
                    parts.push(format!("{e} AS {}", self.name(n, 'c')));
                }
                for a in aggs {
                    let e = rn(&a.expr());
                    parts.push(format!("{e} AS {}", self.name(&a.name, 'c')));
                }
                format!("GROUP[{}|{}]", keys.len(), parts.join(", "))
            }
            LogicalOp::Order { keys, limit } => {
                let ks: Vec<String> = keys.iter().map(|(e, d)| format!("{}{}", rn(e), if *d { " DESC" } else { "" })).collect();
                format!("ORDER[{}; {limit:?}]", ks.join(", "))
            }
            LogicalOp::Join { on } => {
                let mut on: Vec<String> = on.iter().map(|a| map.get(a).cloned().unwrap_or_else(|| a.clone())).collect();
                on.sort();
                format!("JOIN[{}]", on.join(","))
            }
            LogicalOp::Limit { n } => format!("LIMIT[{n}]"),
            LogicalOp::Sink => "SINK".into(),
            other => {
                let out = match other {
                    LogicalOp::GetVertex { out, .. } | LogicalOp::ExpandVertex { out, .. } => self.name(out, 'v'),
                    LogicalOp::ExpandEdge { out, .. } | LogicalOp::Path { out, .. } => self.name(out, 'e'),
                    _ => unreachable!("handled above"),
                };
                let _ = out;
                format!("{:?}", other.rename(&self.map))
            }
        };
        if kids.is_empty() {
            body
        } else {
            format!("{body}({})", kids.join(" ; "))
        }
    }
}

fn permutations(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permutations(v, k + 1, f);
        v.swap(k, i);
    }
}

/// A string that is equal for two plans iff they are the same query up to
/// alias names and pattern encoding.
pub fn canonical_form(dag: &LogicalDag) -> String {
    let g = dag.graph_schema();
    let Ok(tree) = dag.to_tree() else {
        return dag.to_json().to_string();
    };
    let lifted = settle(lift(&tree, g), &tree, g);
    let mut c = Canon { g, map: HashMap::new(), vertices: 0, edges: 0, cols: 0 };
    c.render(&lifted)
}

pub fn frontend_equivalence(a: &LogicalDag, b: &LogicalDag) -> bool {
    canonical_form(a) == canonical_form(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{cypher_parse, steps_to_dag, Steps};
    use crate::model::CmpOp;
    use crate::testkit::g0_schema;

    const Q: &str = r#"MATCH (a:Buyer)-[:Knows]->(b:Buyer)-[:Buy]->(c:Item) WHERE a.username = "A1" RETURN c.price"#;

    #[test]
    fn cypher_and_steps_agree() {
        let g = g0_schema();
        let c = cypher_parse(Q, &g).unwrap();
        let s = steps_to_dag(&Steps::new().v("Buyer").has("username", CmpOp::Eq, "A1").out("Knows").out("Buy").values("price"), &g).unwrap();
        assert_eq!(canonical_form(&c), canonical_form(&s));
    }

    #[test]
    fn renamed_aliases_are_equivalent() {
        let g = g0_schema();
        let a = cypher_parse(Q, &g).unwrap();
        let b = cypher_parse(
            r#"MATCH (z:Item)<-[:Buy]-(y:Buyer), (x:Buyer)-[:Knows]->(y) WHERE x.username = "A1" RETURN z.price AS p"#,
            &g,
        )
        .unwrap();
        assert!(frontend_equivalence(&a, &b));
    }

    #[test]
    fn different_constant_is_not_equivalent() {
        let g = g0_schema();
        let a = cypher_parse(Q, &g).unwrap();
        let b = cypher_parse(&Q.replace("A1", "A2"), &g).unwrap();
        assert!(!frontend_equivalence(&a, &b));
        let c = cypher_parse(&Q.replace("-[:Knows]->", "<-[:Knows]-"), &g).unwrap();
        assert!(!frontend_equivalence(&a, &c));
    }

    #[test]
    fn named_edges_differ_from_anonymous() {
        let g = g0_schema();
        let a = cypher_parse("MATCH (a:Buyer)-[r:Buy]->(c:Item) RETURN a", &g).unwrap();
        let b = cypher_parse("MATCH (a:Buyer)-[:Buy]->(c:Item) RETURN a", &g).unwrap();
        assert!(!frontend_equivalence(&a, &b));
        let s = steps_to_dag(&Steps::new().v("Buyer").as_("a").out_e("Buy").in_v().select(&["a"]), &g).unwrap();
        assert!(frontend_equivalence(&a, &s));
    }
}
