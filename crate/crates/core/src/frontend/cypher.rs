//! Cypher subset: parsing and lowering to the logical IR.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use crate::ir::{AggFunc, AggItem, ArithOp, Endpoint, Expr, FieldSchema, LogicalDag, LogicalOp, PatternEdge, PatternGraph, PlanTree, VertexSource};
use crate::model::{CmpOp, DataType, Direction, PropertyGraphSchema, TypeId, Value};

use super::lexer::{tokenize, Tok, Token};
use super::{Diagnostic, Pos};

/// A variable or property reference, kept for scope checks.
#[derive(Clone, Debug)]
struct Ref {
    alias: String,
    prop: Option<String>,
    pos: Pos,
}

#[derive(Clone, Debug)]
struct PExpr {
    expr: Expr,
    refs: Vec<Ref>,
    pos: Pos,
}

#[derive(Clone, Debug)]
struct NodePat {
    alias: Option<String>,
    label: Option<(String, Pos)>,
    props: Vec<(String, PExpr)>,
    pos: Pos,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Arrow {
    Right,
    Left,
    Undirected,
}

#[derive(Clone, Debug)]
struct RelPat {
    alias: Option<String>,
    etype: Option<(String, Pos)>,
    arrow: Arrow,
    range: Option<(u32, u32)>,
    props: Vec<(String, PExpr)>,
    pos: Pos,
}

#[derive(Clone, Debug, Default)]
struct Chain {
    nodes: Vec<NodePat>,
    rels: Vec<RelPat>,
}

#[derive(Clone, Debug)]
struct Item {
    expr: PExpr,
    alias: Option<String>,
}

#[derive(Clone, Debug)]
enum Clause {
    Match { chains: Vec<Chain>, filter: Option<PExpr>, pos: Pos },
    With { distinct: bool, items: Vec<Item>, filter: Option<PExpr>, pos: Pos },
    Return { distinct: bool, items: Vec<Item>, order: Vec<(PExpr, bool)>, limit: Option<u64>, pos: Pos },
}

struct Parser {
    toks: Vec<Token>,
    i: usize,
    refs: Vec<Ref>,
}

const RESERVED: [&str; 19] = [
    "MATCH", "WHERE", "WITH", "RETURN", "ORDER", "BY", "LIMIT", "AND", "OR", "NOT", "IN", "IS", "AS", "DISTINCT", "ASC", "DESC",
    "NULL", "TRUE", "FALSE",
];

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.i]
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.i + k).min(self.toks.len() - 1)].tok
    }

    fn pos(&self) -> Pos {
        self.peek().pos
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn describe(tok: &Tok) -> String {
        match tok {
            Tok::Ident { name, .. } => format!("'{name}'"),
            Tok::Int(i) => i.to_string(),
            Tok::Float(f) => f.to_string(),
            Tok::Str(s) => format!("\"{s}\""),
            Tok::Param(p) => format!("${p}"),
            Tok::Sym(s) => format!("'{s}'"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, Diagnostic> {
        Err(Diagnostic::at(self.pos(), msg))
    }

    fn unexpected<T>(&self, wanted: &str) -> Result<T, Diagnostic> {
        self.error(format!("expected {wanted}, found {}", Self::describe(&self.peek().tok)))
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident { name, quoted: false } if name.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), Diagnostic> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.unexpected(kw)
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        self.peek().tok == Tok::Sym(sym_static(s))
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), Diagnostic> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.unexpected(&format!("'{s}'"))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, Diagnostic> {
        match &self.peek().tok {
            Tok::Ident { name, quoted } if *quoted || !RESERVED.iter().any(|k| name.eq_ignore_ascii_case(k)) => {
                let n = name.clone();
                self.bump();
                Ok(n)
            }
            _ => self.unexpected(what),
        }
    }

    /// Identifier or reserved word; property and label names may be keywords.
    fn name(&mut self, what: &str) -> Result<String, Diagnostic> {
        match &self.peek().tok {
            Tok::Ident { name, .. } => {
                let n = name.clone();
                self.bump();
                Ok(n)
            }
            _ => self.unexpected(what),
        }
    }

    fn query(&mut self) -> Result<Vec<Clause>, Diagnostic> {
        let mut clauses = Vec::new();
        if !self.is_kw("MATCH") {
            return self.unexpected("MATCH");
        }
        loop {
            let pos = self.pos();
            if self.eat_kw("MATCH") {
                let mut chains = vec![self.chain()?];
                while self.eat_sym(",") {
                    chains.push(self.chain()?);
                }
                let filter = if self.eat_kw("WHERE") { Some(self.pexpr()?) } else { None };
                clauses.push(Clause::Match { chains, filter, pos });
            } else if self.eat_kw("WITH") {
                let distinct = self.eat_kw("DISTINCT");
                let items = self.items()?;
                let filter = if self.eat_kw("WHERE") { Some(self.pexpr()?) } else { None };
                clauses.push(Clause::With { distinct, items, filter, pos });
            } else if self.eat_kw("RETURN") {
                let distinct = self.eat_kw("DISTINCT");
                let items = self.items()?;
                let mut order = Vec::new();
                if self.eat_kw("ORDER") {
                    self.expect_kw("BY")?;
                    loop {
                        let key = self.pexpr()?;
                        let desc = if self.eat_kw("DESC") || self.eat_kw("DESCENDING") {
                            true
                        } else {
                            let _ = self.eat_kw("ASC") || self.eat_kw("ASCENDING");
                            false
                        };
                        order.push((key, desc));
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                }
                let limit = if self.eat_kw("LIMIT") {
                    match self.bump().tok {
                        Tok::Int(n) if n >= 0 => Some(n as u64),
                        _ => {
                            self.i -= 1;
                            return self.unexpected("a non-negative integer");
                        }
                    }
                } else {
                    None
                };
                clauses.push(Clause::Return { distinct, items, order, limit, pos });
                if self.peek().tok != Tok::Eof {
                    return self.unexpected("end of query after RETURN");
                }
                return Ok(clauses);
            } else if self.peek().tok == Tok::Eof {
                return self.error("query must end with RETURN");
            } else {
                return self.unexpected("MATCH, WITH or RETURN");
            }
        }
    }

    fn chain(&mut self) -> Result<Chain, Diagnostic> {
        let mut c = Chain { nodes: vec![self.node()?], rels: vec![] };
        while self.is_sym("-") || self.is_sym("<") {
            c.rels.push(self.rel()?);
            c.nodes.push(self.node()?);
        }
        Ok(c)
    }

    fn props(&mut self) -> Result<Vec<(String, PExpr)>, Diagnostic> {
        let mut out = Vec::new();
        if !self.eat_sym("{") {
            return Ok(out);
        }
        if self.eat_sym("}") {
            return Ok(out);
        }
        loop {
            let k = self.name("property name")?;
            self.expect_sym(":")?;
            out.push((k, self.pexpr()?));
            if self.eat_sym("}") {
                return Ok(out);
            }
            self.expect_sym(",")?;
        }
    }

    fn node(&mut self) -> Result<NodePat, Diagnostic> {
        let pos = self.pos();
        self.expect_sym("(")?;
        let alias = if matches!(self.peek().tok, Tok::Ident { .. }) { Some(self.ident("variable")?) } else { None };
        let label = if self.eat_sym(":") {
            let p = self.pos();
            Some((self.name("label")?, p))
        } else {
            None
        };
        let props = self.props()?;
        self.expect_sym(")")?;
        Ok(NodePat { alias, label, props, pos })
    }

    fn rel(&mut self) -> Result<RelPat, Diagnostic> {
        let pos = self.pos();
        let left = self.eat_sym("<");
        self.expect_sym("-")?;
        let mut r = RelPat { alias: None, etype: None, arrow: Arrow::Undirected, range: None, props: vec![], pos };
        if self.eat_sym("[") {
            if matches!(self.peek().tok, Tok::Ident { .. }) {
                r.alias = Some(self.ident("variable")?);
            }
            if self.eat_sym(":") {
                let p = self.pos();
                r.etype = Some((self.name("relationship type")?, p));
                if self.is_sym("|") {
                    return self.error("alternative relationship types are not supported");
                }
            }
            if self.eat_sym("*") {
                let star = self.pos();
                let lo = self.opt_u32()?;
                let (min, max) = if self.eat_sym("..") {
                    (lo.unwrap_or(1), self.opt_u32()?)
                } else {
                    (lo.unwrap_or(1), lo)
                };
                let Some(max) = max else {
                    return Err(Diagnostic::at(star, "variable-length relationships need an upper bound (*min..max)"));
                };
                if min > max {
                    return Err(Diagnostic::at(star, format!("empty hop range {min}..{max}")));
                }
                r.range = Some((min, max));
            }
            r.props = self.props()?;
            self.expect_sym("]")?;
        }
        self.expect_sym("-")?;
        let right = self.eat_sym(">");
        r.arrow = match (left, right) {
            (true, true) => return Err(Diagnostic::at(pos, "relationship cannot point both ways")),
            (true, false) => Arrow::Left,
            (false, true) => Arrow::Right,
            (false, false) => Arrow::Undirected,
        };
        Ok(r)
    }

    fn opt_u32(&mut self) -> Result<Option<u32>, Diagnostic> {
        match self.peek().tok {
            Tok::Int(n) if (0..=u32::MAX as i64).contains(&n) => {
                self.bump();
                Ok(Some(n as u32))
            }
            Tok::Int(_) => self.error("hop count out of range"),
            _ => Ok(None),
        }
    }

    fn items(&mut self) -> Result<Vec<Item>, Diagnostic> {
        let mut items = Vec::new();
        loop {
            let expr = self.pexpr()?;
            let alias = if self.eat_kw("AS") { Some(self.ident("column name")?) } else { None };
            items.push(Item { expr, alias });
            if !self.eat_sym(",") {
                return Ok(items);
            }
        }
    }

    fn pexpr(&mut self) -> Result<PExpr, Diagnostic> {
        let mark = self.refs.len();
        let pos = self.pos();
        let expr = self.or_expr()?;
        Ok(PExpr { expr, refs: self.refs.split_off(mark), pos })
    }

    fn or_expr(&mut self) -> Result<Expr, Diagnostic> {
        let mut e = self.and_expr()?;
        while self.eat_kw("OR") {
            e = Expr::Or(Box::new(e), Box::new(self.and_expr()?));
        }
        Ok(e)
    }

    fn and_expr(&mut self) -> Result<Expr, Diagnostic> {
        let mut e = self.not_expr()?;
        while self.eat_kw("AND") {
            e = Expr::and(e, self.not_expr()?);
        }
        Ok(e)
    }

    fn not_expr(&mut self) -> Result<Expr, Diagnostic> {
        if self.eat_kw("NOT") {
            return Ok(Expr::Not(Box::new(self.not_expr()?)));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> Result<Expr, Diagnostic> {
        let left = self.add_expr()?;
        let op = match &self.peek().tok {
            Tok::Sym("=") => Some(CmpOp::Eq),
            Tok::Sym("<>") | Tok::Sym("!=") => Some(CmpOp::Ne),
            Tok::Sym("<") => Some(CmpOp::Lt),
            Tok::Sym("<=") => Some(CmpOp::Le),
            Tok::Sym(">") => Some(CmpOp::Gt),
            Tok::Sym(">=") => Some(CmpOp::Ge),
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            return Ok(Expr::cmp(op, left, self.add_expr()?));
        }
        if self.eat_kw("IN") {
            return Ok(Expr::In(Box::new(left), Box::new(self.add_expr()?)));
        }
        if self.eat_kw("IS") {
            let negated = self.eat_kw("NOT");
            self.expect_kw("NULL")?;
            return Ok(Expr::IsNull(Box::new(left), negated));
        }
        Ok(left)
    }

    fn add_expr(&mut self) -> Result<Expr, Diagnostic> {
        let mut e = self.mul_expr()?;
        loop {
            let op = if self.eat_sym("+") {
                ArithOp::Add
            } else if self.eat_sym("-") {
                ArithOp::Sub
            } else {
                return Ok(e);
            };
            e = Expr::Arith(op, Box::new(e), Box::new(self.mul_expr()?));
        }
    }

    fn mul_expr(&mut self) -> Result<Expr, Diagnostic> {
        let mut e = self.unary()?;
        loop {
            let op = if self.eat_sym("*") {
                ArithOp::Mul
            } else if self.eat_sym("/") {
                ArithOp::Div
            } else if self.eat_sym("%") {
                ArithOp::Mod
            } else {
                return Ok(e);
            };
            e = Expr::Arith(op, Box::new(e), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr, Diagnostic> {
        if self.eat_sym("-") {
            return Ok(match self.unary()? {
                Expr::Lit(Value::Int64(i)) => Expr::Lit(Value::Int64(i.wrapping_neg())),
                Expr::Lit(Value::Float64(f)) => Expr::Lit(Value::Float64(-f)),
                e => Expr::Neg(Box::new(e)),
            });
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, Diagnostic> {
        let pos = self.pos();
        let tok = self.peek().tok.clone();
        match tok {
            Tok::Int(i) => {
                self.bump();
                Ok(Expr::Lit(Value::Int64(i)))
            }
            Tok::Float(f) => {
                self.bump();
                Ok(Expr::Lit(Value::Float64(f)))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Lit(Value::str(&s)))
            }
            Tok::Param(p) => {
                self.bump();
                Ok(Expr::Param(p))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.or_expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Sym("[") => {
                self.bump();
                let mut items = Vec::new();
                if !self.eat_sym("]") {
                    loop {
                        items.push(self.or_expr()?);
                        if self.eat_sym("]") {
                            break;
                        }
                        self.expect_sym(",")?;
                    }
                }
                if items.iter().all(|i| matches!(i, Expr::Lit(_))) {
                    let vals = items.into_iter().map(|i| if let Expr::Lit(v) = i { v } else { unreachable!() }).collect();
                    return Ok(Expr::Lit(Value::list(vals)));
                }
                Ok(Expr::List(items))
            }
            Tok::Ident { ref name, quoted: false } if name.eq_ignore_ascii_case("true") => {
                self.bump();
                Ok(Expr::Lit(Value::Bool(true)))
            }
            Tok::Ident { ref name, quoted: false } if name.eq_ignore_ascii_case("false") => {
                self.bump();
                Ok(Expr::Lit(Value::Bool(false)))
            }
            Tok::Ident { ref name, quoted: false } if name.eq_ignore_ascii_case("null") => {
                self.bump();
                Ok(Expr::Lit(Value::Null))
            }
            Tok::Ident { ref name, quoted } if !quoted && *self.peek_at(1) == Tok::Sym("(") => {
                let Some(func) = AggFunc::from_name(name) else {
                    return self.error(format!("unknown function {name}"));
                };
                self.bump();
                self.bump();
                if func == AggFunc::Count && self.eat_sym("*") {
                    self.expect_sym(")")?;
                    return Ok(Expr::Agg { func, arg: None, distinct: false });
                }
                let distinct = self.eat_kw("DISTINCT");
                let arg = self.or_expr()?;
                self.expect_sym(")")?;
                Ok(Expr::Agg { func, arg: Some(Box::new(arg)), distinct })
            }
            Tok::Ident { .. } => {
                let alias = self.ident("expression")?;
                if self.eat_sym(".") {
                    let prop = self.name("property name")?;
                    self.refs.push(Ref { alias: alias.clone(), prop: Some(prop.clone()), pos });
                    if self.is_sym(".") {
                        return self.error("nested property access is not supported");
                    }
                    Ok(Expr::Prop(alias, prop))
                } else {
                    self.refs.push(Ref { alias: alias.clone(), prop: None, pos });
                    Ok(Expr::Field(alias))
                }
            }
            _ => self.unexpected("expression"),
        }
    }
}

fn sym_static(s: &str) -> &'static str {
    match s {
        "(" => "(",
        ")" => ")",
        "[" => "[",
        "]" => "]",
        "{" => "{",
        "}" => "}",
        ":" => ":",
        "," => ",",
        "." => ".",
        "-" => "-",
        ">" => ">",
        "<" => "<",
        "=" => "=",
        "+" => "+",
        "*" => "*",
        "/" => "/",
        "%" => "%",
        "|" => "|",
        ".." => "..",
        _ => "",
    }
}

/// Clause-by-clause lowering state.
struct Lower<'s> {
    schema: &'s PropertyGraphSchema,
    cur: Option<PlanTree>,
    scope: FieldSchema,
    used: HashSet<String>,
}

impl<'s> Lower<'s> {
    fn fresh(&mut self, prefix: &str) -> String {
        let mut n = 0;
        loop {
            let name = format!("_{prefix}{n}");
            if self.used.insert(name.clone()) {
                return name;
            }
            n += 1;
        }
    }

    fn push(&mut self, op: LogicalOp, pos: Pos) -> Result<(), Diagnostic> {
        let cur = self.cur.take().ok_or_else(|| Diagnostic::at(pos, "clause has no input"))?;
        let next = op.infer_schema(&[&self.scope], self.schema).map_err(|e| Diagnostic::at(pos, e.to_string()))?;
        self.cur = Some(PlanTree::unary(op, cur));
        self.scope = next;
        Ok(())
    }

    fn check_refs(&self, refs: &[Ref], scope: &FieldSchema) -> Result<(), Diagnostic> {
        for r in refs {
            let Some(f) = scope.get(&r.alias) else {
                return Err(Diagnostic::at(r.pos, format!("unknown variable '{}'", r.alias)));
            };
            if let Some(p) = &r.prop {
                self.check_prop(&f.dtype, f.label, &r.alias, p, r.pos)?;
            }
        }
        Ok(())
    }

    fn check_prop(&self, dtype: &DataType, label: Option<TypeId>, alias: &str, prop: &str, pos: Pos) -> Result<(), Diagnostic> {
        let s = self.schema;
        let ok = match (dtype, label) {
            (DataType::Vertex, Some(t)) => {
                if s.vertex_prop_index(t, prop).is_none() {
                    return Err(Diagnostic::at(pos, format!("{} has no property '{prop}'", s.vertex_type(t).name)));
                }
                true
            }
            (DataType::Edge, Some(t)) => {
                if s.edge_prop_index(t, prop).is_none() {
                    return Err(Diagnostic::at(pos, format!("{} has no property '{prop}'", s.edge_type(t).name)));
                }
                true
            }
            (DataType::Vertex, None) => s.vertex_types.iter().any(|t| t.properties.iter().any(|p| p.name == prop)),
            (DataType::Edge, None) => s.edge_types.iter().any(|t| t.properties.iter().any(|p| p.name == prop)),
            (DataType::Null, _) => true,
            (other, _) => return Err(Diagnostic::at(pos, format!("'{alias}' is a {other}, not a vertex or edge"))),
        };
        if ok {
            Ok(())
        } else {
            Err(Diagnostic::at(pos, format!("no type has property '{prop}'")))
        }
    }

    fn vertex_label(&self, name: &str, pos: Pos) -> Result<TypeId, Diagnostic> {
        self.schema.vertex_type_id(name).ok_or_else(|| Diagnostic::at(pos, format!("unknown label \"{name}\"")))
    }

    fn edge_label(&self, rel: &RelPat) -> Result<TypeId, Diagnostic> {
        let Some((name, pos)) = &rel.etype else {
            return Err(Diagnostic::at(rel.pos, "relationship type required, e.g. -[:TYPE]->"));
        };
        self.schema.edge_type_id(name).ok_or_else(|| Diagnostic::at(*pos, format!("unknown relationship type \"{name}\"")))
    }

    /// Inline `{k: v}` map as a conjunction over `alias`.
    fn inline_pred(
        &self,
        alias: &str,
        dtype: DataType,
        label: Option<TypeId>,
        props: &[(String, PExpr)],
    ) -> Result<Vec<Expr>, Diagnostic> {
        let mut out = Vec::new();
        for (k, v) in props {
            self.check_prop(&dtype, label, alias, k, v.pos)?;
            self.check_refs(&v.refs, &self.scope)?;
            out.push(Expr::cmp(CmpOp::Eq, Expr::prop(alias, k), v.expr.clone()));
        }
        Ok(out)
    }

    fn lower_match(&mut self, chains: &[Chain], filter: Option<&PExpr>, pos: Pos) -> Result<(), Diagnostic> {
        struct PV {
            alias: String,
            label: Option<TypeId>,
            preds: Vec<Expr>,
            bound: bool,
        }
        let mut verts: Vec<PV> = Vec::new();
        let mut occurrences: HashMap<String, usize> = HashMap::new();
        let mut chain_aliases: Vec<Vec<String>> = Vec::new();
        for chain in chains {
            let mut names = Vec::new();
            for node in &chain.nodes {
                let alias = match &node.alias {
                    Some(a) => a.clone(),
                    None => self.fresh("v"),
                };
                let given = node.label.as_ref().map(|(n, p)| self.vertex_label(n, *p)).transpose()?;
                let bound = match self.scope.get(&alias) {
                    Some(f) if f.dtype == DataType::Vertex => Some(f.label),
                    Some(f) => return Err(Diagnostic::at(node.pos, format!("'{alias}' is a {}, not a vertex", f.dtype))),
                    None => None,
                };
                let idx = match verts.iter().position(|v| v.alias == alias) {
                    Some(i) => i,
                    None => {
                        verts.push(PV { alias: alias.clone(), label: bound.flatten(), preds: vec![], bound: bound.is_some() });
                        verts.len() - 1
                    }
                };
                if let Some(g) = given {
                    match verts[idx].label {
                        Some(l) if l != g => {
                            return Err(Diagnostic::at(node.pos, format!("conflicting labels for '{alias}'")));
                        }
                        _ => verts[idx].label = Some(g),
                    }
                }
                let preds = self.inline_pred(&alias, DataType::Vertex, verts[idx].label, &node.props)?;
                verts[idx].preds.extend(preds);
                names.push(alias);
            }
            // A variable-length end must touch no other relationship, so count
            // incident relationships rather than textual mentions.
            for (i, n) in names.iter().enumerate() {
                let incident = usize::from(i > 0) + usize::from(i + 1 < names.len());
                *occurrences.entry(n.clone()).or_default() += incident;
            }
            chain_aliases.push(names);
        }

        let mut fixed: Vec<PatternEdge> = Vec::new();
        struct VarRel {
            anchor: String,
            fresh: String,
            dir: Direction,
            etype: TypeId,
            min: u32,
            max: u32,
            alias: String,
        }
        let mut var: Vec<VarRel> = Vec::new();
        for (chain, names) in chains.iter().zip(&chain_aliases) {
            for (i, rel) in chain.rels.iter().enumerate() {
                let (x, y) = (&names[i], &names[i + 1]);
                let etype = self.edge_label(rel)?;
                let alias = match &rel.alias {
                    Some(a) => {
                        if self.scope.get(a).is_some() {
                            return Err(Diagnostic::at(rel.pos, format!("'{a}' is already bound")));
                        }
                        a.clone()
                    }
                    None => self.fresh(if rel.range.is_some() { "p" } else { "e" }),
                };
                if let Some((min, max)) = rel.range {
                    if !rel.props.is_empty() {
                        return Err(Diagnostic::at(rel.pos, "properties on variable-length relationships are not supported"));
                    }
                    let is_fresh = |a: &String| occurrences.get(a) == Some(&1) && self.scope.get(a).is_none();
                    let (anchor, fresh) = if is_fresh(y) {
                        (x.clone(), y.clone())
                    } else if is_fresh(x) {
                        (y.clone(), x.clone())
                    } else {
                        return Err(Diagnostic::at(rel.pos, "a variable-length relationship must end at a new variable"));
                    };
                    let dir = match rel.arrow {
                        Arrow::Undirected => Direction::Both,
                        Arrow::Right if &anchor == x => Direction::Out,
                        Arrow::Left if &anchor == y => Direction::Out,
                        _ => Direction::In,
                    };
                    var.push(VarRel { anchor, fresh, dir, etype, min, max, alias });
                    continue;
                }
                let (src, dst) = match rel.arrow {
                    Arrow::Left => (y.clone(), x.clone()),
                    _ => (x.clone(), y.clone()),
                };
                if src == dst {
                    return Err(Diagnostic::at(rel.pos, "a relationship cannot connect a variable to itself"));
                }
                let mut pe = PatternEdge {
                    src,
                    dst,
                    etype,
                    both: rel.arrow == Arrow::Undirected,
                    pred: None,
                    alias: alias.clone(),
                    named: rel.alias.is_some(),
                };
                let preds = self.inline_pred(&alias, DataType::Edge, Some(etype), &rel.props)?;
                if !preds.is_empty() {
                    pe.pred = Some(Expr::conjunction(preds));
                }
                fixed.push(pe);
            }
        }
        let fresh_ends: HashSet<&str> = var.iter().map(|v| v.fresh.as_str()).collect();

        // Connected components over fixed edges, in order of first appearance.
        let members: Vec<&PV> = verts.iter().filter(|v| !fresh_ends.contains(v.alias.as_str())).collect();
        let mut comp: HashMap<&str, usize> = HashMap::new();
        let mut n_comp = 0;
        for v in &members {
            if comp.contains_key(v.alias.as_str()) {
                continue;
            }
            let c = n_comp;
            n_comp += 1;
            let mut stack = vec![v.alias.as_str()];
            comp.insert(v.alias.as_str(), c);
            while let Some(a) = stack.pop() {
                for e in fixed.iter().filter(|e| e.touches(a)) {
                    let o = e.other(a);
                    if !comp.contains_key(o) {
                        comp.insert(o, c);
                        stack.push(o);
                    }
                }
            }
        }
        let mut residual: Vec<Expr> = Vec::new();
        for c in 0..n_comp {
            let cv: Vec<&&PV> = members.iter().filter(|v| comp[v.alias.as_str()] == c).collect();
            let ce: Vec<&PatternEdge> = fixed.iter().filter(|e| comp[e.src.as_str()] == c).collect();
            if ce.is_empty() && cv.len() == 1 && cv[0].bound {
                residual.extend(cv[0].preds.iter().cloned());
                continue;
            }
            let mut pattern = PatternGraph::default();
            for v in &cv {
                pattern.add_vertex(&v.alias, v.label);
                if !v.preds.is_empty() {
                    pattern.add_pred(&v.alias, Expr::conjunction(v.preds.clone()));
                }
            }
            pattern.edges = ce.into_iter().cloned().collect();
            for v in &mut pattern.vertices {
                if v.label.is_none() {
                    v.label = None;
                }
            }
            pattern.validate(self.schema).map_err(|e| Diagnostic::at(pos, e.to_string()))?;
            let shared: Vec<String> = cv.iter().filter(|v| v.bound).map(|v| v.alias.clone()).collect();
            let op = LogicalOp::Match { pattern };
            let mschema = op.infer_schema(&[], self.schema).map_err(|e| Diagnostic::at(pos, e.to_string()))?;
            match self.cur.take() {
                None => {
                    self.cur = Some(PlanTree::leaf(op));
                    self.scope = mschema;
                }
                Some(left) => {
                    let join = LogicalOp::Join { on: shared };
                    let next = join.infer_schema(&[&self.scope, &mschema], self.schema).map_err(|e| Diagnostic::at(pos, e.to_string()))?;
                    self.cur = Some(PlanTree { op: join, inputs: vec![left, PlanTree::leaf(op)] });
                    self.scope = next;
                }
            }
        }
        for v in var {
            let fresh = verts.iter().find(|p| p.alias == v.fresh).expect("recorded");
            let (s, d) = self.schema.edge_endpoints(v.etype);
            let implied = match v.dir {
                Direction::Out => Some(d),
                Direction::In => Some(s),
                Direction::Both => (s == d).then_some(s),
            };
            let label = fresh.label.or(implied);
            let pred = if fresh.preds.is_empty() { None } else { Some(Expr::conjunction(fresh.preds.clone())) };
            self.push(
                LogicalOp::Path { input: v.anchor, dir: v.dir, etype: v.etype, min: v.min, max: v.max, out: v.alias.clone() },
                pos,
            )?;
            self.push(
                LogicalOp::GetVertex {
                    mode: VertexSource::FromEdge { edge: v.alias, which: Endpoint::End },
                    label,
                    pred,
                    distinct_from: vec![],
                    out: v.fresh,
                },
                pos,
            )?;
        }
        if !residual.is_empty() {
            self.push(LogicalOp::Select { pred: Expr::conjunction(residual) }, pos)?;
        }
        if let Some(f) = filter {
            self.check_refs(&f.refs, &self.scope)?;
            self.push(LogicalOp::Select { pred: f.expr.clone() }, f.pos)?;
        }
        Ok(())
    }

    fn lower_projection(&mut self, items: &[Item], distinct: bool, pos: Pos) -> Result<Vec<(Expr, String)>, Diagnostic> {
        let mut named: Vec<(Expr, String)> = Vec::new();
        for it in items {
            self.check_refs(&it.expr.refs, &self.scope)?;
            let name = it.alias.clone().unwrap_or_else(|| it.expr.expr.default_name());
            if named.iter().any(|(_, n)| *n == name) {
                return Err(Diagnostic::at(it.expr.pos, format!("duplicate column name '{name}'")));
            }
            let top_agg = matches!(it.expr.expr, Expr::Agg { .. });
            let nested = it.expr.expr.children().iter().any(|c| c.contains_agg())
                || (!top_agg && it.expr.expr.contains_agg());
            if nested {
                return Err(Diagnostic::at(it.expr.pos, "an aggregate must form the whole item; compute over it in a later WITH"));
            }
            named.push((it.expr.expr.clone(), name));
        }
        let any_agg = named.iter().any(|(e, _)| matches!(e, Expr::Agg { .. }));
        let op = if any_agg {
            let keys = named.iter().filter(|(e, _)| !matches!(e, Expr::Agg { .. })).cloned().collect();
            let aggs = named
                .iter()
                .filter_map(|(e, n)| match e {
                    Expr::Agg { func, arg, distinct } => {
                        Some(AggItem { func: *func, arg: arg.as_deref().cloned(), distinct: *distinct, name: n.clone() })
                    }
                    _ => None,
                })
                .collect();
            LogicalOp::Group { keys, aggs }
        } else if distinct {
            LogicalOp::Group { keys: named.clone(), aggs: vec![] }
        } else {
            LogicalOp::Project { items: named.clone() }
        };
        self.push(op, pos)?;
        Ok(named)
    }
}

fn lower(clauses: &[Clause], schema: &PropertyGraphSchema, used: HashSet<String>) -> Result<PlanTree, Diagnostic> {
    let mut l = Lower { schema, cur: None, scope: FieldSchema::default(), used };
    for clause in clauses {
        match clause {
            Clause::Match { chains, filter, pos } => l.lower_match(chains, filter.as_ref(), *pos)?,
            Clause::With { distinct, items, filter, pos } => {
                l.lower_projection(items, *distinct, *pos)?;
                if let Some(f) = filter {
                    l.check_refs(&f.refs, &l.scope)?;
                    l.push(LogicalOp::Select { pred: f.expr.clone() }, f.pos)?;
                }
            }
            Clause::Return { distinct, items, order, limit, pos } => {
                let named = l.lower_projection(items, *distinct, *pos)?;
                if !order.is_empty() {
                    let mut keys = Vec::new();
                    for (k, desc) in order {
                        let key = match named.iter().find(|(e, _)| *e == k.expr) {
                            Some((_, n)) => Expr::Field(n.clone()),
                            None => {
                                l.check_refs(&k.refs, &l.scope).map_err(|d| {
                                    Diagnostic::new(d.line, d.col, format!("ORDER BY must refer to returned columns: {}", d.message))
                                })?;
                                k.expr.clone()
                            }
                        };
                        keys.push((key, *desc));
                    }
                    l.push(LogicalOp::Order { keys, limit: *limit }, *pos)?;
                } else if let Some(n) = limit {
                    l.push(LogicalOp::Limit { n: *n }, *pos)?;
                }
                l.push(LogicalOp::Sink, *pos)?;
            }
        }
    }
    l.cur.ok_or_else(|| Diagnostic::new(1, 1, "empty query"))
}

/// Parses and lowers a Cypher-subset query. Every failure, lexical,
/// syntactic or semantic, is a [`Diagnostic`] with a source position.
pub fn cypher_parse(text: &str, schema: &PropertyGraphSchema) -> Result<LogicalDag, Diagnostic> {
    let toks = tokenize(text)?;
    let used: HashSet<String> = toks
        .iter()
        .filter_map(|t| match &t.tok {
            Tok::Ident { name, .. } => Some(name.clone()),
            _ => None,
        })
        .collect();
    let mut p = Parser { toks, i: 0, refs: vec![] };
    let clauses = p.query()?;
    let tree = lower(&clauses, schema, used)?;
    LogicalDag::from_tree(Arc::new(schema.clone()), &tree).map_err(|e| Diagnostic::new(1, 1, e.to_string()))
}

/// Parses comma-separated pattern chains into one connected pattern,
/// generating aliases with `prefix`. Returns the pattern and the alias of
/// the last node written.
pub fn parse_pattern(text: &str, schema: &PropertyGraphSchema, used: &mut HashSet<String>) -> Result<(PatternGraph, String), Diagnostic> {
    let toks = tokenize(text)?;
    for t in &toks {
        if let Tok::Ident { name, .. } = &t.tok {
            used.insert(name.clone());
        }
    }
    let mut p = Parser { toks, i: 0, refs: vec![] };
    let mut chains = vec![p.chain()?];
    while p.eat_sym(",") {
        chains.push(p.chain()?);
    }
    if p.peek().tok != Tok::Eof {
        return p.unexpected("end of pattern");
    }
    if chains.iter().any(|c| c.rels.iter().any(|r| r.range.is_some())) {
        return Err(Diagnostic::new(1, 1, "variable-length relationships are not supported in match()"));
    }
    let mut l = Lower { schema, cur: None, scope: FieldSchema::default(), used: std::mem::take(used) };
    let pos = Pos { line: 1, col: 1 };
    l.lower_match(&chains, None, pos)?;
    *used = std::mem::take(&mut l.used);
    match l.cur {
        Some(PlanTree { op: LogicalOp::Match { pattern }, .. }) => {
            let last = chains.last().and_then(|c| c.nodes.last()).and_then(|n| n.alias.clone());
            let last = last.unwrap_or_else(|| pattern.vertices.last().expect("non-empty").alias.clone());
            Ok((pattern, last))
        }
        _ => Err(Diagnostic::at(pos, "match() needs one connected pattern")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::g0_schema;

    const CHAIN_QUERY: &str = r#"MATCH (a:Buyer)-[:Knows]->(b:Buyer)-[:Buy]->(c:Item) WHERE a.username = "A1" RETURN c.price"#;

    #[test]
    fn friend_purchase_query_shape() {
        let dag = cypher_parse(CHAIN_QUERY, &g0_schema()).unwrap();
        assert_eq!(dag.kinds(), vec!["MATCH", "SELECT", "PROJECT", "SINK"]);
        let g = g0_schema();
        let tree = dag.to_tree().unwrap();
        let m = &tree.inputs[0].inputs[0].inputs[0];
        let schema = m.op.infer_schema(&[], &g).unwrap();
        assert_eq!(schema.render(&g), "[a:Buyer, b:Buyer, c:Item]");
        assert_eq!(dag.output_schema().unwrap().to_string(), "[c.price:float64]");
    }

    #[test]
    fn unknown_label_is_a_diagnostic() {
        let d = cypher_parse("MATCH (x:Nope) RETURN x", &g0_schema()).unwrap_err();
        assert_eq!((d.line, d.col), (1, 10));
        assert!(d.message.contains("unknown label \"Nope\""), "{d}");
    }

    #[test]
    fn diagnostics_carry_positions() {
        let g = g0_schema();
        let d = cypher_parse("MATCH (a:Buyer)\nRETURN a.price", &g).unwrap_err();
        assert_eq!((d.line, d.col), (2, 8));
        assert!(d.message.contains("Buyer has no property 'price'"));
        let d = cypher_parse("MATCH (a:Buyer RETURN a", &g).unwrap_err();
        assert_eq!((d.line, d.col), (1, 16));
        let d = cypher_parse("MATCH (a:Buyer) RETURN b", &g).unwrap_err();
        assert!(d.message.contains("unknown variable 'b'"));
        assert!(cypher_parse("", &g).is_err());
        assert!(cypher_parse("MATCH (a)-->(b) RETURN a", &g).is_err());
    }

    #[test]
    fn aggregates_order_limit() {
        let g = g0_schema();
        let dag = cypher_parse(
            "MATCH (a:Buyer)-[:Buy]->(i:Item) WITH a, COUNT(i) AS n WHERE n > 1 RETURN a.username AS u, n ORDER BY n DESC LIMIT 2",
            &g,
        )
        .unwrap();
        assert_eq!(dag.kinds(), vec!["MATCH", "GROUP", "SELECT", "PROJECT", "ORDER", "SINK"]);
        let dag = cypher_parse("MATCH (a:Buyer) RETURN DISTINCT a.credits LIMIT 1", &g).unwrap();
        assert_eq!(dag.kinds(), vec!["MATCH", "GROUP", "LIMIT", "SINK"]);
    }

    #[test]
    fn variable_length_and_undirected() {
        let g = g0_schema();
        let dag = cypher_parse("MATCH (a:Buyer)-[p:Knows*1..2]->(b) RETURN b.username", &g).unwrap();
        assert_eq!(dag.kinds(), vec!["MATCH", "PATH", "GET_VERTEX", "PROJECT", "SINK"]);
        let dag = cypher_parse("MATCH (a:Buyer)-[:Knows]-(b:Buyer) RETURN a, b", &g).unwrap();
        let tree = dag.to_tree().unwrap();
        let LogicalOp::Match { pattern } = &tree.inputs[0].inputs[0].op else { panic!() };
        assert!(pattern.edges[0].both);
    }

    #[test]
    fn second_match_joins_on_bound_alias() {
        let g = g0_schema();
        let q = "MATCH (v:Buyer)-[:Buy]->(i:Item) WITH v, COUNT(i) AS c1 \
                 MATCH (v)-[:Knows]-(f:Buyer), (f)-[:Buy]->(j:Item) WITH v, c1, COUNT(j) AS c2 WHERE c1 + c2 > $t RETURN v";
        let dag = cypher_parse(q, &g).unwrap();
        assert_eq!(dag.kinds(), vec!["MATCH", "GROUP", "MATCH", "JOIN", "GROUP", "SELECT", "PROJECT", "SINK"]);
        assert_eq!(dag.params(), vec!["t"]);
    }

    #[test]
    fn comments_and_inline_props() {
        let g = g0_schema();
        let dag = cypher_parse("MATCH (a:Buyer{username:'A1'}) /* note */ RETURN a.credits * 2 AS c", &g).unwrap();
        let tree = dag.to_tree().unwrap();
        let LogicalOp::Match { pattern } = &tree.inputs[0].inputs[0].op else { panic!() };
        assert_eq!(pattern.vertices[0].pred.as_ref().unwrap().to_string(), "a.username = \"A1\"");
    }
}
