//! Graphviz DOT export, and a small DOT syntax checker.
//!
//! Node ids:
//! - entities use their name, quoted when it is not a plain DOT id
//! - relationships are `"rel:Name"`
//! - attributes are `"attr:Owner.path"` (entity owner) or `"rattr:Owner.path"`
//! - specializations are `"spec:Superclass"`, unions `"union:Category"`
//!
//! Declared names cannot contain `:` or `.`, so the prefixed ids never clash
//! with each other or with entity ids.
//!
//! Total participation is a double line (`color="black:invis:black"`).

use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{AttributeDecl, AttributeKind, ErdSchema, SpecializationConstraint};
use crate::prune::PrunedView;
use crate::validate::unresolved_entities;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum DotError {
    #[error("diagram references undeclared entities: {}", .0.join(", "))]
    UnrenderableView(Vec<String>),
}

pub fn to_dot(schema: &ErdSchema) -> Result<String, DotError> {
    let missing = unresolved_entities(schema);
    if !missing.is_empty() {
        let mut names = missing;
        names.dedup();
        return Err(DotError::UnrenderableView(names));
    }
    if schema.is_empty() {
        return Ok("digraph erd { }".to_string());
    }

    let mut w = Writer::default();
    w.line("digraph erd {");
    w.line("  graph [rankdir=LR];");
    w.line("  node [fontname=\"Helvetica\"];");
    w.line("  edge [dir=none];");

    for e in &schema.entities {
        let id = entity_id(&e.name);
        let periph = if e.is_weak() { ", peripheries=2" } else { "" };
        w.line(&format!(
            "  {id} [shape=box{periph}, label={}];",
            quote(&e.name)
        ));
        attributes(&mut w, &id, "attr", &e.name, &e.attributes);
    }

    for r in &schema.relationships {
        let id = quote(&format!("rel:{}", r.name));
        let periph = if r.identifying { ", peripheries=2" } else { "" };
        w.line(&format!(
            "  {id} [shape=diamond{periph}, label={}];",
            quote(&r.name)
        ));
        for p in &r.participants {
            let mut attrs = vec![format!("label={}", quote(p.cardinality.as_str()))];
            if let Some(role) = &p.role {
                attrs.push(format!("headlabel={}", quote(role)));
            }
            if p.total {
                attrs.push("color=\"black:invis:black\"".into());
            }
            w.line(&format!(
                "  {id} -> {} [{}];",
                entity_id(&p.entity),
                attrs.join(", ")
            ));
        }
        attributes(&mut w, &id, "rattr", &r.name, &r.attributes);
    }

    for s in &schema.specializations {
        let id = quote(&format!("spec:{}", s.name));
        let symbol = if s.constraints.contains(&SpecializationConstraint::Disjoint) {
            "d"
        } else if s
            .constraints
            .contains(&SpecializationConstraint::Overlapping)
        {
            "o"
        } else {
            ""
        };
        w.line(&format!(
            "  {id} [shape=circle, width=0.3, fixedsize=true, label={}];",
            quote(symbol)
        ));
        let total = s.constraints.contains(&SpecializationConstraint::Total);
        let style = if total {
            " [color=\"black:invis:black\"]"
        } else {
            ""
        };
        w.line(&format!("  {} -> {id}{style};", entity_id(&s.name)));
        for sub in &s.subcategories {
            w.line(&format!("  {id} -> {};", entity_id(sub)));
        }
    }

    for u in &schema.unions {
        let id = quote(&format!("union:{}", u.name));
        w.line(&format!(
            "  {id} [shape=circle, width=0.3, fixedsize=true, label=\"U\"];"
        ));
        for src in &u.sources {
            w.line(&format!("  {} -> {id};", entity_id(src)));
        }
        w.line(&format!("  {id} -> {};", entity_id(&u.name)));
    }

    w.line("}");
    Ok(w.out)
}

pub fn view_to_dot(view: &PrunedView) -> Result<String, DotError> {
    to_dot(&view.schema)
}

#[derive(Default)]
struct Writer {
    out: String,
}

impl Writer {
    fn line(&mut self, s: &str) {
        self.out.push_str(s);
        self.out.push('\n');
    }
}

fn attributes(w: &mut Writer, parent: &str, prefix: &str, path: &str, attrs: &[AttributeDecl]) {
    for a in attrs {
        let here = format!("{path}.{}", a.name);
        let id = quote(&format!("{prefix}:{here}"));
        let name = html_escape(&a.name);
        let node = match a.kind {
            AttributeKind::Simple | AttributeKind::Composite => {
                format!("shape=ellipse, label={}", quote(&a.name))
            }
            AttributeKind::Key => format!("shape=ellipse, label=<<U>{name}</U>>"),
            AttributeKind::PartialKey => format!(
                "shape=ellipse, label=<<TABLE BORDER=\"0\" CELLPADDING=\"0\"><TR>\
                 <TD BORDER=\"1\" SIDES=\"B\" STYLE=\"dashed\">{name}</TD></TR></TABLE>>"
            ),
            AttributeKind::Derived => {
                format!("shape=ellipse, style=dashed, label={}", quote(&a.name))
            }
            AttributeKind::Multivalued => {
                format!("shape=ellipse, peripheries=2, label={}", quote(&a.name))
            }
        };
        let _ = writeln!(w.out, "  {id} [{node}];");
        let _ = writeln!(w.out, "  {parent} -> {id};");
        attributes(w, &id, prefix, &here, &a.children);
    }
}

const KEYWORDS: [&str; 6] = ["node", "edge", "graph", "digraph", "subgraph", "strict"];

fn entity_id(name: &str) -> String {
    let plain = name
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(name));
    if plain {
        name.to_string()
    } else {
        quote(name)
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

fn html_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("DOT syntax error at byte {offset}: {message}")]
pub struct DotSyntaxError {
    pub offset: usize,
    pub message: String,
}

/// Check `text` against the Graphviz DOT grammar (graph, statements, node,
/// edge and attribute statements, subgraphs, all four ID forms). Does not
/// check attribute names or values.
pub fn check_dot_syntax(text: &str) -> Result<(), DotSyntaxError> {
    let tokens = dot_lex(text)?;
    let mut p = DotParser {
        tokens,
        pos: 0,
        directed: false,
    };
    p.graph()?;
    match p.peek() {
        None => Ok(()),
        Some(t) => Err(p.err_at(t.offset, "trailing input after graph")),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum DotTok {
    Id(String),
    /// Double-quoted string; never a keyword.
    Str(String),
    Punct(&'static str),
}

#[derive(Debug, Clone)]
struct Located {
    tok: DotTok,
    offset: usize,
}

fn dot_lex(text: &str) -> Result<Vec<Located>, DotSyntaxError> {
    let b = text.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    let err = |offset, message: &str| DotSyntaxError {
        offset,
        message: message.into(),
    };
    while i < b.len() {
        let c = b[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'/' if b.get(i + 1) == Some(&b'/') => {
                while i < b.len() && b[i] != b'\n' {
                    i += 1;
                }
            }
            b'#' if i == 0 || b[i - 1] == b'\n' => {
                while i < b.len() && b[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if b.get(i + 1) == Some(&b'*') => {
                let end = text[i + 2..]
                    .find("*/")
                    .ok_or_else(|| err(start, "unterminated comment"))?;
                i += end + 4;
            }
            b'{' | b'}' | b'[' | b']' | b';' | b',' | b'=' | b':' => {
                let p = match c {
                    b'{' => "{",
                    b'}' => "}",
                    b'[' => "[",
                    b']' => "]",
                    b';' => ";",
                    b',' => ",",
                    b'=' => "=",
                    _ => ":",
                };
                out.push(Located {
                    tok: DotTok::Punct(p),
                    offset: start,
                });
                i += 1;
            }
            b'-' if b.get(i + 1) == Some(&b'>') => {
                out.push(Located {
                    tok: DotTok::Punct("->"),
                    offset: start,
                });
                i += 2;
            }
            b'-' if b.get(i + 1) == Some(&b'-') => {
                out.push(Located {
                    tok: DotTok::Punct("--"),
                    offset: start,
                });
                i += 2;
            }
            b'"' => {
                i += 1;
                let mut value = String::new();
                loop {
                    match b.get(i) {
                        None => return Err(err(start, "unterminated string")),
                        Some(b'"') => {
                            i += 1;
                            break;
                        }
                        Some(b'\\') if i + 1 < b.len() => {
                            value.push_str(&text[i..i + 2]);
                            i += 2;
                        }
                        Some(_) => {
                            let ch = text[i..].chars().next().expect("in bounds");
                            value.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                out.push(Located {
                    tok: DotTok::Str(value),
                    offset: start,
                });
            }
            b'<' => {
                let mut depth = 0usize;
                loop {
                    match b.get(i) {
                        None => return Err(err(start, "unterminated HTML string")),
                        Some(b'<') => depth += 1,
                        Some(b'>') => {
                            depth -= 1;
                            if depth == 0 {
                                i += 1;
                                break;
                            }
                        }
                        _ => {}
                    }
                    i += 1;
                }
                out.push(Located {
                    tok: DotTok::Id(text[start..i].to_string()),
                    offset: start,
                });
            }
            b'-' | b'.' | b'0'..=b'9' => {
                i += 1;
                while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
                    i += 1;
                }
                let lit = &text[start..i];
                let digits = lit.bytes().filter(u8::is_ascii_digit).count();
                let dots = lit.bytes().filter(|&x| x == b'.').count();
                if digits == 0 || dots > 1 {
                    return Err(err(start, "malformed numeral"));
                }
                out.push(Located {
                    tok: DotTok::Id(lit.to_string()),
                    offset: start,
                });
            }
            _ if c == b'_' || c.is_ascii_alphabetic() || c >= 0x80 => {
                while i < b.len() && (b[i] == b'_' || b[i].is_ascii_alphanumeric() || b[i] >= 0x80)
                {
                    i += 1;
                }
                out.push(Located {
                    tok: DotTok::Id(text[start..i].to_string()),
                    offset: start,
                });
            }
            _ => return Err(err(start, "unexpected character")),
        }
    }
    Ok(out)
}

struct DotParser {
    tokens: Vec<Located>,
    pos: usize,
    directed: bool,
}

impl DotParser {
    fn peek(&self) -> Option<&Located> {
        self.tokens.get(self.pos)
    }

    fn end_offset(&self) -> usize {
        self.tokens.last().map_or(0, |t| t.offset + 1)
    }

    fn err_at(&self, offset: usize, message: &str) -> DotSyntaxError {
        DotSyntaxError {
            offset,
            message: message.into(),
        }
    }

    fn err_here(&self, message: &str) -> DotSyntaxError {
        let offset = self.peek().map_or(self.end_offset(), |t| t.offset);
        self.err_at(offset, message)
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Located { tok: DotTok::Punct(q), .. }) if *q == p)
    }

    fn is_keyword(&self, k: &str) -> bool {
        matches!(self.peek(), Some(Located { tok: DotTok::Id(s), .. }) if s.eq_ignore_ascii_case(k))
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        let hit = self.is_punct(p);
        if hit {
            self.pos += 1;
        }
        hit
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), DotSyntaxError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.err_here(&format!("expected '{p}'")))
        }
    }

    fn eat_keyword(&mut self, k: &str) -> bool {
        let hit = self.is_keyword(k);
        if hit {
            self.pos += 1;
        }
        hit
    }

    fn at_id(&self) -> bool {
        match self.peek() {
            Some(Located {
                tok: DotTok::Id(s), ..
            }) => !KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(s)),
            Some(Located {
                tok: DotTok::Str(_),
                ..
            }) => true,
            _ => false,
        }
    }

    fn id(&mut self) -> Result<(), DotSyntaxError> {
        if self.at_id() {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err_here("expected an ID"))
        }
    }

    fn graph(&mut self) -> Result<(), DotSyntaxError> {
        self.eat_keyword("strict");
        if self.eat_keyword("digraph") {
            self.directed = true;
        } else if !self.eat_keyword("graph") {
            return Err(self.err_here("expected 'graph' or 'digraph'"));
        }
        if self.at_id() {
            self.pos += 1;
        }
        self.expect_punct("{")?;
        self.stmt_list()?;
        self.expect_punct("}")
    }

    fn stmt_list(&mut self) -> Result<(), DotSyntaxError> {
        while !self.is_punct("}") {
            if self.peek().is_none() {
                return Err(self.err_here("expected '}'"));
            }
            self.stmt()?;
            self.eat_punct(";");
        }
        Ok(())
    }

    fn stmt(&mut self) -> Result<(), DotSyntaxError> {
        if self.is_keyword("graph") || self.is_keyword("node") || self.is_keyword("edge") {
            self.pos += 1;
            return self.attr_list(true);
        }
        // ID '=' ID
        if self.at_id()
            && matches!(
                self.tokens.get(self.pos + 1),
                Some(Located {
                    tok: DotTok::Punct("="),
                    ..
                })
            )
        {
            self.pos += 2;
            return self.id();
        }
        self.node_or_subgraph()?;
        loop {
            let op = if self.directed { "->" } else { "--" };
            if self.eat_punct(op) {
                self.node_or_subgraph()?;
            } else if self.is_punct("->") || self.is_punct("--") {
                return Err(self.err_here("edge operator does not match graph kind"));
            } else {
                break;
            }
        }
        if self.is_punct("[") {
            self.attr_list(true)?;
        }
        Ok(())
    }

    fn node_or_subgraph(&mut self) -> Result<(), DotSyntaxError> {
        if self.is_keyword("subgraph") || self.is_punct("{") {
            if self.eat_keyword("subgraph") && self.at_id() {
                self.pos += 1;
            }
            self.expect_punct("{")?;
            self.stmt_list()?;
            return self.expect_punct("}");
        }
        self.id()?;
        // port: ':' ID [ ':' ID ]
        if self.eat_punct(":") {
            self.id()?;
            if self.eat_punct(":") {
                self.id()?;
            }
        }
        Ok(())
    }

    fn attr_list(&mut self, required: bool) -> Result<(), DotSyntaxError> {
        if required && !self.is_punct("[") {
            return Err(self.err_here("expected '['"));
        }
        while self.eat_punct("[") {
            while !self.is_punct("]") {
                self.id()?;
                if self.eat_punct("=") {
                    self.id()?;
                }
                if !self.eat_punct(",") {
                    self.eat_punct(";");
                }
                if self.peek().is_none() {
                    return Err(self.err_here("expected ']'"));
                }
            }
            self.expect_punct("]")?;
        }
        Ok(())
    }
}
