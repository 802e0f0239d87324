//! Student-facing diagram grammar.
//!
//! ```text
//! schema      := { entity | relationship | specialization | union } ;
//! entity      := [ "weak" ] "entity" IDENT "{" attrs "}" ;
//! attrs       := attr { ";" attr } [ ";" ] ;
//! attr        := [ "key" | "partial_key" | "derived" | "multivalued" ] IDENT [ "(" attrs ")" ] ;
//! relationship:= [ "identifying" ] "relationship" IDENT
//!                "(" participant { "," participant } ")" [ "{" attrs "}" ] ;
//! participant := IDENT [ "as" IDENT ] CARD [ "total" ] ;
//! CARD        := "1" | "N" | "M" ;
//! specialization := "specialization" "of" IDENT "{" IDENT { "," IDENT } "}"
//!                   [ "[" constraint { "," constraint } "]" ] ;
//! constraint  := "disjoint" | "overlapping" | "total" | "partial" ;
//! union       := "union" IDENT "of" "{" IDENT { "," IDENT } "}" ;
//! ```
//!
//! Keywords are positional, not reserved: `key` alone is an attribute named
//! `key`, and an entity may be called `weak`. `#` starts a comment that runs
//! to the end of the line. An entity body may be empty.
//!
//! After an error the parser skips ahead to the next top-level keyword that
//! starts a line (or follows a closing delimiter) and keeps going, so one
//! call reports every broken declaration.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{
    AttributeDecl, AttributeKind, Cardinality, EntityDecl, EntityStrength, ErdSchema,
    Participation, RelationshipDecl, SpecializationConstraint, SpecializationDecl, UnionDecl,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseErrorCode {
    InvalidCharacter,
    UnexpectedToken,
    UnexpectedEof,
    UnknownKeyword,
    DuplicateName,
    InvalidCardinality,
    UnknownConstraint,
    Arity,
    CompositeModifier,
    UnbalancedDelimiter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseError {
    /// 1-based.
    pub line: usize,
    /// 1-based, counted in characters.
    pub column: usize,
    pub message: String,
    pub code: ParseErrorCode,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeclKind {
    Entity,
    Relationship,
    Specialization,
    Union,
}

/// Character offsets `[start, end)` of one declaration in the source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpan {
    pub kind: DeclKind,
    pub name: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSchema {
    pub schema: ErdSchema,
    /// One per declaration, in source order.
    pub spans: Vec<SourceSpan>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Number(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Semi,
    Comma,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Number(s) => format!("'{s}'"),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::LBracket => "'['".into(),
            Tok::RBracket => "']'".into(),
            Tok::Semi => "';'".into(),
            Tok::Comma => "','".into(),
            Tok::Eof => "end of input".into(),
        }
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self, Tok::Ident(s) if s == w)
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    start: usize,
    end: usize,
    first_on_line: bool,
}

const TOP_LEVEL: [&str; 6] = [
    "entity",
    "weak",
    "relationship",
    "identifying",
    "specialization",
    "union",
];

struct Source {
    chars: Vec<char>,
    line_starts: Vec<usize>,
}

impl Source {
    fn new(text: &str) -> Self {
        let chars: Vec<char> = text.chars().collect();
        let mut line_starts = vec![0];
        for (i, c) in chars.iter().enumerate() {
            if *c == '\n' {
                line_starts.push(i + 1);
            }
        }
        Source { chars, line_starts }
    }

    fn error(&self, offset: usize, code: ParseErrorCode, message: impl Into<String>) -> ParseError {
        // Clamp so the position always lands on a real character.
        let offset = offset.min(self.chars.len().saturating_sub(1));
        let line = match self.line_starts.binary_search(&offset) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        ParseError {
            line: line + 1,
            column: offset - self.line_starts[line] + 1,
            message: message.into(),
            code,
        }
    }
}

fn lex(src: &Source, errors: &mut Vec<ParseError>) -> Vec<Token> {
    let chars = &src.chars;
    let mut toks = Vec::new();
    let mut i = 0;
    let mut line_has_token = false;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line_has_token = false;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len()
                && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '-')
            {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            Tok::Number(chars[start..i].iter().collect())
        } else {
            i += 1;
            match c {
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '[' => Tok::LBracket,
                ']' => Tok::RBracket,
                ';' => Tok::Semi,
                ',' => Tok::Comma,
                other => {
                    errors.push(src.error(
                        start,
                        ParseErrorCode::InvalidCharacter,
                        format!("unexpected character {other:?}"),
                    ));
                    continue;
                }
            }
        };
        toks.push(Token {
            tok,
            start,
            end: i,
            first_on_line: !line_has_token,
        });
        line_has_token = true;
    }
    toks.push(Token {
        tok: Tok::Eof,
        start: chars.len(),
        end: chars.len(),
        first_on_line: true,
    });
    toks
}

struct Parser<'a> {
    src: &'a Source,
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

enum Decl {
    Entity(EntityDecl),
    Relationship(RelationshipDecl),
    Specialization(SpecializationDecl),
    Union(UnionDecl),
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, code: ParseErrorCode, message: impl Into<String>) -> ParseError {
        self.src.error(self.peek().start, code, message)
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        let t = self.peek();
        let code = if t.tok == Tok::Eof {
            ParseErrorCode::UnexpectedEof
        } else {
            ParseErrorCode::UnexpectedToken
        };
        self.err_here(
            code,
            format!("expected {wanted}, found {}", t.tok.describe()),
        )
    }

    fn expect(&mut self, tok: Tok) -> PResult<Token> {
        if self.peek().tok == tok {
            Ok(self.bump())
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn expect_word(&mut self, word: &str) -> PResult<Token> {
        if self.peek().tok.is_word(word) {
            Ok(self.bump())
        } else {
            Err(self.unexpected(&format!("'{word}'")))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(String, usize)> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                let start = self.bump().start;
                Ok((s, start))
            }
            _ => Err(self.unexpected(what)),
        }
    }

    /// Skip to a plausible declaration start, moving at least one token
    /// past `decl_start` so a broken declaration cannot loop forever.
    fn recover(&mut self, decl_start: usize) {
        loop {
            let t = self.peek();
            if t.tok == Tok::Eof {
                return;
            }
            let after_close = self.pos > 0
                && matches!(
                    self.toks[self.pos - 1].tok,
                    Tok::RBrace | Tok::RParen | Tok::RBracket
                );
            let keyword = TOP_LEVEL.iter().any(|w| t.tok.is_word(w));
            // A misspelt keyword opening a line right after a closed body is
            // most likely the next declaration.
            let line_after_close = after_close && t.first_on_line && matches!(t.tok, Tok::Ident(_));
            if self.pos > decl_start
                && ((keyword && (t.first_on_line || after_close)) || line_after_close)
            {
                return;
            }
            self.bump();
        }
    }

    fn declaration(&mut self) -> PResult<Decl> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Ident(w) => match w.as_str() {
                "entity" | "weak" => self.entity().map(Decl::Entity),
                "relationship" | "identifying" => self.relationship().map(Decl::Relationship),
                "specialization" => self.specialization().map(Decl::Specialization),
                "union" => self.union().map(Decl::Union),
                other => Err(self.err_here(
                    ParseErrorCode::UnknownKeyword,
                    format!(
                        "unknown keyword '{other}'; expected entity, weak, relationship, \
                         identifying, specialization or union"
                    ),
                )),
            },
            Tok::RBrace | Tok::RParen | Tok::RBracket => Err(self.err_here(
                ParseErrorCode::UnbalancedDelimiter,
                format!("unmatched {}", t.tok.describe()),
            )),
            _ => Err(self.unexpected("a declaration")),
        }
    }

    fn entity(&mut self) -> PResult<EntityDecl> {
        let strength = if self.peek().tok.is_word("weak") {
            self.bump();
            EntityStrength::Weak
        } else {
            EntityStrength::Strong
        };
        self.expect_word("entity")?;
        let (name, _) = self.ident("an entity name")?;
        let open = self.expect(Tok::LBrace)?;
        let attributes = self.attrs(Tok::RBrace, open.start, true)?;
        Ok(EntityDecl {
            name,
            strength,
            attributes,
        })
    }

    /// Attributes up to and including `close`.
    fn attrs(
        &mut self,
        close: Tok,
        open_at: usize,
        allow_empty: bool,
    ) -> PResult<Vec<AttributeDecl>> {
        let mut out: Vec<AttributeDecl> = Vec::new();
        if self.peek().tok == close {
            if allow_empty {
                self.bump();
                return Ok(out);
            }
            return Err(self.unexpected("an attribute"));
        }
        loop {
            if self.peek().tok == Tok::Eof {
                return Err(self.src.error(
                    open_at,
                    ParseErrorCode::UnbalancedDelimiter,
                    format!("unclosed delimiter; expected {}", close.describe()),
                ));
            }
            let attr_start = self.peek().start;
            let attr = self.attr()?;
            if out.iter().any(|a| a.name == attr.name) {
                return Err(self.src.error(
                    attr_start,
                    ParseErrorCode::DuplicateName,
                    format!("duplicate attribute '{}'", attr.name),
                ));
            }
            out.push(attr);
            if self.peek().tok == Tok::Semi {
                self.bump();
                if self.peek().tok == close {
                    self.bump();
                    return Ok(out);
                }
            } else if self.peek().tok == close {
                self.bump();
                return Ok(out);
            } else if self.peek().tok == Tok::Eof {
                return Err(self.src.error(
                    open_at,
                    ParseErrorCode::UnbalancedDelimiter,
                    format!("unclosed delimiter; expected {}", close.describe()),
                ));
            } else {
                return Err(self.unexpected(&format!("';' or {}", close.describe())));
            }
        }
    }

    fn attr(&mut self) -> PResult<AttributeDecl> {
        let mut kind = AttributeKind::Simple;
        let mut modifier_at = None;
        if let Tok::Ident(w) = &self.peek().tok {
            if let Some(k) = AttributeKind::from_modifier(w) {
                if matches!(self.peek_at(1), Tok::Ident(_)) {
                    kind = k;
                    modifier_at = Some(self.bump().start);
                }
            }
        }
        let (name, _) = self.ident("an attribute name")?;
        if self.peek().tok == Tok::LParen {
            if let Some(at) = modifier_at {
                return Err(self.src.error(
                    at,
                    ParseErrorCode::CompositeModifier,
                    format!("composite attribute '{name}' cannot carry a modifier"),
                ));
            }
            let open = self.bump();
            let children = self.attrs(Tok::RParen, open.start, false)?;
            return Ok(AttributeDecl::composite(name, children));
        }
        Ok(AttributeDecl::new(name, kind))
    }

    fn relationship(&mut self) -> PResult<RelationshipDecl> {
        let identifying = if self.peek().tok.is_word("identifying") {
            self.bump();
            true
        } else {
            false
        };
        self.expect_word("relationship")?;
        let (name, name_at) = self.ident("a relationship name")?;
        let open = self.expect(Tok::LParen)?;
        let mut participants = vec![self.participant()?];
        loop {
            match self.peek().tok {
                Tok::Comma => {
                    self.bump();
                    participants.push(self.participant()?);
                }
                Tok::RParen => {
                    self.bump();
                    break;
                }
                Tok::Eof => {
                    return Err(self.src.error(
                        open.start,
                        ParseErrorCode::UnbalancedDelimiter,
                        "unclosed '('; expected ')'",
                    ))
                }
                _ => return Err(self.unexpected("',' or ')'")),
            }
        }
        if !(2..=3).contains(&participants.len()) {
            return Err(self.src.error(
                name_at,
                ParseErrorCode::Arity,
                format!(
                    "relationship '{name}' has {} participant(s); it needs two (binary) or three (ternary)",
                    participants.len()
                ),
            ));
        }
        let attributes = if self.peek().tok == Tok::LBrace {
            let open = self.bump();
            self.attrs(Tok::RBrace, open.start, true)?
        } else {
            Vec::new()
        };
        Ok(RelationshipDecl {
            name,
            identifying,
            participants,
            attributes,
        })
    }

    fn participant(&mut self) -> PResult<Participation> {
        let (entity, _) = self.ident("a participating entity")?;
        let role = if self.peek().tok.is_word("as") {
            self.bump();
            Some(self.ident("a role name")?.0)
        } else {
            None
        };
        let cardinality = match &self.peek().tok {
            Tok::Number(n) if n == "1" => Cardinality::One,
            Tok::Ident(n) if n == "N" => Cardinality::N,
            Tok::Ident(n) if n == "M" => Cardinality::M,
            Tok::Number(_) | Tok::Ident(_) => {
                return Err(self.err_here(
                    ParseErrorCode::InvalidCardinality,
                    format!(
                        "invalid cardinality {}; use 1, N or M",
                        self.peek().tok.describe()
                    ),
                ))
            }
            _ => return Err(self.unexpected("a cardinality (1, N or M)")),
        };
        self.bump();
        let total = if self.peek().tok.is_word("total") {
            self.bump();
            true
        } else {
            false
        };
        Ok(Participation {
            entity,
            role,
            cardinality,
            total,
        })
    }

    fn name_list(&mut self, close: Tok, open_at: usize, what: &str) -> PResult<Vec<String>> {
        let mut names = vec![self.ident(what)?.0];
        loop {
            if self.peek().tok == Tok::Comma {
                self.bump();
                names.push(self.ident(what)?.0);
            } else if self.peek().tok == close {
                self.bump();
                return Ok(names);
            } else if self.peek().tok == Tok::Eof {
                return Err(self.src.error(
                    open_at,
                    ParseErrorCode::UnbalancedDelimiter,
                    format!("unclosed delimiter; expected {}", close.describe()),
                ));
            } else {
                return Err(self.unexpected(&format!("',' or {}", close.describe())));
            }
        }
    }

    fn specialization(&mut self) -> PResult<SpecializationDecl> {
        self.expect_word("specialization")?;
        self.expect_word("of")?;
        let (name, _) = self.ident("a superclass entity")?;
        let open = self.expect(Tok::LBrace)?;
        let subcategories = self.name_list(Tok::RBrace, open.start, "a subclass entity")?;
        let mut constraints = Vec::new();
        if self.peek().tok == Tok::LBracket {
            let open = self.bump();
            let words = self.constraint_list(open.start)?;
            constraints.extend(words);
        }
        Ok(SpecializationDecl {
            name,
            subcategories,
            constraints,
        })
    }

    fn constraint_list(&mut self, open_at: usize) -> PResult<Vec<SpecializationConstraint>> {
        let mut out = Vec::new();
        loop {
            let c = match &self.peek().tok {
                Tok::Ident(w) => match SpecializationConstraint::parse(w) {
                    Some(c) => c,
                    None => return Err(self.err_here(
                        ParseErrorCode::UnknownConstraint,
                        format!(
                            "unknown constraint '{w}'; use disjoint, overlapping, total or partial"
                        ),
                    )),
                },
                _ => return Err(self.unexpected("a specialization constraint")),
            };
            self.bump();
            out.push(c);
            match self.peek().tok {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RBracket => {
                    self.bump();
                    return Ok(out);
                }
                Tok::Eof => {
                    return Err(self.src.error(
                        open_at,
                        ParseErrorCode::UnbalancedDelimiter,
                        "unclosed '['; expected ']'",
                    ))
                }
                _ => return Err(self.unexpected("',' or ']'")),
            }
        }
    }

    fn union(&mut self) -> PResult<UnionDecl> {
        self.expect_word("union")?;
        let (name, name_at) = self.ident("a category entity")?;
        self.expect_word("of")?;
        let open = self.expect(Tok::LBrace)?;
        let sources = self.name_list(Tok::RBrace, open.start, "a source entity")?;
        if sources.len() < 2 {
            return Err(self.src.error(
                name_at,
                ParseErrorCode::Arity,
                format!("union '{name}' needs at least two source entities"),
            ));
        }
        Ok(UnionDecl { name, sources })
    }
}

/// Parse diagram text. On failure every error found is returned.
pub fn parse(text: &str) -> Result<ParsedSchema, Vec<ParseError>> {
    let src = Source::new(text);
    let mut errors = Vec::new();
    let toks = lex(&src, &mut errors);
    let mut p = Parser {
        src: &src,
        toks,
        pos: 0,
    };
    let mut schema = ErdSchema::default();
    let mut spans = Vec::new();

    while p.peek().tok != Tok::Eof {
        let start = p.peek().start;
        let start_pos = p.pos;
        match p.declaration() {
            Ok(decl) => {
                let end = p.toks[p.pos - 1].end;
                let (kind, name) = match &decl {
                    Decl::Entity(e) => (DeclKind::Entity, e.name.clone()),
                    Decl::Relationship(r) => (DeclKind::Relationship, r.name.clone()),
                    Decl::Specialization(s) => (DeclKind::Specialization, s.name.clone()),
                    Decl::Union(u) => (DeclKind::Union, u.name.clone()),
                };
                let duplicate = match &decl {
                    Decl::Entity(e) => schema.entities.iter().any(|o| o.name == e.name),
                    Decl::Relationship(r) => schema.relationships.iter().any(|o| o.name == r.name),
                    _ => false,
                };
                if duplicate {
                    errors.push(src.error(
                        start,
                        ParseErrorCode::DuplicateName,
                        format!("'{name}' is declared more than once"),
                    ));
                    continue;
                }
                match decl {
                    Decl::Entity(e) => schema.entities.push(e),
                    Decl::Relationship(r) => schema.relationships.push(r),
                    Decl::Specialization(s) => schema.specializations.push(s),
                    Decl::Union(u) => schema.unions.push(u),
                }
                spans.push(SourceSpan {
                    kind,
                    name,
                    start,
                    end,
                });
            }
            Err(e) => {
                errors.push(e);
                p.recover(start_pos);
            }
        }
    }

    if errors.is_empty() {
        Ok(ParsedSchema { schema, spans })
    } else {
        errors.sort_by_key(|e| (e.line, e.column));
        Err(errors)
    }
}

fn format_attrs(attrs: &[AttributeDecl], out: &mut String) {
    for (i, a) in attrs.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        if let Some(m) = a.kind.modifier() {
            out.push_str(m);
            out.push(' ');
        }
        out.push_str(&a.name);
        if a.kind == AttributeKind::Composite {
            out.push_str(" (");
            format_attrs(&a.children, out);
            out.push(')');
        }
    }
}

/// Canonical text: one declaration per line, entities first, then
/// relationships, specializations and unions, each in declaration order.
pub fn format(schema: &ErdSchema) -> String {
    let mut out = String::new();
    for e in &schema.entities {
        if e.is_weak() {
            out.push_str("weak ");
        }
        out.push_str("entity ");
        out.push_str(&e.name);
        if e.attributes.is_empty() {
            out.push_str(" { }\n");
        } else {
            out.push_str(" { ");
            format_attrs(&e.attributes, &mut out);
            out.push_str(" }\n");
        }
    }
    for r in &schema.relationships {
        if r.identifying {
            out.push_str("identifying ");
        }
        out.push_str("relationship ");
        out.push_str(&r.name);
        out.push_str(" (");
        for (i, p) in r.participants.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(&p.entity);
            if let Some(role) = &p.role {
                out.push_str(" as ");
                out.push_str(role);
            }
            out.push(' ');
            out.push_str(p.cardinality.as_str());
            if p.total {
                out.push_str(" total");
            }
        }
        out.push(')');
        if !r.attributes.is_empty() {
            out.push_str(" { ");
            format_attrs(&r.attributes, &mut out);
            out.push_str(" }");
        }
        out.push('\n');
    }
    for s in &schema.specializations {
        out.push_str("specialization of ");
        out.push_str(&s.name);
        out.push_str(" { ");
        out.push_str(&s.subcategories.join(", "));
        out.push_str(" }");
        if !s.constraints.is_empty() {
            let words: Vec<&str> = s.constraints.iter().map(|c| c.as_str()).collect();
            out.push_str(" [");
            out.push_str(&words.join(", "));
            out.push(']');
        }
        out.push('\n');
    }
    for u in &schema.unions {
        out.push_str("union ");
        out.push_str(&u.name);
        out.push_str(" of { ");
        out.push_str(&u.sources.join(", "));
        out.push_str(" }\n");
    }
    out
}
