//! In-memory representation of extended entity-relationship diagrams.
//!
//! Values here are plain data. Structural problems a student can make on
//! purpose (a weak entity with a key, a dangling participant) are not
//! construction failures; they are reported by [`validate`](crate::validate).

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Simple,
    Key,
    PartialKey,
    Derived,
    Multivalued,
    Composite,
}

impl AttributeKind {
    /// Grammar keyword for kinds that carry a prefix modifier.
    pub fn modifier(self) -> Option<&'static str> {
        match self {
            AttributeKind::Key => Some("key"),
            AttributeKind::PartialKey => Some("partial_key"),
            AttributeKind::Derived => Some("derived"),
            AttributeKind::Multivalued => Some("multivalued"),
            AttributeKind::Simple | AttributeKind::Composite => None,
        }
    }

    pub fn from_modifier(word: &str) -> Option<Self> {
        match word {
            "key" => Some(AttributeKind::Key),
            "partial_key" => Some(AttributeKind::PartialKey),
            "derived" => Some(AttributeKind::Derived),
            "multivalued" => Some(AttributeKind::Multivalued),
            _ => None,
        }
    }

    pub fn is_key_like(self) -> bool {
        matches!(self, AttributeKind::Key | AttributeKind::PartialKey)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeDecl {
    pub name: String,
    pub kind: AttributeKind,
    /// Non-empty iff `kind` is [`AttributeKind::Composite`].
    pub children: Vec<AttributeDecl>,
}

impl AttributeDecl {
    pub fn new(name: impl Into<String>, kind: AttributeKind) -> Self {
        Self {
            name: name.into(),
            kind,
            children: Vec::new(),
        }
    }

    pub fn simple(name: impl Into<String>) -> Self {
        Self::new(name, AttributeKind::Simple)
    }

    pub fn composite(name: impl Into<String>, children: Vec<AttributeDecl>) -> Self {
        Self {
            name: name.into(),
            kind: AttributeKind::Composite,
            children,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityStrength {
    Strong,
    Weak,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityDecl {
    pub name: String,
    pub strength: EntityStrength,
    pub attributes: Vec<AttributeDecl>,
}

impl EntityDecl {
    pub fn is_weak(&self) -> bool {
        self.strength == EntityStrength::Weak
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cardinality {
    #[serde(rename = "1")]
    One,
    N,
    M,
}

impl Cardinality {
    pub fn as_str(self) -> &'static str {
        match self {
            Cardinality::One => "1",
            Cardinality::N => "N",
            Cardinality::M => "M",
        }
    }
}

impl fmt::Display for Cardinality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Participation {
    pub entity: String,
    /// Distinguishes the sides of a recursive relationship.
    pub role: Option<String>,
    pub cardinality: Cardinality,
    pub total: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationshipDecl {
    pub name: String,
    pub identifying: bool,
    /// Two (binary) or three (ternary) participants.
    pub participants: Vec<Participation>,
    pub attributes: Vec<AttributeDecl>,
}

impl RelationshipDecl {
    /// Distinct participating entity names, in first-appearance order.
    pub fn entity_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::with_capacity(self.participants.len());
        for p in &self.participants {
            if !names.contains(&p.entity.as_str()) {
                names.push(&p.entity);
            }
        }
        names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecializationConstraint {
    Disjoint,
    Overlapping,
    Total,
    Partial,
}

impl SpecializationConstraint {
    pub fn as_str(self) -> &'static str {
        match self {
            SpecializationConstraint::Disjoint => "disjoint",
            SpecializationConstraint::Overlapping => "overlapping",
            SpecializationConstraint::Total => "total",
            SpecializationConstraint::Partial => "partial",
        }
    }

    pub fn parse(word: &str) -> Option<Self> {
        match word {
            "disjoint" => Some(SpecializationConstraint::Disjoint),
            "overlapping" => Some(SpecializationConstraint::Overlapping),
            "total" => Some(SpecializationConstraint::Total),
            "partial" => Some(SpecializationConstraint::Partial),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecializationDecl {
    /// Superclass entity name.
    pub name: String,
    pub subcategories: Vec<String>,
    pub constraints: Vec<SpecializationConstraint>,
}

impl SpecializationDecl {
    pub fn mentions(&self, entity: &str) -> bool {
        self.name == entity || self.subcategories.iter().any(|s| s == entity)
    }

    pub fn entity_names(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.name.as_str()).chain(self.subcategories.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnionDecl {
    /// Category entity name.
    pub name: String,
    pub sources: Vec<String>,
}

impl UnionDecl {
    pub fn mentions(&self, entity: &str) -> bool {
        self.name == entity || self.sources.iter().any(|s| s == entity)
    }

    pub fn entity_names(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.name.as_str()).chain(self.sources.iter().map(String::as_str))
    }
}

/// A complete diagram. Each list keeps declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ErdSchema {
    pub entities: Vec<EntityDecl>,
    pub relationships: Vec<RelationshipDecl>,
    pub specializations: Vec<SpecializationDecl>,
    pub unions: Vec<UnionDecl>,
}

impl ErdSchema {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
            && self.relationships.is_empty()
            && self.specializations.is_empty()
            && self.unions.is_empty()
    }

    pub fn entity(&self, name: &str) -> Option<&EntityDecl> {
        self.entities.iter().find(|e| e.name == name)
    }

    pub fn relationship(&self, name: &str) -> Option<&RelationshipDecl> {
        self.relationships.iter().find(|r| r.name == name)
    }

    pub fn relationship_names(&self) -> Vec<String> {
        self.relationships.iter().map(|r| r.name.clone()).collect()
    }
}

/// `[A-Za-z_][A-Za-z0-9_-]*`
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Shape rules every constructed schema obeys, whichever way it was built.
///
/// Returns a JSON-pointer-style path and a message for the first breach.
pub(crate) fn check_shape(schema: &ErdSchema) -> Result<(), (String, String)> {
    fn ident(path: String, name: &str) -> Result<(), (String, String)> {
        if is_identifier(name) {
            Ok(())
        } else {
            Err((path, format!("'{name}' is not a valid identifier")))
        }
    }

    fn attrs(path: &str, list: &[AttributeDecl]) -> Result<(), (String, String)> {
        for (i, a) in list.iter().enumerate() {
            let here = format!("{path}/{i}");
            ident(format!("{here}/name"), &a.name)?;
            if list[..i].iter().any(|b| b.name == a.name) {
                return Err((here, format!("duplicate attribute '{}'", a.name)));
            }
            match (a.kind, a.children.is_empty()) {
                (AttributeKind::Composite, true) => {
                    return Err((here, "composite attribute needs components".into()))
                }
                (AttributeKind::Composite, false) => {
                    attrs(&format!("{here}/components"), &a.children)?
                }
                (_, false) => {
                    return Err((here, "only composite attributes have components".into()))
                }
                (_, true) => {}
            }
        }
        Ok(())
    }

    for (i, e) in schema.entities.iter().enumerate() {
        ident(format!("/entities/{i}/name"), &e.name)?;
        if schema.entities[..i].iter().any(|o| o.name == e.name) {
            return Err((
                format!("/entities/{i}"),
                format!("duplicate entity '{}'", e.name),
            ));
        }
        attrs(&format!("/entities/{i}/attributes"), &e.attributes)?;
    }
    for (i, r) in schema.relationships.iter().enumerate() {
        ident(format!("/relationships/{i}/name"), &r.name)?;
        if schema.relationships[..i].iter().any(|o| o.name == r.name) {
            return Err((
                format!("/relationships/{i}"),
                format!("duplicate relationship '{}'", r.name),
            ));
        }
        if !(2..=3).contains(&r.participants.len()) {
            return Err((
                format!("/relationships/{i}/participating_entities"),
                "a relationship has two or three participants".into(),
            ));
        }
        for (j, p) in r.participants.iter().enumerate() {
            let here = format!("/relationships/{i}/participating_entities/{j}");
            ident(format!("{here}/entity"), &p.entity)?;
            if let Some(role) = &p.role {
                ident(format!("{here}/role"), role)?;
            }
        }
        attrs(&format!("/relationships/{i}/attributes"), &r.attributes)?;
    }
    for (i, s) in schema.specializations.iter().enumerate() {
        ident(format!("/specializations/{i}/name"), &s.name)?;
        if s.subcategories.is_empty() {
            return Err((
                format!("/specializations/{i}/subcategories"),
                "a specialization needs at least one subcategory".into(),
            ));
        }
        for (j, sub) in s.subcategories.iter().enumerate() {
            ident(format!("/specializations/{i}/subcategories/{j}/name"), sub)?;
        }
    }
    for (i, u) in schema.unions.iter().enumerate() {
        ident(format!("/unions/{i}/name"), &u.name)?;
        if u.sources.len() < 2 {
            return Err((
                format!("/unions/{i}/sources"),
                "a union needs at least two source entities".into(),
            ));
        }
        for (j, src) in u.sources.iter().enumerate() {
            ident(format!("/unions/{i}/sources/{j}/name"), src)?;
        }
    }
    Ok(())
}
