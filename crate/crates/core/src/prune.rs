//! Relationship-centred pruning.
//!
//! A pruned view holds the focus relationship, its participating entities,
//! and one round of context: other relationships among those same entities,
//! and any specialization or union that touches them (with the entities on
//! the other side of it). Context entities do not pull in further
//! relationships, so the view stays small.

use std::collections::HashSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::ErdSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InclusionReason {
    Focus,
    Participant,
    SharedRelationship,
    SpecializationContext,
    UnionContext,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", content = "name", rename_all = "snake_case")]
pub enum Element {
    Entity(String),
    Relationship(String),
    /// Keyed by superclass name.
    Specialization(String),
    Union(String),
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Element::Entity(n) => write!(f, "entity {n}"),
            Element::Relationship(n) => write!(f, "relationship {n}"),
            Element::Specialization(n) => write!(f, "specialization of {n}"),
            Element::Union(n) => write!(f, "union {n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Inclusion {
    pub element: Element,
    pub reason: InclusionReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrunedView {
    pub focus: String,
    /// Sub-diagram; every declaration is copied unchanged from the source and
    /// keeps its source order.
    pub schema: ErdSchema,
    /// Why each element was kept. Each element appears once, with the first
    /// reason that applied.
    pub included: Vec<Inclusion>,
}

impl PrunedView {
    pub fn reason(&self, element: &Element) -> Option<InclusionReason> {
        self.included
            .iter()
            .find(|i| &i.element == element)
            .map(|i| i.reason)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PruneError {
    #[error("no relationship named '{0}'")]
    UnknownRelationship(String),
}

struct Builder<'a> {
    source: &'a ErdSchema,
    included: Vec<Inclusion>,
    seen: HashSet<Element>,
}

impl Builder<'_> {
    fn add(&mut self, element: Element, reason: InclusionReason) {
        if self.seen.insert(element.clone()) {
            self.included.push(Inclusion { element, reason });
        }
    }

    fn add_entity(&mut self, name: &str, reason: InclusionReason) {
        // Undeclared names cannot be copied; validate reports them.
        if self.source.entity(name).is_some() {
            self.add(Element::Entity(name.to_string()), reason);
        }
    }
}

pub fn prune(source: &ErdSchema, relationship: &str) -> Result<PrunedView, PruneError> {
    let focus = source
        .relationship(relationship)
        .ok_or_else(|| PruneError::UnknownRelationship(relationship.to_string()))?;

    let mut b = Builder {
        source,
        included: Vec::new(),
        seen: HashSet::new(),
    };

    b.add(
        Element::Relationship(focus.name.clone()),
        InclusionReason::Focus,
    );
    let core: HashSet<&str> = focus.entity_names().into_iter().collect();
    for name in focus.entity_names() {
        b.add_entity(name, InclusionReason::Participant);
    }

    for r in &source.relationships {
        if r.name != focus.name
            && r.participants
                .iter()
                .all(|p| core.contains(p.entity.as_str()))
        {
            b.add(
                Element::Relationship(r.name.clone()),
                InclusionReason::SharedRelationship,
            );
        }
    }

    for s in &source.specializations {
        if s.entity_names().any(|n| core.contains(n)) {
            b.add(
                Element::Specialization(s.name.clone()),
                InclusionReason::SpecializationContext,
            );
            for n in s.entity_names() {
                b.add_entity(n, InclusionReason::SpecializationContext);
            }
        }
    }

    for u in &source.unions {
        if u.entity_names().any(|n| core.contains(n)) {
            b.add(
                Element::Union(u.name.clone()),
                InclusionReason::UnionContext,
            );
            for n in u.entity_names() {
                b.add_entity(n, InclusionReason::UnionContext);
            }
        }
    }

    let keep = |e: Element| b.seen.contains(&e);
    let schema = ErdSchema {
        entities: source
            .entities
            .iter()
            .filter(|e| keep(Element::Entity(e.name.clone())))
            .cloned()
            .collect(),
        relationships: source
            .relationships
            .iter()
            .filter(|r| keep(Element::Relationship(r.name.clone())))
            .cloned()
            .collect(),
        specializations: source
            .specializations
            .iter()
            .filter(|s| keep(Element::Specialization(s.name.clone())))
            .cloned()
            .collect(),
        unions: source
            .unions
            .iter()
            .filter(|u| keep(Element::Union(u.name.clone())))
            .cloned()
            .collect(),
    };

    Ok(PrunedView {
        focus: focus.name.clone(),
        schema,
        included: b.included,
    })
}

/// Relationship names in declaration order.
pub fn list_relationships(source: &ErdSchema) -> Vec<String> {
    source.relationship_names()
}
