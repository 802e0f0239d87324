//! Structural well-formedness checks.
//!
//! These never judge whether a diagram agrees with the requirements; they
//! only catch internal inconsistencies such as dangling references or key
//! rules that contradict an entity's declared strength.

use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use crate::model::{AttributeDecl, AttributeKind, ErdSchema, SpecializationConstraint};

/// The declaration a violation is attached to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "name", rename_all = "snake_case")]
pub enum Location {
    Entity(String),
    Relationship(String),
    Specialization(String),
    Union(String),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Entity(n) => write!(f, "entity {n}"),
            Location::Relationship(n) => write!(f, "relationship {n}"),
            Location::Specialization(n) => write!(f, "specialization of {n}"),
            Location::Union(n) => write!(f, "union {n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    UnresolvedEntity {
        name: String,
        at: Location,
    },
    StrongEntityMissingKey {
        entity: String,
    },
    StrongEntityHasPartialKey {
        entity: String,
        attribute: String,
    },
    WeakEntityHasKey {
        entity: String,
        attribute: String,
    },
    WeakEntityMultiplePartialKeys {
        entity: String,
    },
    WeakEntityNotIdentified {
        entity: String,
    },
    IdentifyingWithoutWeakEntity {
        relationship: String,
    },
    DuplicateParticipant {
        relationship: String,
        entity: String,
    },
    CompositeChildKey {
        at: Location,
        attribute: String,
    },
    ConflictingConstraints {
        superclass: String,
    },
    DuplicateUnionSource {
        union: String,
        source: String,
    },
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::UnresolvedEntity { .. } => "UnresolvedEntity",
            Violation::StrongEntityMissingKey { .. } => "StrongEntityMissingKey",
            Violation::StrongEntityHasPartialKey { .. } => "StrongEntityHasPartialKey",
            Violation::WeakEntityHasKey { .. } => "WeakEntityHasKey",
            Violation::WeakEntityMultiplePartialKeys { .. } => "WeakEntityMultiplePartialKeys",
            Violation::WeakEntityNotIdentified { .. } => "WeakEntityNotIdentified",
            Violation::IdentifyingWithoutWeakEntity { .. } => "IdentifyingWithoutWeakEntity",
            Violation::DuplicateParticipant { .. } => "DuplicateParticipant",
            Violation::CompositeChildKey { .. } => "CompositeChildKey",
            Violation::ConflictingConstraints { .. } => "ConflictingConstraints",
            Violation::DuplicateUnionSource { .. } => "DuplicateUnionSource",
        }
    }

    pub fn location(&self) -> Location {
        match self {
            Violation::UnresolvedEntity { at, .. } | Violation::CompositeChildKey { at, .. } => {
                at.clone()
            }
            Violation::StrongEntityMissingKey { entity }
            | Violation::StrongEntityHasPartialKey { entity, .. }
            | Violation::WeakEntityHasKey { entity, .. }
            | Violation::WeakEntityMultiplePartialKeys { entity }
            | Violation::WeakEntityNotIdentified { entity } => Location::Entity(entity.clone()),
            Violation::IdentifyingWithoutWeakEntity { relationship }
            | Violation::DuplicateParticipant { relationship, .. } => {
                Location::Relationship(relationship.clone())
            }
            Violation::ConflictingConstraints { superclass } => {
                Location::Specialization(superclass.clone())
            }
            Violation::DuplicateUnionSource { union, .. } => Location::Union(union.clone()),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnresolvedEntity { name, at } => {
                write!(f, "{at} refers to undeclared entity '{name}'")
            }
            Violation::StrongEntityMissingKey { entity } => {
                write!(f, "strong entity '{entity}' has attributes but no key")
            }
            Violation::StrongEntityHasPartialKey { entity, attribute } => write!(
                f,
                "strong entity '{entity}' declares partial key '{attribute}'"
            ),
            Violation::WeakEntityHasKey { entity, attribute } => {
                write!(f, "weak entity '{entity}' declares key '{attribute}'")
            }
            Violation::WeakEntityMultiplePartialKeys { entity } => {
                write!(
                    f,
                    "weak entity '{entity}' declares more than one partial key"
                )
            }
            Violation::WeakEntityNotIdentified { entity } => write!(
                f,
                "weak entity '{entity}' does not participate totally in an identifying relationship"
            ),
            Violation::IdentifyingWithoutWeakEntity { relationship } => write!(
                f,
                "identifying relationship '{relationship}' has no totally participating weak entity"
            ),
            Violation::DuplicateParticipant {
                relationship,
                entity,
            } => write!(
                f,
                "relationship '{relationship}' lists '{entity}' twice with the same role"
            ),
            Violation::CompositeChildKey { at, attribute } => {
                write!(f, "{at}: composite component '{attribute}' cannot be a key")
            }
            Violation::ConflictingConstraints { superclass } => write!(
                f,
                "specialization of '{superclass}' has conflicting or repeated constraints"
            ),
            Violation::DuplicateUnionSource { union, source } => {
                write!(f, "union '{union}' lists source '{source}' more than once")
            }
        }
    }
}

impl Serialize for Violation {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("Violation", 3)?;
        s.serialize_field("code", self.code())?;
        s.serialize_field("location", &self.location())?;
        s.serialize_field("message", &self.to_string())?;
        s.end()
    }
}

/// Report every structural violation in `schema`, in declaration order.
pub fn validate(schema: &ErdSchema) -> Vec<Violation> {
    let declared: HashSet<&str> = schema.entities.iter().map(|e| e.name.as_str()).collect();
    let mut out = Vec::new();

    let unresolved = |name: &str, at: Location, out: &mut Vec<Violation>| {
        if !declared.contains(name) {
            out.push(Violation::UnresolvedEntity {
                name: name.to_string(),
                at,
            });
        }
    };

    for e in &schema.entities {
        let keys: Vec<&AttributeDecl> = e
            .attributes
            .iter()
            .filter(|a| a.kind == AttributeKind::Key)
            .collect();
        let partials: Vec<&AttributeDecl> = e
            .attributes
            .iter()
            .filter(|a| a.kind == AttributeKind::PartialKey)
            .collect();
        if e.is_weak() {
            for k in &keys {
                out.push(Violation::WeakEntityHasKey {
                    entity: e.name.clone(),
                    attribute: k.name.clone(),
                });
            }
            if partials.len() > 1 {
                out.push(Violation::WeakEntityMultiplePartialKeys {
                    entity: e.name.clone(),
                });
            }
            let identified = schema.relationships.iter().any(|r| {
                r.identifying && r.participants.iter().any(|p| p.entity == e.name && p.total)
            });
            if !identified {
                out.push(Violation::WeakEntityNotIdentified {
                    entity: e.name.clone(),
                });
            }
        } else {
            // Subclasses inherit their key; union categories get a surrogate.
            let inherits_key = schema
                .specializations
                .iter()
                .any(|s| s.subcategories.contains(&e.name))
                || schema.unions.iter().any(|u| u.name == e.name);
            if !e.attributes.is_empty() && keys.is_empty() && !inherits_key {
                out.push(Violation::StrongEntityMissingKey {
                    entity: e.name.clone(),
                });
            }
            for p in &partials {
                out.push(Violation::StrongEntityHasPartialKey {
                    entity: e.name.clone(),
                    attribute: p.name.clone(),
                });
            }
        }
        composite_keys(&e.attributes, &Location::Entity(e.name.clone()), &mut out);
    }

    for r in &schema.relationships {
        let at = Location::Relationship(r.name.clone());
        for (i, p) in r.participants.iter().enumerate() {
            unresolved(&p.entity, at.clone(), &mut out);
            if r.participants[..i]
                .iter()
                .any(|q| q.entity == p.entity && q.role == p.role)
            {
                out.push(Violation::DuplicateParticipant {
                    relationship: r.name.clone(),
                    entity: p.entity.clone(),
                });
            }
        }
        if r.identifying {
            let owned = r
                .participants
                .iter()
                .any(|p| p.total && schema.entity(&p.entity).is_some_and(|e| e.is_weak()));
            if !owned {
                out.push(Violation::IdentifyingWithoutWeakEntity {
                    relationship: r.name.clone(),
                });
            }
        }
        composite_keys(&r.attributes, &at, &mut out);
    }

    for s in &schema.specializations {
        let at = Location::Specialization(s.name.clone());
        for name in s.entity_names() {
            unresolved(name, at.clone(), &mut out);
        }
        let count = |c: SpecializationConstraint| s.constraints.iter().filter(|&&x| x == c).count();
        let disjointness = count(SpecializationConstraint::Disjoint)
            + count(SpecializationConstraint::Overlapping);
        let completeness =
            count(SpecializationConstraint::Total) + count(SpecializationConstraint::Partial);
        if disjointness > 1 || completeness > 1 {
            out.push(Violation::ConflictingConstraints {
                superclass: s.name.clone(),
            });
        }
    }

    for u in &schema.unions {
        let at = Location::Union(u.name.clone());
        for name in u.entity_names() {
            unresolved(name, at.clone(), &mut out);
        }
        for (i, src) in u.sources.iter().enumerate() {
            if u.sources[..i].contains(src) {
                out.push(Violation::DuplicateUnionSource {
                    union: u.name.clone(),
                    source: src.clone(),
                });
            }
        }
    }

    out
}

fn composite_keys(attrs: &[AttributeDecl], at: &Location, out: &mut Vec<Violation>) {
    for a in attrs {
        if a.kind == AttributeKind::Composite {
            for child in &a.children {
                if child.kind.is_key_like() {
                    out.push(Violation::CompositeChildKey {
                        at: at.clone(),
                        attribute: format!("{}.{}", a.name, child.name),
                    });
                }
            }
            composite_keys(&a.children, at, out);
        }
    }
}

/// Names referenced by some declaration but never declared as entities.
pub fn unresolved_entities(schema: &ErdSchema) -> Vec<String> {
    validate(schema)
        .into_iter()
        .filter_map(|v| match v {
            Violation::UnresolvedEntity { name, .. } => Some(name),
            _ => None,
        })
        .collect()
}
