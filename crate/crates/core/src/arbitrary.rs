//! Proptest strategies for random, parser-constructible schemas.
//!
//! Generated schemas obey every construction rule (identifier syntax, unique
//! names, 2..=3 participants, composite shape) but are not necessarily valid:
//! they may contain dangling references, keyed weak entities and so on.

use proptest::prelude::*;
use proptest::sample::select;

use crate::model::*;

/// Names that double as grammar words; the parser must treat them by position.
const TRICKY: &[&str] = &[
    "entity",
    "weak",
    "key",
    "as",
    "N",
    "M",
    "total",
    "of",
    "union",
    "partial_key",
    "derived",
    "multivalued",
    "specialization",
    "relationship",
    "identifying",
    "disjoint",
    "node",
    "_",
    "a-b",
];

pub fn identifier() -> impl Strategy<Value = String> {
    prop_oneof![
        4 => "[A-Za-z_][A-Za-z0-9_-]{0,8}",
        1 => select(TRICKY).prop_map(str::to_string),
    ]
}

fn leaf_kind() -> impl Strategy<Value = AttributeKind> {
    select(
        &[
            AttributeKind::Simple,
            AttributeKind::Simple,
            AttributeKind::Key,
            AttributeKind::PartialKey,
            AttributeKind::Derived,
            AttributeKind::Multivalued,
        ][..],
    )
}

fn dedup_by_name(mut attrs: Vec<AttributeDecl>) -> Vec<AttributeDecl> {
    let mut seen = std::collections::HashSet::new();
    attrs.retain(|a| seen.insert(a.name.clone()));
    attrs
}

pub fn attribute() -> impl Strategy<Value = AttributeDecl> {
    let leaf = (identifier(), leaf_kind()).prop_map(|(n, k)| AttributeDecl::new(n, k));
    leaf.prop_recursive(2, 12, 3, |inner| {
        (identifier(), prop::collection::vec(inner, 1..4))
            .prop_map(|(n, children)| AttributeDecl::composite(n, dedup_by_name(children)))
    })
}

pub fn attributes(max: usize) -> impl Strategy<Value = Vec<AttributeDecl>> {
    prop::collection::vec(attribute(), 0..=max).prop_map(dedup_by_name)
}

fn cardinality() -> impl Strategy<Value = Cardinality> {
    select(&[Cardinality::One, Cardinality::N, Cardinality::M][..])
}

fn constraint() -> impl Strategy<Value = SpecializationConstraint> {
    select(
        &[
            SpecializationConstraint::Disjoint,
            SpecializationConstraint::Overlapping,
            SpecializationConstraint::Total,
            SpecializationConstraint::Partial,
        ][..],
    )
}

type RawParticipant = (prop::sample::Index, Option<String>, Cardinality, bool);
type RawRelationship = (String, bool, Vec<RawParticipant>, Vec<AttributeDecl>);

fn raw_relationship() -> impl Strategy<Value = RawRelationship> {
    (
        identifier(),
        any::<bool>(),
        prop::collection::vec(
            (
                any::<prop::sample::Index>(),
                prop::option::weighted(0.2, identifier()),
                cardinality(),
                any::<bool>(),
            ),
            2..=3,
        ),
        attributes(2),
    )
}

/// Random schema. About one reference in twelve names an undeclared entity.
pub fn schema() -> impl Strategy<Value = ErdSchema> {
    schema_sized(0..7, 0..6)
}

/// Random schema with at least one relationship, paired with one of its
/// relationship names.
pub fn schema_with_focus() -> impl Strategy<Value = (ErdSchema, String)> {
    schema_sized(1..7, 1..6).prop_flat_map(|s| {
        let names = s.relationship_names();
        (Just(s), select(names))
    })
}

fn schema_sized(
    entities: std::ops::Range<usize>,
    relationships: std::ops::Range<usize>,
) -> impl Strategy<Value = ErdSchema> {
    let entity = (identifier(), any::<bool>(), attributes(4));
    (
        prop::collection::vec(entity, entities),
        prop::collection::vec(raw_relationship(), relationships),
        prop::collection::vec(
            (
                any::<prop::sample::Index>(),
                prop::collection::vec(any::<prop::sample::Index>(), 1..4),
                prop::collection::vec(constraint(), 0..3),
            ),
            0..3,
        ),
        prop::collection::vec(
            (
                any::<prop::sample::Index>(),
                prop::collection::vec(any::<prop::sample::Index>(), 2..4),
            ),
            0..2,
        ),
        prop::collection::vec("Ghost[0-9]", 1..2),
    )
        .prop_map(|(ents, rels, specs, unions, ghosts)| {
            let mut seen = std::collections::HashSet::new();
            let entities: Vec<EntityDecl> = ents
                .into_iter()
                .filter(|(n, _, _)| seen.insert(n.clone()))
                .map(|(name, weak, attributes)| EntityDecl {
                    name,
                    strength: if weak {
                        EntityStrength::Weak
                    } else {
                        EntityStrength::Strong
                    },
                    attributes,
                })
                .collect();

            // Declared names are repeated so dangling references stay rare.
            let mut pool: Vec<String> = Vec::new();
            for _ in 0..11 {
                pool.extend(entities.iter().map(|e| e.name.clone()));
            }
            pool.extend(ghosts.into_iter().filter(|g| !seen.contains(g)));
            if pool.is_empty() {
                pool.push("Ghost".into());
            }
            let pick = |i: &prop::sample::Index| pool[i.index(pool.len())].clone();

            let mut rel_seen = std::collections::HashSet::new();
            let relationships = rels
                .into_iter()
                .filter(|(n, ..)| rel_seen.insert(n.clone()))
                .map(|(name, identifying, parts, attributes)| RelationshipDecl {
                    name,
                    identifying,
                    participants: parts
                        .iter()
                        .map(|(i, role, cardinality, total)| Participation {
                            entity: pick(i),
                            role: role.clone(),
                            cardinality: *cardinality,
                            total: *total,
                        })
                        .collect(),
                    attributes,
                })
                .collect();

            let specializations = specs
                .iter()
                .map(|(sup, subs, constraints)| SpecializationDecl {
                    name: pick(sup),
                    subcategories: subs.iter().map(pick).collect(),
                    constraints: constraints.clone(),
                })
                .collect();

            let unions = unions
                .iter()
                .map(|(cat, srcs)| UnionDecl {
                    name: pick(cat),
                    sources: srcs.iter().map(pick).collect(),
                })
                .collect();

            ErdSchema {
                entities,
                relationships,
                specializations,
                unions,
            }
        })
}

/// Schemas in which every reference resolves (no dangling participants).
pub fn resolved_schema() -> impl Strategy<Value = ErdSchema> {
    schema().prop_filter("dangling reference", |s| {
        crate::validate::unresolved_entities(s).is_empty()
    })
}

/// Token soup drawn from the grammar's vocabulary, for parser robustness.
pub fn token_soup() -> impl Strategy<Value = String> {
    let token = prop_oneof![
        select(
            &[
                "entity",
                "weak",
                "relationship",
                "identifying",
                "specialization",
                "of",
                "union",
                "key",
                "partial_key",
                "derived",
                "multivalued",
                "as",
                "total",
                "1",
                "N",
                "M",
                "7",
                "disjoint",
                "overlapping",
                "{",
                "}",
                "(",
                ")",
                "[",
                "]",
                ";",
                ",",
                "\n",
                "#c\n",
                "é",
                "\"",
                "@",
            ][..]
        )
        .prop_map(str::to_string),
        identifier(),
    ];
    prop::collection::vec(token, 0..40).prop_map(|t| t.join(" "))
}
