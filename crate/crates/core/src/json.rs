//! Canonical JSON form of a diagram.
//!
//! Key names spell out what each value is (`attributes`, `cardinality`,
//! `participation`) so a language model reading the document does not have
//! to infer it. Output is pretty-printed with two-space indentation and
//! arrays in declaration order, so equal schemas give equal bytes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    check_shape, AttributeDecl, AttributeKind, Cardinality, EntityDecl, EntityStrength, ErdSchema,
    Participation, RelationshipDecl, SpecializationConstraint, SpecializationDecl, UnionDecl,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum JsonError {
    #[error("malformed JSON document: {0}")]
    MalformedDocument(String),
    #[error("schema mismatch at {path}: {message}")]
    SchemaMismatch { path: String, message: String },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaDoc {
    #[serde(default)]
    entities: Vec<EntityDoc>,
    #[serde(default)]
    relationships: Vec<RelationshipDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    specializations: Vec<SpecializationDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    unions: Vec<UnionDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityDoc {
    name: String,
    entity_type: EntityStrength,
    #[serde(default)]
    attributes: Vec<AttributeDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttributeDoc {
    name: String,
    attribute_type: AttributeKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    components: Vec<AttributeDoc>,
}

#[derive(Serialize, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum RelationshipType {
    Identifying,
    NonIdentifying,
}

#[derive(Serialize, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum ParticipationDoc {
    Total,
    Partial,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RelationshipDoc {
    name: String,
    relationship_type: RelationshipType,
    participating_entities: Vec<ParticipantDoc>,
    #[serde(default)]
    attributes: Vec<AttributeDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParticipantDoc {
    entity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    role: Option<String>,
    cardinality: Cardinality,
    participation: ParticipationDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NamedDoc {
    name: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecializationDoc {
    name: String,
    subcategories: Vec<NamedDoc>,
    #[serde(rename = "type", default)]
    constraints: Vec<SpecializationConstraint>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnionDoc {
    name: String,
    sources: Vec<NamedDoc>,
}

fn attr_doc(a: &AttributeDecl) -> AttributeDoc {
    AttributeDoc {
        name: a.name.clone(),
        attribute_type: a.kind,
        components: a.children.iter().map(attr_doc).collect(),
    }
}

fn attr_decl(d: AttributeDoc) -> AttributeDecl {
    AttributeDecl {
        name: d.name,
        kind: d.attribute_type,
        children: d.components.into_iter().map(attr_decl).collect(),
    }
}

fn named(names: &[String]) -> Vec<NamedDoc> {
    names.iter().map(|n| NamedDoc { name: n.clone() }).collect()
}

impl From<&ErdSchema> for SchemaDoc {
    fn from(s: &ErdSchema) -> Self {
        SchemaDoc {
            entities: s
                .entities
                .iter()
                .map(|e| EntityDoc {
                    name: e.name.clone(),
                    entity_type: e.strength,
                    attributes: e.attributes.iter().map(attr_doc).collect(),
                })
                .collect(),
            relationships: s
                .relationships
                .iter()
                .map(|r| RelationshipDoc {
                    name: r.name.clone(),
                    relationship_type: if r.identifying {
                        RelationshipType::Identifying
                    } else {
                        RelationshipType::NonIdentifying
                    },
                    participating_entities: r
                        .participants
                        .iter()
                        .map(|p| ParticipantDoc {
                            entity: p.entity.clone(),
                            role: p.role.clone(),
                            cardinality: p.cardinality,
                            participation: if p.total {
                                ParticipationDoc::Total
                            } else {
                                ParticipationDoc::Partial
                            },
                        })
                        .collect(),
                    attributes: r.attributes.iter().map(attr_doc).collect(),
                })
                .collect(),
            specializations: s
                .specializations
                .iter()
                .map(|sp| SpecializationDoc {
                    name: sp.name.clone(),
                    subcategories: named(&sp.subcategories),
                    constraints: sp.constraints.clone(),
                })
                .collect(),
            unions: s
                .unions
                .iter()
                .map(|u| UnionDoc {
                    name: u.name.clone(),
                    sources: named(&u.sources),
                })
                .collect(),
        }
    }
}

impl From<SchemaDoc> for ErdSchema {
    fn from(d: SchemaDoc) -> Self {
        ErdSchema {
            entities: d
                .entities
                .into_iter()
                .map(|e| EntityDecl {
                    name: e.name,
                    strength: e.entity_type,
                    attributes: e.attributes.into_iter().map(attr_decl).collect(),
                })
                .collect(),
            relationships: d
                .relationships
                .into_iter()
                .map(|r| RelationshipDecl {
                    name: r.name,
                    identifying: r.relationship_type == RelationshipType::Identifying,
                    participants: r
                        .participating_entities
                        .into_iter()
                        .map(|p| Participation {
                            entity: p.entity,
                            role: p.role,
                            cardinality: p.cardinality,
                            total: p.participation == ParticipationDoc::Total,
                        })
                        .collect(),
                    attributes: r.attributes.into_iter().map(attr_decl).collect(),
                })
                .collect(),
            specializations: d
                .specializations
                .into_iter()
                .map(|s| SpecializationDecl {
                    name: s.name,
                    subcategories: s.subcategories.into_iter().map(|n| n.name).collect(),
                    constraints: s.constraints,
                })
                .collect(),
            unions: d
                .unions
                .into_iter()
                .map(|u| UnionDecl {
                    name: u.name,
                    sources: u.sources.into_iter().map(|n| n.name).collect(),
                })
                .collect(),
        }
    }
}

/// The canonical JSON value, for embedding inside larger documents.
pub fn to_json_value(schema: &ErdSchema) -> serde_json::Value {
    serde_json::to_value(SchemaDoc::from(schema)).expect("schema documents always serialize")
}

pub fn to_json(schema: &ErdSchema) -> String {
    serde_json::to_string_pretty(&SchemaDoc::from(schema))
        .expect("schema documents always serialize")
}

pub fn from_json(text: &str) -> Result<ErdSchema, JsonError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| JsonError::MalformedDocument(e.to_string()))?;
    from_json_value(value)
}

pub fn from_json_value(value: serde_json::Value) -> Result<ErdSchema, JsonError> {
    let doc: SchemaDoc =
        serde_path_to_error::deserialize(value).map_err(|e| JsonError::SchemaMismatch {
            path: pointer(e.path()),
            message: e.inner().to_string(),
        })?;
    let schema = ErdSchema::from(doc);
    check_shape(&schema).map_err(|(path, message)| JsonError::SchemaMismatch { path, message })?;
    Ok(schema)
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}
