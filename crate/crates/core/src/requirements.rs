//! Educator-authored requirement corpora.
//!
//! Each item has a description (shown to students) plus rubrics and
//! questions that only ever travel to the language model.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequirementItem {
    pub id: String,
    pub description: String,
    #[serde(default)]
    pub rubrics: Vec<String>,
    #[serde(default)]
    pub questions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequirementSet {
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub version: String,
    pub items: Vec<RequirementItem>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RequirementsError {
    #[error("malformed requirements document: {0}")]
    MalformedDocument(String),
    #[error("requirement set must contain at least one item")]
    NoItems,
    #[error("duplicate requirement id '{0}'")]
    DuplicateId(String),
    #[error("requirement '{0}' has an empty description")]
    EmptyDescription(String),
}

/// Advisory: one description seems to describe several relationships.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GranularityWarning {
    pub item_id: String,
    pub verbs: Vec<String>,
}

/// Verbs that typically name a relationship in a problem statement.
const RELATIONSHIP_VERBS: &[&str] = &[
    "has",
    "have",
    "includes",
    "include",
    "contains",
    "contain",
    "issues",
    "issue",
    "treats",
    "treat",
    "owns",
    "own",
    "belongs",
    "belong",
    "manages",
    "manage",
    "works",
    "work",
    "assigned",
    "supervises",
    "supervise",
    "places",
    "place",
    "pays",
    "pay",
    "holds",
    "hold",
    "provides",
    "provided",
    "provide",
    "enrolls",
    "enroll",
    "takes",
    "take",
    "teaches",
    "teach",
    "employs",
    "employ",
    "records",
    "record",
    "prescribes",
    "prescribe",
    "admits",
    "admit",
    "receives",
    "receive",
    "submits",
    "submit",
    "sells",
    "sell",
    "buys",
    "buy",
    "writes",
    "write",
];

const LINT_THRESHOLD: usize = 3;

impl RequirementSet {
    pub fn item(&self, id: &str) -> Option<&RequirementItem> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("requirement sets always serialize")
    }

    fn check(&self) -> Result<(), RequirementsError> {
        if self.items.is_empty() {
            return Err(RequirementsError::NoItems);
        }
        let mut ids = BTreeSet::new();
        for item in &self.items {
            if !ids.insert(item.id.as_str()) {
                return Err(RequirementsError::DuplicateId(item.id.clone()));
            }
            if item.description.trim().is_empty() {
                return Err(RequirementsError::EmptyDescription(item.id.clone()));
            }
        }
        Ok(())
    }
}

pub fn load_requirements(text: &str) -> Result<RequirementSet, RequirementsError> {
    let set: RequirementSet = serde_json::from_str(text)
        .map_err(|e| RequirementsError::MalformedDocument(e.to_string()))?;
    set.check()?;
    for w in granularity_lint(&set) {
        tracing::warn!(
            item = %w.item_id,
            verbs = ?w.verbs,
            "requirement description may cover several relationships"
        );
    }
    Ok(set)
}

/// Items whose description uses three or more distinct relationship verbs.
pub fn granularity_lint(set: &RequirementSet) -> Vec<GranularityWarning> {
    set.items
        .iter()
        .filter_map(|item| {
            let words: BTreeSet<String> = item
                .description
                .split(|c: char| !c.is_alphanumeric())
                .map(|w| w.to_lowercase())
                .filter(|w| RELATIONSHIP_VERBS.contains(&w.as_str()))
                .collect();
            (words.len() >= LINT_THRESHOLD).then(|| GranularityWarning {
                item_id: item.id.clone(),
                verbs: words.into_iter().collect(),
            })
        })
        .collect()
}

/// What students see: descriptions only, one paragraph per item.
pub fn student_view(set: &RequirementSet) -> String {
    set.items
        .iter()
        .map(|i| i.description.as_str())
        .collect::<Vec<_>>()
        .join("\n\n")
}
