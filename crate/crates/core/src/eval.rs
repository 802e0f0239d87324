//! Per-category precision, recall and F1 for labelled feedback.
//!
//! A positive is a mistake actually present in the submission for that
//! category. TP: the feedback caught it. FP: the feedback flagged a mistake
//! that is not there. TN: the feedback confirmed a correct design. FN: the
//! feedback called an incorrect design correct.
//!
//! Precision, recall and F1 are all ratios of integer counts, so reports
//! round them exactly (half-up to two decimals) from the counts rather than
//! from floating point.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MistakeCategory {
    RelationshipParticipants,
    Cardinalities,
    Attributes,
    AttributeTypes,
    Keys,
    TernaryRelationships,
    TotalParticipation,
    RelationshipTypes,
    SpecializationOrUnion,
    EntityTypes,
    InvalidRelationships,
}

impl MistakeCategory {
    /// Report row order.
    pub const ALL: [MistakeCategory; 11] = [
        MistakeCategory::RelationshipParticipants,
        MistakeCategory::Cardinalities,
        MistakeCategory::Attributes,
        MistakeCategory::AttributeTypes,
        MistakeCategory::Keys,
        MistakeCategory::TernaryRelationships,
        MistakeCategory::TotalParticipation,
        MistakeCategory::RelationshipTypes,
        MistakeCategory::SpecializationOrUnion,
        MistakeCategory::EntityTypes,
        MistakeCategory::InvalidRelationships,
    ];

    pub fn ident(self) -> &'static str {
        match self {
            MistakeCategory::RelationshipParticipants => "RelationshipParticipants",
            MistakeCategory::Cardinalities => "Cardinalities",
            MistakeCategory::Attributes => "Attributes",
            MistakeCategory::AttributeTypes => "AttributeTypes",
            MistakeCategory::Keys => "Keys",
            MistakeCategory::TernaryRelationships => "TernaryRelationships",
            MistakeCategory::TotalParticipation => "TotalParticipation",
            MistakeCategory::RelationshipTypes => "RelationshipTypes",
            MistakeCategory::SpecializationOrUnion => "SpecializationOrUnion",
            MistakeCategory::EntityTypes => "EntityTypes",
            MistakeCategory::InvalidRelationships => "InvalidRelationships",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            MistakeCategory::RelationshipParticipants => "Relationship Participants",
            MistakeCategory::Cardinalities => "Cardinalities",
            MistakeCategory::Attributes => "Attributes",
            MistakeCategory::AttributeTypes => "Attribute Types",
            MistakeCategory::Keys => "Keys",
            MistakeCategory::TernaryRelationships => "Ternary Relationships",
            MistakeCategory::TotalParticipation => "Total Participation",
            MistakeCategory::RelationshipTypes => "Relationship Types",
            MistakeCategory::SpecializationOrUnion => "Specialization or Union",
            MistakeCategory::EntityTypes => "Entity Types",
            MistakeCategory::InvalidRelationships => "Invalid Relationships",
        }
    }
}

impl fmt::Display for MistakeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.ident())
    }
}

impl FromStr for MistakeCategory {
    type Err = ();

    /// Accepts the identifier or the report title, ignoring case, spaces and
    /// underscores.
    fn from_str(s: &str) -> Result<Self, ()> {
        let squash = |x: &str| {
            x.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        };
        let wanted = squash(s);
        MistakeCategory::ALL
            .into_iter()
            .find(|c| squash(c.ident()) == wanted || squash(c.title()) == wanted)
            .ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    TP,
    FP,
    TN,
    FN,
}

impl FromStr for Outcome {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_uppercase().as_str() {
            "TP" => Ok(Outcome::TP),
            "FP" => Ok(Outcome::FP),
            "TN" => Ok(Outcome::TN),
            "FN" => Ok(Outcome::FN),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeLabel {
    pub feedback_id: String,
    pub category: MistakeCategory,
    pub outcome: Outcome,
    pub labeler: String,
    pub note: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("line {line}: unknown category '{value}'")]
    UnknownCategory { line: u64, value: String },
    #[error("line {line}: unknown outcome '{value}' (expected TP, FP, TN or FN)")]
    UnknownOutcome { line: u64, value: String },
    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },
    #[error(
        "duplicate label for feedback '{feedback_id}', category {category}, labeler '{labeler}'"
    )]
    DuplicateLabel {
        feedback_id: String,
        category: MistakeCategory,
        labeler: String,
    },
    #[error("labels come from several labelers ({0}); choose one or use majority vote")]
    AmbiguousLabeler(String),
    #[error("no labels from labeler '{0}'")]
    UnknownLabeler(String),
    #[error(
        "precision and recall must lie in [0, 1] and not both be zero (got {precision}, {recall})"
    )]
    DomainError { precision: f64, recall: f64 },
}

pub const LABEL_HEADER: [&str; 5] = ["feedback_id", "category", "outcome", "labeler", "note"];

/// Read labels from CSV with header `feedback_id,category,outcome,labeler,note`.
pub fn load_labels(text: &str) -> Result<Vec<OutcomeLabel>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header_line = 1;
    let headers = rdr.headers().map_err(|e| EvalError::MalformedRow {
        line: header_line,
        message: e.to_string(),
    })?;
    let found: Vec<&str> = headers.iter().collect();
    if found.len() < 4 || found[..4] != LABEL_HEADER[..4] || found.len() > 5 {
        return Err(EvalError::MalformedRow {
            line: header_line,
            message: format!("expected header {}", LABEL_HEADER.join(",")),
        });
    }

    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| EvalError::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() < 4 || record.len() > 5 {
            return Err(EvalError::MalformedRow {
                line,
                message: format!("expected 4 or 5 fields, found {}", record.len()),
            });
        }
        let feedback_id = record[0].to_string();
        if feedback_id.is_empty() {
            return Err(EvalError::MalformedRow {
                line,
                message: "empty feedback_id".into(),
            });
        }
        let category = record[1].parse().map_err(|_| EvalError::UnknownCategory {
            line,
            value: record[1].to_string(),
        })?;
        let outcome = record[2].parse().map_err(|_| EvalError::UnknownOutcome {
            line,
            value: record[2].to_string(),
        })?;
        labels.push(OutcomeLabel {
            feedback_id,
            category,
            outcome,
            labeler: record[3].to_string(),
            note: record.get(4).unwrap_or_default().to_string(),
        });
    }
    Ok(labels)
}

pub fn labels_to_csv(labels: &[OutcomeLabel]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(LABEL_HEADER).expect("in-memory write");
    for l in labels {
        let outcome = format!("{:?}", l.outcome);
        w.write_record([
            l.feedback_id.as_str(),
            l.category.ident(),
            outcome.as_str(),
            l.labeler.as_str(),
            l.note.as_str(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV of UTF-8 fields")
}

/// How to reduce several labelers to one outcome per (feedback, category).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LabelerSelection {
    /// Require exactly one labeler in the input.
    #[default]
    Single,
    Labeler(String),
    /// Most common outcome; ties go to the lexicographically smallest labeler.
    Majority,
}

pub fn select_labels(
    labels: &[OutcomeLabel],
    selection: &LabelerSelection,
) -> Result<Vec<OutcomeLabel>, EvalError> {
    check_duplicates(labels)?;
    match selection {
        LabelerSelection::Single => {
            let mut names: Vec<&str> = labels.iter().map(|l| l.labeler.as_str()).collect();
            names.sort_unstable();
            names.dedup();
            if names.len() > 1 {
                return Err(EvalError::AmbiguousLabeler(names.join(", ")));
            }
            Ok(labels.to_vec())
        }
        LabelerSelection::Labeler(id) => {
            let picked: Vec<OutcomeLabel> = labels
                .iter()
                .filter(|l| &l.labeler == id)
                .cloned()
                .collect();
            if picked.is_empty() {
                return Err(EvalError::UnknownLabeler(id.clone()));
            }
            Ok(picked)
        }
        LabelerSelection::Majority => {
            let mut groups: BTreeMap<(&str, MistakeCategory), Vec<&OutcomeLabel>> = BTreeMap::new();
            for l in labels {
                groups
                    .entry((l.feedback_id.as_str(), l.category))
                    .or_default()
                    .push(l);
            }
            Ok(groups
                .into_values()
                .map(|mut group| {
                    group.sort_by(|a, b| a.labeler.cmp(&b.labeler));
                    let mut counts: HashMap<Outcome, usize> = HashMap::new();
                    for l in &group {
                        *counts.entry(l.outcome).or_default() += 1;
                    }
                    let best = counts.values().copied().max().unwrap_or(0);
                    let winner = group
                        .iter()
                        .find(|l| counts[&l.outcome] == best)
                        .expect("non-empty group");
                    OutcomeLabel {
                        labeler: "majority".into(),
                        ..(*winner).clone()
                    }
                })
                .collect())
        }
    }
}

fn check_duplicates(labels: &[OutcomeLabel]) -> Result<(), EvalError> {
    let mut seen = std::collections::HashSet::new();
    for l in labels {
        if !seen.insert((&l.feedback_id, l.category, &l.labeler)) {
            return Err(EvalError::DuplicateLabel {
                feedback_id: l.feedback_id.clone(),
                category: l.category,
                labeler: l.labeler.clone(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Counts {
    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Equal to the harmonic mean of precision and recall whenever both are
    /// defined and not both zero.
    pub fn f1(&self) -> Option<f64> {
        if self.tp + self.fp == 0 || self.tp + self.fn_ == 0 || self.tp == 0 {
            return None;
        }
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    fn precision_cents(&self) -> Option<u64> {
        round_cents(self.tp, self.tp + self.fp)
    }

    fn recall_cents(&self) -> Option<u64> {
        round_cents(self.tp, self.tp + self.fn_)
    }

    fn f1_cents(&self) -> Option<u64> {
        self.f1()?;
        round_cents(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// `num/den` rounded half-up to hundredths, as an integer number of cents.
pub fn round_cents(num: u64, den: u64) -> Option<u64> {
    (den > 0).then(|| (200 * num + den) / (2 * den))
}

/// Half-up rounding of a float to two decimals. The small nudge absorbs
/// binary representation error (0.945 is stored as 0.94499...).
pub fn round2(x: f64) -> f64 {
    ((x * 100.0) + 0.5 + 1e-9).floor() / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryMetrics {
    pub category: MistakeCategory,
    pub counts: Counts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Aggregate labels into one row per category, in report order. Categories
/// without labels get zero counts and undefined metrics.
pub fn compute_metrics(labels: &[OutcomeLabel]) -> Result<Vec<CategoryMetrics>, EvalError> {
    check_duplicates(labels)?;
    let mut counts: HashMap<MistakeCategory, Counts> = HashMap::new();
    for l in labels {
        let c = counts.entry(l.category).or_default();
        match l.outcome {
            Outcome::TP => c.tp += 1,
            Outcome::FP => c.fp += 1,
            Outcome::TN => c.tn += 1,
            Outcome::FN => c.fn_ += 1,
        }
    }
    Ok(MistakeCategory::ALL
        .into_iter()
        .map(|category| {
            metrics_from_counts(category, counts.get(&category).copied().unwrap_or_default())
        })
        .collect())
}

pub fn metrics_from_counts(category: MistakeCategory, counts: Counts) -> CategoryMetrics {
    CategoryMetrics {
        category,
        counts,
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
    }
}

/// Harmonic mean of precision and recall.
pub fn f1(precision: f64, recall: f64) -> Result<f64, EvalError> {
    let in_range = |x: f64| (0.0..=1.0).contains(&x);
    if !in_range(precision) || !in_range(recall) || precision + recall == 0.0 {
        return Err(EvalError::DomainError { precision, recall });
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Smallest counts (by tp + fp + fn, then tp, then fp) whose precision and
/// recall round half-up to the given hundredths. `tn` is left at zero.
pub fn minimal_counts(precision_cents: u64, recall_cents: u64, max_total: u64) -> Option<Counts> {
    for total in 1..=max_total {
        for tp in 0..=total {
            for fp in 0..=total - tp {
                let fn_ = total - tp - fp;
                if round_cents(tp, tp + fp) == Some(precision_cents)
                    && round_cents(tp, tp + fn_) == Some(recall_cents)
                {
                    return Some(Counts { tp, fp, tn: 0, fn_ });
                }
            }
        }
    }
    None
}

/// One label per counted outcome, with synthetic feedback ids.
pub fn synthesize_labels(
    category: MistakeCategory,
    counts: Counts,
    labeler: &str,
) -> Vec<OutcomeLabel> {
    let mut out = Vec::new();
    for (outcome, n) in [
        (Outcome::TP, counts.tp),
        (Outcome::FP, counts.fp),
        (Outcome::TN, counts.tn),
        (Outcome::FN, counts.fn_),
    ] {
        for i in 0..n {
            out.push(OutcomeLabel {
                feedback_id: format!("{}-{:?}-{i}", category.ident(), outcome),
                category,
                outcome,
                labeler: labeler.to_string(),
                note: String::new(),
            });
        }
    }
    out
}

pub const UNDEFINED: &str = "—";

fn cell(cents: Option<u64>) -> String {
    match cents {
        Some(c) => format!("{}.{:02}", c / 100, c % 100),
        None => UNDEFINED.to_string(),
    }
}

/// Markdown table with columns Precision, Recall, F1 Score.
pub fn render_report(metrics: &[CategoryMetrics]) -> String {
    let mut out = String::from("| Category | Precision | Recall | F1 Score |\n|---|---|---|---|\n");
    for m in metrics {
        out.push_str(&format!(
            "| {} | {} | {} | {} |\n",
            m.category.title(),
            cell(m.counts.precision_cents()),
            cell(m.counts.recall_cents()),
            cell(m.counts.f1_cents()),
        ));
    }
    out
}
