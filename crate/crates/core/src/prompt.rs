//! The three prompts of the feedback pipeline and parsers for their replies.
//!
//! Prompts are rendered from the JSON templates in `templates/`. Each
//! template refers to its inputs as `$submitted-erd`, `$problem-statements`,
//! `$relevant-statements` and `$feedback`; substituted values are JSON, so
//! every rendered prompt is itself a valid JSON document.
//!
//! Model replies are parsed tolerantly: markdown fences and surrounding prose
//! are stripped and the first JSON value is used.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::json::to_json_value;
use crate::model::ErdSchema;
use crate::prune::PrunedView;
use crate::requirements::RequirementSet;

pub const MATCHING_TEMPLATE: &str = include_str!("../templates/matching.json");
pub const FEEDBACK_TEMPLATE: &str = include_str!("../templates/feedback.json");
pub const FAQ_TEMPLATE: &str = include_str!("../templates/faq.json");
/// Maintenance only: comments on a whole diagram instead of one relationship.
pub const WHOLE_DIAGRAM_FEEDBACK_TEMPLATE: &str =
    include_str!("../templates/feedback_whole_diagram.json");

pub const MATCHING_TASK: &str = "Select the relevant items from the problem statements for explaining the given entity-relationships.";
pub const FEEDBACK_TASK: &str = "Provide feedback based on the submitted relationship and participating entities, and their attributes based on the provided solution and problem statements. The submission only contains one relationship.";
pub const FAQ_TASK: &str = "What are potential follow up questions and answers regarding the provided feedback for the submitted ERD. Answer the questions with detailed explanation.";

/// Appended when a reply could not be parsed and the model is asked again.
pub const CORRECTIVE_INSTRUCTION: &str =
    "Respond with only the JSON object in the specified shape.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Matching,
    Feedback,
    Faq,
}

impl PromptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Matching => "matching",
            PromptKind::Feedback => "feedback",
            PromptKind::Faq => "faq",
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub kind: PromptKind,
    pub body: String,
    /// SHA-256 (hex) over the prompt kind and every substituted input.
    pub input_digest: String,
}

impl PromptText {
    /// The same prompt with the corrective instruction appended, for a
    /// re-ask after an unparseable reply.
    pub fn with_correction(&self, attempt: usize) -> PromptText {
        let body = format!("{}\n\n{}", self.body, CORRECTIVE_INSTRUCTION);
        let input_digest = digest(
            self.kind,
            &[
                ("base", self.input_digest.clone()),
                ("retry", attempt.to_string()),
            ],
        );
        PromptText {
            kind: self.kind,
            body,
            input_digest,
        }
    }
}

fn digest(kind: PromptKind, vars: &[(&str, String)]) -> String {
    let mut sorted: Vec<&(&str, String)> = vars.iter().collect();
    sorted.sort_by_key(|(name, _)| *name);
    let mut h = Sha256::new();
    h.update(kind.as_str().as_bytes());
    for (name, value) in sorted {
        h.update([0u8]);
        h.update(name.as_bytes());
        h.update([0u8]);
        h.update((value.len() as u64).to_le_bytes());
        h.update(value.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Substitute `$name` placeholders. Multi-line values are indented to the
/// placeholder's line so the result stays readable.
fn render(template: &str, vars: &[(&str, String)]) -> String {
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(i) = rest.find('$') {
        out.push_str(&rest[..i]);
        let after = &rest[i + 1..];
        let len = after
            .find(|c: char| !(c.is_ascii_lowercase() || c == '-'))
            .unwrap_or(after.len());
        let name = &after[..len];
        match vars.iter().find(|(n, _)| *n == name) {
            Some((_, value)) => {
                let line_start = out.rfind('\n').map_or(0, |p| p + 1);
                let indent: String = out[line_start..]
                    .chars()
                    .take_while(|c| *c == ' ')
                    .collect();
                out.push_str(&value.replace('\n', &format!("\n{indent}")));
                rest = &after[len..];
            }
            None => {
                out.push('$');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON values always serialize")
}

fn build(kind: PromptKind, template: &str, vars: Vec<(&str, String)>) -> PromptText {
    PromptText {
        kind,
        body: render(template, &vars),
        input_digest: digest(kind, &vars),
    }
}

/// One requirement item as the model sees it (no id).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub description: String,
    pub rubrics: Vec<String>,
    pub questions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevantItem {
    /// Requirement id when the description matched one in the source set.
    pub id: Option<String>,
    #[serde(flatten)]
    pub statement: Statement,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RelevantStatements {
    pub items: Vec<RelevantItem>,
}

impl RelevantStatements {
    pub fn matched_ids(&self) -> Vec<String> {
        self.items.iter().filter_map(|i| i.id.clone()).collect()
    }

    pub fn unmatched(&self) -> usize {
        self.items.iter().filter(|i| i.id.is_none()).count()
    }

    /// The JSON array sent to the model.
    pub fn statements_json(&self) -> Value {
        json!(self.items.iter().map(|i| &i.statement).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackText {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaqEntry {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FaqList {
    pub entries: Vec<FaqEntry>,
    /// Entries discarded for an empty question or answer.
    pub dropped: usize,
}

pub fn build_matching_prompt(reqs: &RequirementSet, view: &PrunedView) -> PromptText {
    build_matching_prompt_for(reqs, &view.schema)
}

/// Matching prompt over an arbitrary schema (whole-diagram maintenance mode).
pub fn build_matching_prompt_for(reqs: &RequirementSet, schema: &ErdSchema) -> PromptText {
    let statements: Vec<Statement> = reqs
        .items
        .iter()
        .map(|i| Statement {
            description: i.description.clone(),
            rubrics: i.rubrics.clone(),
            questions: i.questions.clone(),
        })
        .collect();
    build(
        PromptKind::Matching,
        MATCHING_TEMPLATE,
        vec![
            ("submitted-erd", pretty(&to_json_value(schema))),
            ("problem-statements", pretty(&json!(statements))),
        ],
    )
}

pub fn build_feedback_prompt(relevant: &RelevantStatements, view: &PrunedView) -> PromptText {
    build(
        PromptKind::Feedback,
        FEEDBACK_TEMPLATE,
        vec![
            ("relevant-statements", pretty(&relevant.statements_json())),
            ("submitted-erd", pretty(&to_json_value(&view.schema))),
        ],
    )
}

/// Maintenance only; see [`WHOLE_DIAGRAM_FEEDBACK_TEMPLATE`].
pub fn build_whole_diagram_feedback_prompt(
    relevant: &RelevantStatements,
    schema: &ErdSchema,
) -> PromptText {
    build(
        PromptKind::Feedback,
        WHOLE_DIAGRAM_FEEDBACK_TEMPLATE,
        vec![
            ("relevant-statements", pretty(&relevant.statements_json())),
            ("submitted-erd", pretty(&to_json_value(schema))),
        ],
    )
}

pub fn build_faq_prompt(
    feedback: &FeedbackText,
    relevant: &RelevantStatements,
    view: &PrunedView,
) -> PromptText {
    build_faq_prompt_for(feedback, relevant, &view.schema)
}

pub fn build_faq_prompt_for(
    feedback: &FeedbackText,
    relevant: &RelevantStatements,
    schema: &ErdSchema,
) -> PromptText {
    build(
        PromptKind::Faq,
        FAQ_TEMPLATE,
        vec![
            ("feedback", pretty(&Value::String(feedback.text.clone()))),
            ("relevant-statements", pretty(&relevant.statements_json())),
            ("submitted-erd", pretty(&to_json_value(schema))),
        ],
    )
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ResponseError {
    #[error("no JSON value found in response")]
    UnparseableResponse,
    #[error("response JSON has the wrong shape: {0}")]
    ShapeMismatch(String),
}

/// First JSON value in a model reply, looking inside a markdown fence first.
pub fn extract_json(text: &str) -> Option<Value> {
    if let Some(inner) = fenced_block(text) {
        if let Some(v) = first_value(inner) {
            return Some(v);
        }
    }
    first_value(text)
}

fn fenced_block(text: &str) -> Option<&str> {
    let open = text.find("```")?;
    let after = &text[open + 3..];
    // Skip an info string such as `json`.
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    let close = body.find("```").unwrap_or(body.len());
    Some(&body[..close])
}

fn first_value(text: &str) -> Option<Value> {
    for (i, c) in text.char_indices() {
        if c == '{' || c == '[' {
            let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
            if let Some(Ok(v)) = stream.next() {
                return Some(v);
            }
        }
    }
    None
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn string_list(v: Option<&Value>, field: &str) -> Result<Vec<String>, ResponseError> {
    match v {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::String(s)) => Ok(vec![s.clone()]),
        Some(Value::Array(items)) => items
            .iter()
            .map(|x| match x {
                Value::String(s) => Ok(s.clone()),
                _ => Err(ResponseError::ShapeMismatch(format!(
                    "'{field}' must contain strings"
                ))),
            })
            .collect(),
        Some(_) => Err(ResponseError::ShapeMismatch(format!(
            "'{field}' must be a string or a list of strings"
        ))),
    }
}

/// Pull an array out of either a bare array or an object wrapping it under
/// one of `keys` (models often echo the requested envelope).
fn array_in<'a>(v: &'a Value, keys: &[&str]) -> Option<&'a Vec<Value>> {
    match v {
        Value::Array(a) => Some(a),
        Value::Object(m) => keys.iter().find_map(|k| match m.get(*k) {
            Some(Value::Array(a)) => Some(a),
            Some(inner @ Value::Object(_)) => array_in(inner, keys),
            _ => None,
        }),
        _ => None,
    }
}

pub fn parse_matching_response(
    text: &str,
    reqs: &RequirementSet,
) -> Result<RelevantStatements, ResponseError> {
    let value = extract_json(text).ok_or(ResponseError::UnparseableResponse)?;
    let array = array_in(
        &value,
        &["relevant-statements", "relevant_statements", "output"],
    )
    .ok_or_else(|| ResponseError::ShapeMismatch("expected a list of statements".into()))?;
    let mut items = Vec::with_capacity(array.len());
    for entry in array {
        let obj = entry
            .as_object()
            .ok_or_else(|| ResponseError::ShapeMismatch("statements must be objects".into()))?;
        let description = obj
            .get("description")
            .and_then(Value::as_str)
            .filter(|d| !d.trim().is_empty())
            .ok_or_else(|| {
                ResponseError::ShapeMismatch("each statement needs a description".into())
            })?;
        let wanted = normalize_ws(description);
        let source = reqs
            .items
            .iter()
            .find(|i| i.description == description)
            .or_else(|| {
                reqs.items
                    .iter()
                    .find(|i| normalize_ws(&i.description) == wanted)
            });
        let item = match source {
            // Matched items carry the educator's own rubric and question text.
            Some(src) => RelevantItem {
                id: Some(src.id.clone()),
                statement: Statement {
                    description: src.description.clone(),
                    rubrics: src.rubrics.clone(),
                    questions: src.questions.clone(),
                },
            },
            None => {
                tracing::warn!(
                    description,
                    "model returned a statement not in the requirement set"
                );
                RelevantItem {
                    id: None,
                    statement: Statement {
                        description: description.to_string(),
                        rubrics: string_list(obj.get("rubrics"), "rubrics")?,
                        questions: string_list(obj.get("questions"), "questions")?,
                    },
                }
            }
        };
        if !items.contains(&item) {
            items.push(item);
        }
    }
    Ok(RelevantStatements { items })
}

pub fn parse_feedback_response(text: &str) -> Result<FeedbackText, ResponseError> {
    let value = extract_json(text).ok_or(ResponseError::UnparseableResponse)?;
    fn find(v: &Value) -> Option<&str> {
        match v {
            Value::Object(m) => match m.get("feedback") {
                Some(Value::String(s)) => Some(s),
                _ => m.get("output").and_then(find),
            },
            _ => None,
        }
    }
    let text = find(&value)
        .ok_or_else(|| ResponseError::ShapeMismatch("expected {\"feedback\": \"...\"}".into()))?;
    if text.trim().is_empty() {
        return Err(ResponseError::ShapeMismatch("feedback is empty".into()));
    }
    Ok(FeedbackText {
        text: text.to_string(),
    })
}

pub fn parse_faq_response(text: &str) -> Result<FaqList, ResponseError> {
    let value = extract_json(text).ok_or(ResponseError::UnparseableResponse)?;
    let array = array_in(&value, &["output", "faq", "faqs", "questions"]).ok_or_else(|| {
        ResponseError::ShapeMismatch("expected a list of question/answer objects".into())
    })?;
    let mut list = FaqList::default();
    for entry in array {
        let field = |k: &str| {
            entry
                .get(k)
                .and_then(Value::as_str)
                .map(str::trim)
                .unwrap_or_default()
                .to_string()
        };
        let (question, answer) = (field("question"), field("answer"));
        if question.is_empty() || answer.is_empty() {
            list.dropped += 1;
        } else {
            list.entries.push(FaqEntry { question, answer });
        }
    }
    if list.entries.is_empty() && list.dropped > 0 {
        return Err(ResponseError::ShapeMismatch(
            "no entry has both a question and an answer".into(),
        ));
    }
    Ok(list)
}

/// Reply shapes, as a model following the templates would produce them.
pub fn matching_reply(relevant: &RelevantStatements) -> String {
    pretty(&relevant.statements_json())
}

pub fn feedback_reply(feedback: &FeedbackText) -> String {
    pretty(&json!({ "feedback": feedback.text }))
}

pub fn faq_reply(faq: &FaqList) -> String {
    pretty(&json!(faq.entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::requirements::RequirementItem;

    fn reqs() -> RequirementSet {
        RequirementSet {
            title: "t".into(),
            version: "1".into(),
            items: vec![
                RequirementItem {
                    id: "patient".into(),
                    description: "Each patient has an id, a name and an address.".into(),
                    rubrics: vec!["Patient is a strong entity.".into()],
                    questions: vec!["What identifies a patient?".into()],
                },
                RequirementItem {
                    id: "record".into(),
                    description: "Health records are kept per patient.".into(),
                    rubrics: vec![],
                    questions: vec![],
                },
            ],
        }
    }

    #[test]
    fn render_indents_multiline_values() {
        let out = render(
            "{\n  \"a\": $x,\n  \"b\": $y\n}",
            &[("x", "[\n  1\n]".into()), ("y", "2".into())],
        );
        assert_eq!(out, "{\n  \"a\": [\n    1\n  ],\n  \"b\": 2\n}");
    }

    #[test]
    fn render_is_single_pass() {
        let out = render("$a $b", &[("a", "$b".into()), ("b", "x".into())]);
        assert_eq!(out, "$b x");
    }

    #[test]
    fn render_leaves_unknown_placeholders() {
        assert_eq!(render("cost: $5 and $nope", &[]), "cost: $5 and $nope");
    }

    #[test]
    fn digest_separates_fields() {
        let a = digest(
            PromptKind::Feedback,
            &[("x", "ab".into()), ("y", "c".into())],
        );
        let b = digest(
            PromptKind::Feedback,
            &[("x", "a".into()), ("y", "bc".into())],
        );
        let c = digest(PromptKind::Faq, &[("x", "ab".into()), ("y", "c".into())]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        let d = digest(
            PromptKind::Feedback,
            &[("y", "c".into()), ("x", "ab".into())],
        );
        assert_eq!(a, d);
    }

    #[test]
    fn extract_from_fences_and_prose() {
        let fenced = "Here you go:\n```json\n{\"feedback\": \"ok\"}\n```\nThanks";
        assert_eq!(extract_json(fenced), Some(json!({"feedback": "ok"})));
        let prose = "Sure! {\"feedback\": \"ok\"} Hope that helps.";
        assert_eq!(extract_json(prose), Some(json!({"feedback": "ok"})));
        assert_eq!(extract_json("no json at all"), None);
        assert_eq!(extract_json("see {the} list: [1, 2]"), Some(json!([1, 2])));
    }

    #[test]
    fn matching_matches_ids() {
        let reply = r#"[{"description": "Each patient has an id, a name and an address.",
                         "rubrics": "Patient is a strong entity.", "questions": []}]"#;
        let rel = parse_matching_response(reply, &reqs()).unwrap();
        assert_eq!(rel.items.len(), 1);
        assert_eq!(rel.matched_ids(), ["patient"]);
        assert_eq!(
            rel.items[0].statement.questions,
            ["What identifies a patient?"]
        );
    }

    #[test]
    fn matching_whitespace_normalized() {
        let reply = r#"{"relevant-statements": [{"description": "Health   records are kept\nper patient."}]}"#;
        let rel = parse_matching_response(reply, &reqs()).unwrap();
        assert_eq!(rel.matched_ids(), ["record"]);
    }

    #[test]
    fn matching_fenced_equals_bare() {
        let bare = r#"[{"description": "Health records are kept per patient."}]"#;
        let fenced = format!("```json\n{bare}\n```");
        assert_eq!(
            parse_matching_response(bare, &reqs()),
            parse_matching_response(&fenced, &reqs())
        );
    }

    #[test]
    fn matching_unmatched_kept() {
        let reply =
            r#"[{"description": "Something invented.", "rubrics": ["r"], "questions": "q?"}]"#;
        let rel = parse_matching_response(reply, &reqs()).unwrap();
        assert_eq!(rel.unmatched(), 1);
        assert_eq!(rel.items[0].statement.questions, ["q?"]);
    }

    #[test]
    fn matching_errors() {
        assert_eq!(
            parse_matching_response("The relevant items are the patient ones.", &reqs()),
            Err(ResponseError::UnparseableResponse)
        );
        assert!(matches!(
            parse_matching_response(r#"{"answer": 3}"#, &reqs()),
            Err(ResponseError::ShapeMismatch(_))
        ));
        assert!(matches!(
            parse_matching_response(r#"[{"rubrics": []}]"#, &reqs()),
            Err(ResponseError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn feedback_shapes() {
        assert_eq!(
            parse_feedback_response(r#"{"feedback": "Good."}"#)
                .unwrap()
                .text,
            "Good."
        );
        assert_eq!(
            parse_feedback_response(r#"{"output": {"feedback": "Nested."}}"#)
                .unwrap()
                .text,
            "Nested."
        );
        assert!(matches!(
            parse_feedback_response(r#"{"feedback": "  "}"#),
            Err(ResponseError::ShapeMismatch(_))
        ));
        assert_eq!(
            parse_feedback_response("I think it is fine."),
            Err(ResponseError::UnparseableResponse)
        );
    }

    #[test]
    fn faq_drops_incomplete_entries() {
        let reply = r#"[{"question": "Q1?", "answer": "A1"},
                        {"question": "Q2?", "answer": ""},
                        {"question": "Q3?", "answer": "A3"}]"#;
        let faq = parse_faq_response(reply).unwrap();
        assert_eq!(faq.entries.len(), 2);
        assert_eq!(faq.dropped, 1);
        let wrapped = r#"{"output": [{"question": "Q", "answer": "A"}]}"#;
        assert_eq!(parse_faq_response(wrapped).unwrap().entries.len(), 1);
        assert!(matches!(
            parse_faq_response(r#"[{"question": "Q"}]"#),
            Err(ResponseError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn replies_round_trip() {
        let fb = FeedbackText {
            text: "Line one.\nLine \"two\".".into(),
        };
        assert_eq!(parse_feedback_response(&feedback_reply(&fb)).unwrap(), fb);
        let faq = FaqList {
            entries: vec![FaqEntry {
                question: "Why?".into(),
                answer: "Because.".into(),
            }],
            dropped: 0,
        };
        assert_eq!(parse_faq_response(&faq_reply(&faq)).unwrap(), faq);
        let rel = parse_matching_response(
            r#"[{"description": "Each patient has an id, a name and an address."}]"#,
            &reqs(),
        )
        .unwrap();
        assert_eq!(
            parse_matching_response(&matching_reply(&rel), &reqs()).unwrap(),
            rel
        );
    }
}
