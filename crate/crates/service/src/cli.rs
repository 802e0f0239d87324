//! One-shot commands. Output contains no ids, timestamps or latencies, so
//! reruns against the same inputs and mock script are byte-identical.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use erd_mentor_core::eval::{
    compute_metrics, load_labels, render_report, select_labels, LabelerSelection,
};
use erd_mentor_core::prompt::{FaqEntry, PromptKind};
use erd_mentor_core::{load_requirements, parse, validate};
use erd_mentor_llm::{Backend, Gateway, HttpBackend, LlmConfig, MockBackend, MockScript};
use serde::Serialize;
use thiserror::Error;

use crate::pipeline::{self, PipelineError, Scope};
use crate::service::ViolationView;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_LLM: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or invalid input: exit 2.
    #[error("{0}")]
    Input(String),
    /// Model call failed: exit 3.
    #[error("{0}")]
    Llm(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Llm(_) => EXIT_LLM,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub struct FeedbackArgs<'a> {
    pub requirements: &'a Path,
    pub erd: &'a Path,
    pub relationship: Option<&'a str>,
    pub mock: Option<&'a Path>,
    pub json: bool,
    pub whole_diagram: bool,
}

#[derive(Debug, Serialize)]
pub struct ExchangeSummary {
    pub stage: PromptKind,
    pub prompt_digest: String,
    pub backend: String,
}

#[derive(Debug, Serialize)]
pub struct FeedbackReport {
    /// `None` for a whole-diagram run.
    pub relationship: Option<String>,
    pub violations: Vec<ViolationView>,
    pub relevant_requirement_ids: Vec<String>,
    pub feedback: String,
    pub faq: Vec<FaqEntry>,
    pub faq_warning: Option<String>,
    pub exchanges: Vec<ExchangeSummary>,
}

pub async fn feedback(args: FeedbackArgs<'_>) -> Result<FeedbackReport, CliError> {
    let requirements = load_requirements(&read(args.requirements)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.requirements.display())))?;
    let text = read(args.erd)?;
    let parsed = parse(&text).map_err(|errors| {
        let mut msg = format!("{}: the diagram does not parse", args.erd.display());
        for e in errors {
            let _ = write!(msg, "\n  {}:{e}", args.erd.display());
        }
        CliError::Input(msg)
    })?;
    let scope = match (args.relationship, args.whole_diagram) {
        (_, true) => Scope::WholeDiagram,
        (Some(name), false) => Scope::Relationship(name.to_string()),
        (None, false) => return Err(CliError::Input("--relationship is required".into())),
    };

    let (backend, config): (Arc<dyn Backend>, LlmConfig) = match args.mock {
        Some(path) => {
            let script = MockScript::from_file(path).map_err(|e| CliError::Input(e.to_string()))?;
            (Arc::new(MockBackend::new(script)), LlmConfig::default())
        }
        None => {
            let config = LlmConfig::from_env().map_err(|e| CliError::Input(e.to_string()))?;
            let backend = HttpBackend::new(&config).map_err(|e| CliError::Input(e.to_string()))?;
            (Arc::new(backend), config)
        }
    };
    let gateway = Gateway::new(backend, config).map_err(|e| CliError::Input(e.to_string()))?;

    let outcome = pipeline::run(&gateway, &requirements, &parsed.schema, &scope)
        .await
        .map_err(|e| match e {
            PipelineError::Prune(p) => CliError::Input(p.to_string()),
            llm @ PipelineError::Llm { .. } => CliError::Llm(llm.to_string()),
        })?;

    Ok(FeedbackReport {
        relationship: match scope {
            Scope::Relationship(name) => Some(name),
            Scope::WholeDiagram => None,
        },
        violations: validate(&parsed.schema)
            .iter()
            .map(ViolationView::from)
            .collect(),
        relevant_requirement_ids: outcome.relevant.matched_ids(),
        feedback: outcome.feedback.text,
        faq: outcome.faq.entries,
        faq_warning: outcome.faq_warning,
        exchanges: outcome
            .exchanges
            .into_iter()
            .map(|(stage, e)| ExchangeSummary {
                stage,
                prompt_digest: e.prompt_digest,
                backend: e.backend_id,
            })
            .collect(),
    })
}

pub fn render_feedback(report: &FeedbackReport, json: bool) -> String {
    if json {
        let mut s = serde_json::to_string_pretty(report).expect("report serializes");
        s.push('\n');
        return s;
    }
    let mut out = String::new();
    match &report.relationship {
        Some(name) => writeln!(out, "Relationship: {name}"),
        None => writeln!(out, "Whole diagram"),
    }
    .unwrap();
    for v in &report.violations {
        writeln!(out, "Structural issue: {}", v.message).unwrap();
    }
    let ids = if report.relevant_requirement_ids.is_empty() {
        "(none)".to_string()
    } else {
        report.relevant_requirement_ids.join(", ")
    };
    writeln!(out, "Relevant requirements: {ids}\n").unwrap();
    writeln!(out, "Feedback\n--------\n{}\n", report.feedback).unwrap();
    writeln!(out, "FAQ\n---").unwrap();
    match &report.faq_warning {
        Some(w) => writeln!(out, "{w}").unwrap(),
        None if report.faq.is_empty() => writeln!(out, "(no questions)").unwrap(),
        None => {
            for (i, e) in report.faq.iter().enumerate() {
                writeln!(out, "{}. Q: {}\n   A: {}", i + 1, e.question, e.answer).unwrap();
            }
        }
    }
    writeln!(out, "\nModel calls: {}", report.exchanges.len()).unwrap();
    for e in &report.exchanges {
        writeln!(out, "  {} {} ({})", e.stage, e.prompt_digest, e.backend).unwrap();
    }
    out
}

pub fn eval(labels: &Path, selection: &LabelerSelection) -> Result<String, CliError> {
    let text = read(labels)?;
    let input =
        |e: erd_mentor_core::eval::EvalError| CliError::Input(format!("{}: {e}", labels.display()));
    let labels = load_labels(&text).map_err(input)?;
    let selected = select_labels(&labels, selection).map_err(input)?;
    let metrics = compute_metrics(&selected).map_err(input)?;
    Ok(render_report(&metrics))
}
