//! prune → match → feedback → FAQ, as three structured model calls.

use erd_mentor_core::prompt::{
    build_faq_prompt_for, build_feedback_prompt, build_matching_prompt, build_matching_prompt_for,
    build_whole_diagram_feedback_prompt, parse_faq_response, parse_feedback_response,
    parse_matching_response, FaqList, FeedbackText, PromptKind, RelevantStatements,
};
use erd_mentor_core::{prune, ErdSchema, PruneError, RequirementSet};
use erd_mentor_llm::{Gateway, LlmError, LlmExchange};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Prune(#[from] PruneError),
    #[error("{stage} stage failed: {source}")]
    Llm {
        stage: PromptKind,
        #[source]
        source: LlmError,
    },
}

/// What to comment on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scope {
    Relationship(String),
    /// Maintenance only: the whole diagram in one prompt.
    WholeDiagram,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub relevant: RelevantStatements,
    pub feedback: FeedbackText,
    pub faq: FaqList,
    /// Why the FAQ is empty, when the FAQ stage failed.
    pub faq_warning: Option<String>,
    /// Every model call, in order, tagged with its stage.
    pub exchanges: Vec<(PromptKind, LlmExchange)>,
}

pub async fn run(
    gateway: &Gateway,
    requirements: &RequirementSet,
    schema: &ErdSchema,
    scope: &Scope,
) -> Result<PipelineOutcome, PipelineError> {
    let view = match scope {
        Scope::Relationship(name) => Some(prune(schema, name)?),
        Scope::WholeDiagram => None,
    };
    let matching = match &view {
        Some(view) => build_matching_prompt(requirements, view),
        None => build_matching_prompt_for(requirements, schema),
    };
    let mut exchanges = Vec::new();
    let tag = |stage: PromptKind, list: Vec<LlmExchange>| list.into_iter().map(move |e| (stage, e));
    let fail = |stage| move |source| PipelineError::Llm { stage, source };

    let relevant = gateway
        .complete_structured(&matching, |text| {
            parse_matching_response(text, requirements)
        })
        .await
        .map_err(fail(PromptKind::Matching))?;
    exchanges.extend(tag(PromptKind::Matching, relevant.exchanges));
    let relevant = relevant.value;
    if relevant.unmatched() > 0 {
        tracing::warn!(
            count = relevant.unmatched(),
            "model returned statements outside the requirement set"
        );
    }

    let prompt = match &view {
        Some(view) => build_feedback_prompt(&relevant, view),
        None => build_whole_diagram_feedback_prompt(&relevant, schema),
    };
    let feedback = gateway
        .complete_structured(&prompt, parse_feedback_response)
        .await
        .map_err(fail(PromptKind::Feedback))?;
    exchanges.extend(tag(PromptKind::Feedback, feedback.exchanges));
    let feedback = feedback.value;

    let context = view.as_ref().map_or(schema, |v| &v.schema);
    let prompt = build_faq_prompt_for(&feedback, &relevant, context);
    let (faq, faq_warning) = match gateway
        .complete_structured(&prompt, parse_faq_response)
        .await
    {
        Ok(faq) => {
            exchanges.extend(tag(PromptKind::Faq, faq.exchanges));
            (faq.value, None)
        }
        Err(e) => {
            tracing::warn!(error = %e, "FAQ stage failed; storing feedback without FAQ");
            exchanges.extend(tag(PromptKind::Faq, e.exchanges().to_vec()));
            (FaqList::default(), Some(format!("FAQ unavailable: {e}")))
        }
    };

    Ok(PipelineOutcome {
        relevant,
        feedback,
        faq,
        faq_warning,
        exchanges,
    })
}
