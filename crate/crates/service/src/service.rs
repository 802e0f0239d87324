use std::collections::HashSet;
use std::sync::{Arc, Mutex};

use chrono::Utc;
use erd_mentor_core::json::{from_json_value, to_json_value};
use erd_mentor_core::{
    list_relationships, load_requirements, parse, prune, to_dot, validate, view_to_dot, ErdSchema,
    ParseError, PruneError, RequirementsError, Violation,
};
use erd_mentor_llm::{Gateway, LlmError};
use serde::Serialize;
use thiserror::Error;
use uuid::Uuid;

use crate::pipeline::{self, PipelineError, Scope};
use crate::records::{
    AuthorRole, DiscussionMessage, ExchangeLink, FeedbackRecord, FeedbackStatus, Project,
    Submission, MAX_MEMBERS,
};
use crate::store::{Store, StoreError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Requirements(#[from] RequirementsError),
    #[error("a project group has at most {MAX_MEMBERS} members, got {0}")]
    TooManyMembers(usize),
    #[error("member identifiers must be non-empty and distinct")]
    InvalidMembers,
    #[error("no project {0}")]
    UnknownProject(Uuid),
    #[error("no submission {0}")]
    UnknownSubmission(Uuid),
    #[error("no parent submission {0} in this project")]
    UnknownParent(Uuid),
    #[error("no feedback record {0}")]
    UnknownFeedback(Uuid),
    #[error("the submission does not parse ({} error(s))", .0.len())]
    ParseFailed(Vec<ParseError>),
    #[error(transparent)]
    UnknownRelationship(#[from] PruneError),
    #[error("a feedback request for submission {0} is already running")]
    FeedbackInProgress(Uuid),
    #[error("message body must not be empty")]
    EmptyMessage,
    #[error("diagram cannot be rendered: {0}")]
    Unrenderable(String),
    #[error("{stage} stage failed: {source}")]
    Llm {
        stage: erd_mentor_core::prompt::PromptKind,
        source: LlmError,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl From<PipelineError> for ServiceError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Prune(p) => ServiceError::UnknownRelationship(p),
            PipelineError::Llm { stage, source } => ServiceError::Llm { stage, source },
        }
    }
}

/// A structural problem, shaped for display next to the editor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ViolationView {
    pub code: &'static str,
    pub location: erd_mentor_core::validate::Location,
    pub message: String,
}

impl From<&Violation> for ViolationView {
    fn from(v: &Violation) -> Self {
        Self {
            code: v.code(),
            location: v.location(),
            message: v.to_string(),
        }
    }
}

/// Project as shown to its members: problem statement text only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectView {
    pub id: Uuid,
    pub title: String,
    pub members: Vec<String>,
    pub problem_statement: String,
    pub created_at: chrono::DateTime<Utc>,
}

impl From<&Project> for ProjectView {
    fn from(p: &Project) -> Self {
        Self {
            id: p.id,
            title: p.requirements.title.clone(),
            members: p.members.clone(),
            problem_statement: erd_mentor_core::requirements::student_view(&p.requirements),
            created_at: p.created_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedbackThread {
    #[serde(flatten)]
    pub feedback: FeedbackRecord,
    pub discussion: Vec<DiscussionMessage>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubmissionHistory {
    pub submission: Submission,
    pub feedback: Vec<FeedbackThread>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct History {
    pub project: ProjectView,
    pub submissions: Vec<SubmissionHistory>,
}

pub struct FeedbackService {
    store: Store,
    gateway: Arc<Gateway>,
    in_flight: Mutex<HashSet<Uuid>>,
}

/// Releases the per-submission slot when the request ends, however it ends.
struct InFlight<'a> {
    set: &'a Mutex<HashSet<Uuid>>,
    id: Uuid,
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.set
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .remove(&self.id);
    }
}

impl FeedbackService {
    pub fn new(store: Store, gateway: Arc<Gateway>) -> Self {
        Self {
            store,
            gateway,
            in_flight: Mutex::new(HashSet::new()),
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn create_project(
        &self,
        requirements_json: &str,
        members: Vec<String>,
    ) -> Result<Project, ServiceError> {
        let requirements = load_requirements(requirements_json)?;
        if members.len() > MAX_MEMBERS {
            return Err(ServiceError::TooManyMembers(members.len()));
        }
        let distinct: HashSet<&str> = members.iter().map(|m| m.trim()).collect();
        if distinct.len() != members.len() || distinct.contains("") {
            return Err(ServiceError::InvalidMembers);
        }
        let project = Project {
            id: Uuid::new_v4(),
            requirements,
            members,
            created_at: Utc::now(),
        };
        self.store.insert_project(&project)?;
        tracing::info!(project = %project.id, "project created");
        Ok(project)
    }

    pub fn project(&self, id: Uuid) -> Result<Project, ServiceError> {
        self.store
            .project(&id)?
            .ok_or(ServiceError::UnknownProject(id))
    }

    /// Stores parseable text even when it has structural violations; those
    /// are returned for display.
    pub fn submit_erd(
        &self,
        project_id: Uuid,
        text: &str,
        parent: Option<Uuid>,
    ) -> Result<(Submission, Vec<Violation>), ServiceError> {
        self.project(project_id)?;
        if let Some(parent) = parent {
            // New ids never appear as anyone's parent, so a chain built
            // from existing submissions cannot loop.
            match self.store.submission(&parent)? {
                Some(p) if p.project_id == project_id => {}
                _ => return Err(ServiceError::UnknownParent(parent)),
            }
        }
        let parsed = parse(text).map_err(ServiceError::ParseFailed)?;
        let violations = validate(&parsed.schema);
        let submission = Submission {
            id: Uuid::new_v4(),
            project_id,
            text: text.to_string(),
            schema: to_json_value(&parsed.schema),
            spans: parsed.spans,
            parent,
            created_at: Utc::now(),
        };
        self.store.insert_submission(&submission)?;
        tracing::info!(submission = %submission.id, violations = violations.len(), "submission stored");
        Ok((submission, violations))
    }

    pub fn submission(&self, id: Uuid) -> Result<Submission, ServiceError> {
        self.store
            .submission(&id)?
            .ok_or(ServiceError::UnknownSubmission(id))
    }

    fn schema_of(&self, submission: &Submission) -> Result<ErdSchema, ServiceError> {
        from_json_value(submission.schema.clone()).map_err(|e| {
            ServiceError::Store(StoreError::Corrupt {
                key: submission.id.to_string(),
                message: e.to_string(),
            })
        })
    }

    pub fn relationships(&self, submission: Uuid) -> Result<Vec<String>, ServiceError> {
        let s = self.submission(submission)?;
        Ok(list_relationships(&self.schema_of(&s)?))
    }

    /// DOT for the whole diagram, or for the pruned view of `relationship`.
    pub fn diagram_dot(
        &self,
        submission: Uuid,
        relationship: Option<&str>,
    ) -> Result<String, ServiceError> {
        let schema = self.schema_of(&self.submission(submission)?)?;
        let dot = match relationship {
            Some(name) => view_to_dot(&prune(&schema, name)?),
            None => to_dot(&schema),
        };
        dot.map_err(|e| ServiceError::Unrenderable(e.to_string()))
    }

    pub async fn request_feedback(
        &self,
        submission_id: Uuid,
        relationship: &str,
    ) -> Result<FeedbackRecord, ServiceError> {
        let submission = self.submission(submission_id)?;
        let project = self.project(submission.project_id)?;
        let schema = self.schema_of(&submission)?;
        prune(&schema, relationship)?;

        if !self
            .in_flight
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(submission_id)
        {
            return Err(ServiceError::FeedbackInProgress(submission_id));
        }
        let _slot = InFlight {
            set: &self.in_flight,
            id: submission_id,
        };

        let outcome = pipeline::run(
            &self.gateway,
            &project.requirements,
            &schema,
            &Scope::Relationship(relationship.to_string()),
        )
        .await?;
        let record = FeedbackRecord {
            id: Uuid::new_v4(),
            submission_id,
            relationship: relationship.to_string(),
            relevant_requirement_ids: outcome.relevant.matched_ids(),
            feedback: outcome.feedback.text,
            faq: outcome.faq.entries,
            faq_warning: outcome.faq_warning,
            exchanges: outcome
                .exchanges
                .into_iter()
                .map(|(stage, e)| ExchangeLink {
                    stage,
                    exchange_id: e.id,
                    prompt_digest: e.prompt_digest,
                })
                .collect(),
            status: FeedbackStatus::AiOnly,
            created_at: Utc::now(),
        };
        self.store.insert_feedback(&record)?;
        tracing::info!(feedback = %record.id, submission = %submission_id, relationship, "feedback stored");
        Ok(record)
    }

    pub fn feedback(&self, id: Uuid) -> Result<FeedbackThread, ServiceError> {
        let feedback = self
            .store
            .feedback(&id)?
            .ok_or(ServiceError::UnknownFeedback(id))?;
        let discussion = self.store.discussion_of(&id)?;
        Ok(FeedbackThread {
            feedback,
            discussion,
        })
    }

    pub fn post_discussion(
        &self,
        feedback_id: Uuid,
        author_role: AuthorRole,
        body: &str,
    ) -> Result<DiscussionMessage, ServiceError> {
        if body.trim().is_empty() {
            return Err(ServiceError::EmptyMessage);
        }
        let message = DiscussionMessage {
            id: Uuid::new_v4(),
            feedback_id,
            author_role,
            body: body.to_string(),
            created_at: Utc::now(),
        };
        match self.store.append_discussion(&message) {
            Ok(status) => {
                tracing::info!(feedback = %feedback_id, ?status, "discussion message stored");
                Ok(message)
            }
            Err(StoreError::MissingFeedback(id)) => Err(ServiceError::UnknownFeedback(id)),
            Err(e) => Err(e.into()),
        }
    }

    pub fn history(&self, project_id: Uuid) -> Result<History, ServiceError> {
        let project = self.project(project_id)?;
        let mut submissions = Vec::new();
        for submission in self.store.submissions_of(&project_id)? {
            let mut feedback = Vec::new();
            for record in self.store.feedback_of(&submission.id)? {
                let discussion = self.store.discussion_of(&record.id)?;
                feedback.push(FeedbackThread {
                    feedback: record,
                    discussion,
                });
            }
            submissions.push(SubmissionHistory {
                submission,
                feedback,
            });
        }
        Ok(History {
            project: ProjectView::from(&project),
            submissions,
        })
    }
}
