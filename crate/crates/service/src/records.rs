use chrono::{DateTime, Utc};
use erd_mentor_core::prompt::{FaqEntry, PromptKind};
use erd_mentor_core::{RequirementSet, SourceSpan};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

/// Upper bound on a project group.
pub const MAX_MEMBERS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub id: Uuid,
    /// Full set including rubrics; never returned to students as is.
    pub requirements: RequirementSet,
    pub members: Vec<String>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub id: Uuid,
    pub project_id: Uuid,
    pub text: String,
    /// Canonical JSON of the parsed schema.
    pub schema: serde_json::Value,
    pub spans: Vec<SourceSpan>,
    pub parent: Option<Uuid>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackStatus {
    AiOnly,
    StaffFlagged,
    Discussed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthorRole {
    Student,
    Staff,
}

impl FeedbackStatus {
    /// Status after a message from `role`. A student reply asks staff to
    /// look; a staff reply closes the loop. `discussed` is terminal.
    pub fn after_message(self, role: AuthorRole) -> FeedbackStatus {
        match (self, role) {
            (_, AuthorRole::Staff) | (FeedbackStatus::Discussed, _) => FeedbackStatus::Discussed,
            (_, AuthorRole::Student) => FeedbackStatus::StaffFlagged,
        }
    }
}

/// One model call that contributed to a feedback record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeLink {
    pub stage: PromptKind,
    pub exchange_id: Uuid,
    pub prompt_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub id: Uuid,
    pub submission_id: Uuid,
    pub relationship: String,
    pub relevant_requirement_ids: Vec<String>,
    pub feedback: String,
    pub faq: Vec<FaqEntry>,
    /// Set when the FAQ stage failed and `faq` is empty because of it.
    pub faq_warning: Option<String>,
    pub exchanges: Vec<ExchangeLink>,
    pub status: FeedbackStatus,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscussionMessage {
    pub id: Uuid,
    pub feedback_id: Uuid,
    pub author_role: AuthorRole,
    pub body: String,
    pub created_at: DateTime<Utc>,
}
