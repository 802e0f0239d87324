//! JSON HTTP API. Errors are `{code, message, detail}` documents.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use erd_mentor_llm::LlmError;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use uuid::Uuid;

use crate::records::AuthorRole;
use crate::service::{FeedbackService, ProjectView, ServiceError, ViolationView};

pub type AppState = Arc<FeedbackService>;

pub fn router(service: AppState) -> Router {
    Router::new()
        .route("/projects", post(create_project))
        .route("/projects/{id}", get(get_project))
        .route("/projects/{id}/submissions", post(submit))
        .route("/projects/{id}/history", get(history))
        .route("/submissions/{id}/relationships", get(relationships))
        .route("/submissions/{id}/diagram.dot", get(diagram))
        .route("/submissions/{id}/feedback", post(request_feedback))
        .route("/feedback/{id}", get(get_feedback))
        .route("/feedback/{id}/discussion", post(post_discussion))
        .with_state(service)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    detail: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "code": self.code, "message": self.message, "detail": self.detail });
        (self.status, Json(body)).into_response()
    }
}

fn llm_error(stage: &str, e: &LlmError) -> ApiError {
    let message = format!("{stage} stage failed: {e}");
    let (status, code) = match e {
        LlmError::Timeout(_) => (StatusCode::GATEWAY_TIMEOUT, "llm_timeout"),
        LlmError::RateLimited { .. } => (StatusCode::SERVICE_UNAVAILABLE, "llm_rate_limited"),
        LlmError::AuthFailure { .. } => (StatusCode::BAD_GATEWAY, "llm_auth_failure"),
        LlmError::BackendError { .. } => (StatusCode::BAD_GATEWAY, "llm_backend_error"),
        LlmError::StructuredOutputFailure { .. } => {
            (StatusCode::BAD_GATEWAY, "llm_structured_output_failure")
        }
        _ => (StatusCode::INTERNAL_SERVER_ERROR, "llm_error"),
    };
    let detail = match e {
        LlmError::StructuredOutputFailure { attempts, .. } => {
            json!({ "stage": stage, "attempts": attempts })
        }
        _ => json!({ "stage": stage }),
    };
    ApiError::new(status, code, message).with_detail(detail)
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        use ServiceError::*;
        let message = e.to_string();
        let unprocessable = StatusCode::UNPROCESSABLE_ENTITY;
        match e {
            Requirements(_) => ApiError::new(unprocessable, "invalid_requirements", message),
            TooManyMembers(_) | InvalidMembers => {
                ApiError::new(unprocessable, "invalid_members", message)
            }
            UnknownProject(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_project", message),
            UnknownSubmission(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "unknown_submission", message)
            }
            UnknownFeedback(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_feedback", message),
            UnknownParent(_) => ApiError::new(unprocessable, "unknown_parent", message),
            UnknownRelationship(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "unknown_relationship", message)
            }
            ParseFailed(errors) => ApiError::new(unprocessable, "parse_failed", message)
                .with_detail(json!({ "errors": errors })),
            FeedbackInProgress(_) => {
                ApiError::new(StatusCode::CONFLICT, "feedback_in_progress", message)
            }
            EmptyMessage => ApiError::new(unprocessable, "empty_message", message),
            Unrenderable(_) => ApiError::new(unprocessable, "unrenderable_diagram", message),
            Llm { stage, source } => llm_error(stage.as_str(), &source),
            Store(err) => {
                tracing::error!(error = %err, "store failure");
                ApiError::new(
                    StatusCode::INTERNAL_SERVER_ERROR,
                    "store_error",
                    "internal storage error",
                )
            }
        }
    }
}

/// `Json` with rejections reported as problem documents.
pub struct Body<T>(pub T);

impl<S, T> FromRequest<S> for Body<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(rejection) => Err(rejection_error(rejection)),
        }
    }
}

fn rejection_error(r: JsonRejection) -> ApiError {
    ApiError::new(r.status(), "invalid_request", r.body_text())
}

fn id(raw: &str) -> Result<Uuid, ApiError> {
    Uuid::parse_str(raw).map_err(|_| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("'{raw}' is not a valid id"),
        )
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateProject {
    requirements: Value,
    #[serde(default)]
    members: Vec<String>,
}

async fn create_project(
    State(svc): State<AppState>,
    Body(req): Body<CreateProject>,
) -> Result<(StatusCode, Json<ProjectView>), ApiError> {
    let project = svc.create_project(&req.requirements.to_string(), req.members)?;
    Ok((StatusCode::CREATED, Json(ProjectView::from(&project))))
}

async fn get_project(
    State(svc): State<AppState>,
    Path(raw): Path<String>,
) -> Result<Json<ProjectView>, ApiError> {
    Ok(Json(ProjectView::from(&svc.project(id(&raw)?)?)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Submit {
    text: String,
    parent: Option<Uuid>,
}

#[derive(Debug, Serialize)]
struct Submitted {
    submission: crate::records::Submission,
    violations: Vec<ViolationView>,
}

async fn submit(
    State(svc): State<AppState>,
    Path(raw): Path<String>,
    Body(req): Body<Submit>,
) -> Result<(StatusCode, Json<Submitted>), ApiError> {
    let (submission, violations) = svc.submit_erd(id(&raw)?, &req.text, req.parent)?;
    let violations = violations.iter().map(ViolationView::from).collect();
    Ok((
        StatusCode::CREATED,
        Json(Submitted {
            submission,
            violations,
        }),
    ))
}

async fn relationships(
    State(svc): State<AppState>,
    Path(raw): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let names = svc.relationships(id(&raw)?)?;
    Ok(Json(json!({ "relationships": names })))
}

#[derive(Debug, Deserialize)]
struct DiagramQuery {
    relationship: Option<String>,
}

async fn diagram(
    State(svc): State<AppState>,
    Path(raw): Path<String>,
    Query(q): Query<DiagramQuery>,
) -> Result<Response, ApiError> {
    let dot = svc.diagram_dot(id(&raw)?, q.relationship.as_deref())?;
    Ok((
        [(header::CONTENT_TYPE, "text/vnd.graphviz; charset=utf-8")],
        dot,
    )
        .into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackRequest {
    relationship: String,
}

async fn request_feedback(
    State(svc): State<AppState>,
    Path(raw): Path<String>,
    Body(req): Body<FeedbackRequest>,
) -> Result<(StatusCode, Json<crate::records::FeedbackRecord>), ApiError> {
    let record = svc.request_feedback(id(&raw)?, &req.relationship).await?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn get_feedback(
    State(svc): State<AppState>,
    Path(raw): Path<String>,
) -> Result<Json<crate::service::FeedbackThread>, ApiError> {
    Ok(Json(svc.feedback(id(&raw)?)?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PostMessage {
    author_role: AuthorRole,
    body: String,
}

async fn post_discussion(
    State(svc): State<AppState>,
    Path(raw): Path<String>,
    Body(req): Body<PostMessage>,
) -> Result<(StatusCode, Json<crate::records::DiscussionMessage>), ApiError> {
    let message = svc.post_discussion(id(&raw)?, req.author_role, &req.body)?;
    Ok((StatusCode::CREATED, Json(message)))
}

async fn history(
    State(svc): State<AppState>,
    Path(raw): Path<String>,
) -> Result<Json<crate::service::History>, ApiError> {
    Ok(Json(svc.history(id(&raw)?)?))
}
