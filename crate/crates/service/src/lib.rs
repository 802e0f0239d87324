//! Feedback service: runs the prune → match → feedback → FAQ pipeline,
//! keeps submissions, feedback and discussion threads, and serves them over
//! HTTP. Also hosts the one-shot `feedback` and `eval` commands.

pub mod api;
pub mod cli;
pub mod pipeline;
pub mod records;
pub mod service;
pub mod store;

pub use service::{FeedbackService, ServiceError};
pub use store::{Store, StoreError};
