//! Document-per-record persistence on redb.
//!
//! Every record is a JSON document keyed by its id. Ordered listings use
//! index tables keyed `"{parent}/{seq}"`, where `seq` is a store-wide
//! counter bumped inside the writing transaction, so listings come back in
//! commit order. redb allows one write transaction at a time; readers see
//! the last committed snapshot and never wait for the writer.

use std::path::Path;

use redb::{Database, ReadableDatabase, ReadableTable, TableDefinition};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use uuid::Uuid;

use crate::records::{DiscussionMessage, FeedbackRecord, FeedbackStatus, Project, Submission};

const PROJECTS: TableDefinition<&str, &[u8]> = TableDefinition::new("projects");
const SUBMISSIONS: TableDefinition<&str, &[u8]> = TableDefinition::new("submissions");
const FEEDBACK: TableDefinition<&str, &[u8]> = TableDefinition::new("feedback");
const DISCUSSIONS: TableDefinition<&str, &[u8]> = TableDefinition::new("discussions");
const SUBMISSIONS_BY_PROJECT: TableDefinition<&str, &str> =
    TableDefinition::new("submissions_by_project");
const FEEDBACK_BY_SUBMISSION: TableDefinition<&str, &str> =
    TableDefinition::new("feedback_by_submission");
const META: TableDefinition<&str, u64> = TableDefinition::new("meta");
const SEQ: &str = "seq";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("database: {0}")]
    Database(#[from] redb::Error),
    #[error("corrupt record {key}: {message}")]
    Corrupt { key: String, message: String },
    #[error("no feedback record {0}")]
    MissingFeedback(Uuid),
}

fn db<E: Into<redb::Error>>(e: E) -> StoreError {
    StoreError::Database(e.into())
}

fn encode<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("records always serialize")
}

fn decode<T: DeserializeOwned>(key: &str, bytes: &[u8]) -> Result<T, StoreError> {
    serde_json::from_slice(bytes).map_err(|e| StoreError::Corrupt {
        key: key.to_string(),
        message: e.to_string(),
    })
}

/// Bounds selecting every index key under `parent`.
fn children(parent: &Uuid) -> (String, String) {
    // '0' sorts right after '/'.
    (format!("{parent}/"), format!("{parent}0"))
}

pub struct Store {
    db: Database,
}

impl Store {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        Self::init(Database::create(path).map_err(db)?)
    }

    /// Non-durable store for tests and one-shot runs.
    pub fn in_memory() -> Result<Self, StoreError> {
        let backend = redb::backends::InMemoryBackend::new();
        Self::init(
            Database::builder()
                .create_with_backend(backend)
                .map_err(db)?,
        )
    }

    fn init(database: Database) -> Result<Self, StoreError> {
        let tx = database.begin_write().map_err(db)?;
        tx.open_table(PROJECTS).map_err(db)?;
        tx.open_table(SUBMISSIONS).map_err(db)?;
        tx.open_table(FEEDBACK).map_err(db)?;
        tx.open_table(DISCUSSIONS).map_err(db)?;
        tx.open_table(SUBMISSIONS_BY_PROJECT).map_err(db)?;
        tx.open_table(FEEDBACK_BY_SUBMISSION).map_err(db)?;
        tx.open_table(META).map_err(db)?;
        tx.commit().map_err(db)?;
        Ok(Self { db: database })
    }

    fn write<R>(
        &self,
        f: impl FnOnce(&redb::WriteTransaction) -> Result<R, StoreError>,
    ) -> Result<R, StoreError> {
        let tx = self.db.begin_write().map_err(db)?;
        let out = f(&tx)?;
        tx.commit().map_err(db)?;
        Ok(out)
    }

    fn next_seq(tx: &redb::WriteTransaction) -> Result<u64, StoreError> {
        let mut meta = tx.open_table(META).map_err(db)?;
        let next = meta.get(SEQ).map_err(db)?.map(|v| v.value()).unwrap_or(0) + 1;
        meta.insert(SEQ, next).map_err(db)?;
        Ok(next)
    }

    fn get<T: DeserializeOwned>(
        &self,
        table: TableDefinition<&str, &[u8]>,
        id: &Uuid,
    ) -> Result<Option<T>, StoreError> {
        let key = id.to_string();
        let tx = self.db.begin_read().map_err(db)?;
        let t = tx.open_table(table).map_err(db)?;
        let found = t.get(key.as_str()).map_err(db)?;
        found.map(|v| decode(&key, v.value())).transpose()
    }

    /// Records listed under `parent` in `index`, in commit order.
    fn list<T: DeserializeOwned>(
        &self,
        index: TableDefinition<&str, &str>,
        table: TableDefinition<&str, &[u8]>,
        parent: &Uuid,
    ) -> Result<Vec<T>, StoreError> {
        let (lo, hi) = children(parent);
        let tx = self.db.begin_read().map_err(db)?;
        let idx = tx.open_table(index).map_err(db)?;
        let t = tx.open_table(table).map_err(db)?;
        let mut out = Vec::new();
        for entry in idx.range(lo.as_str()..hi.as_str()).map_err(db)? {
            let (_, id) = entry.map_err(db)?;
            let id = id.value();
            let bytes = t.get(id).map_err(db)?.ok_or_else(|| StoreError::Corrupt {
                key: id.to_string(),
                message: "indexed record is missing".into(),
            })?;
            out.push(decode(id, bytes.value())?);
        }
        Ok(out)
    }

    pub fn insert_project(&self, project: &Project) -> Result<(), StoreError> {
        self.write(|tx| {
            let mut t = tx.open_table(PROJECTS).map_err(db)?;
            t.insert(project.id.to_string().as_str(), encode(project).as_slice())
                .map_err(db)?;
            Ok(())
        })
    }

    pub fn project(&self, id: &Uuid) -> Result<Option<Project>, StoreError> {
        self.get(PROJECTS, id)
    }

    pub fn insert_submission(&self, submission: &Submission) -> Result<(), StoreError> {
        self.write(|tx| {
            let seq = Self::next_seq(tx)?;
            let id = submission.id.to_string();
            tx.open_table(SUBMISSIONS)
                .map_err(db)?
                .insert(id.as_str(), encode(submission).as_slice())
                .map_err(db)?;
            let key = format!("{}/{seq:020}", submission.project_id);
            tx.open_table(SUBMISSIONS_BY_PROJECT)
                .map_err(db)?
                .insert(key.as_str(), id.as_str())
                .map_err(db)?;
            Ok(())
        })
    }

    pub fn submission(&self, id: &Uuid) -> Result<Option<Submission>, StoreError> {
        self.get(SUBMISSIONS, id)
    }

    pub fn submissions_of(&self, project: &Uuid) -> Result<Vec<Submission>, StoreError> {
        self.list(SUBMISSIONS_BY_PROJECT, SUBMISSIONS, project)
    }

    pub fn insert_feedback(&self, record: &FeedbackRecord) -> Result<(), StoreError> {
        self.write(|tx| {
            let seq = Self::next_seq(tx)?;
            let id = record.id.to_string();
            tx.open_table(FEEDBACK)
                .map_err(db)?
                .insert(id.as_str(), encode(record).as_slice())
                .map_err(db)?;
            let key = format!("{}/{seq:020}", record.submission_id);
            tx.open_table(FEEDBACK_BY_SUBMISSION)
                .map_err(db)?
                .insert(key.as_str(), id.as_str())
                .map_err(db)?;
            Ok(())
        })
    }

    pub fn feedback(&self, id: &Uuid) -> Result<Option<FeedbackRecord>, StoreError> {
        self.get(FEEDBACK, id)
    }

    pub fn feedback_of(&self, submission: &Uuid) -> Result<Vec<FeedbackRecord>, StoreError> {
        self.list(FEEDBACK_BY_SUBMISSION, FEEDBACK, submission)
    }

    /// Appends `message` and moves its feedback record to the resulting
    /// status, atomically. Returns the new status.
    pub fn append_discussion(
        &self,
        message: &DiscussionMessage,
    ) -> Result<FeedbackStatus, StoreError> {
        self.write(|tx| {
            let seq = Self::next_seq(tx)?;
            let fid = message.feedback_id.to_string();
            let mut feedback = tx.open_table(FEEDBACK).map_err(db)?;
            let mut record: FeedbackRecord = match feedback.get(fid.as_str()).map_err(db)? {
                Some(v) => decode(&fid, v.value())?,
                None => return Err(StoreError::MissingFeedback(message.feedback_id)),
            };
            record.status = record.status.after_message(message.author_role);
            feedback
                .insert(fid.as_str(), encode(&record).as_slice())
                .map_err(db)?;
            let key = format!("{fid}/{seq:020}");
            tx.open_table(DISCUSSIONS)
                .map_err(db)?
                .insert(key.as_str(), encode(message).as_slice())
                .map_err(db)?;
            Ok(record.status)
        })
    }

    pub fn discussion_of(&self, feedback: &Uuid) -> Result<Vec<DiscussionMessage>, StoreError> {
        let (lo, hi) = children(feedback);
        let tx = self.db.begin_read().map_err(db)?;
        let t = tx.open_table(DISCUSSIONS).map_err(db)?;
        let mut out = Vec::new();
        for entry in t.range(lo.as_str()..hi.as_str()).map_err(db)? {
            let (k, v) = entry.map_err(db)?;
            out.push(decode(k.value(), v.value())?);
        }
        Ok(out)
    }
}
