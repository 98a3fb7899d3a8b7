//! Annotation workflow: accounts and consent, dual-annotator assignment,
//! Likert ratings, the revision queue, human entailment judgments and export
//! of the revised dataset. [`http::router`] exposes it over HTTP.

pub mod http;
pub mod model;
pub mod service;
pub mod store;

use citesum::corpus::CorpusError;

pub use model::{
    Annotator, Consent, Domain, Event, HumanJudgmentRecord, HumanVerdict, JudgmentTask, RatingRecord, RevisionPolicy,
    RevisionRecord, Scores, VerdictTarget,
};
pub use service::{
    assign_tasks, judge_from, judgment_tasks, needs_revision, resolve_verdicts, score_pairs, select_for_revision,
    AnnotationService, Assignment, InstanceDetail, RevisionItem, RevisionSelection, TaskSummary, HUMAN_JUDGE,
};
pub use store::{FileStore, MemoryStore, SqliteStore, Store, StoreError, StoreKind};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("missing or unknown bearer token")]
    Unauthenticated,
    #[error("unknown annotator {0}")]
    UnknownAnnotator(String),
    #[error("unknown instance {0}")]
    UnknownInstance(String),
    #[error("annotator {0} is not approved or has not given consent")]
    NotEligible(String),
    #[error("{0}")]
    Forbidden(String),
    #[error("no eligible annotator in the {0} domain")]
    NoEligibleAnnotator(Domain),
    #[error("score {0} is outside the 1-5 scale")]
    InvalidScore(u8),
    #[error("invalid revision: {0}")]
    InvalidRevision(String),
    #[error("invalid verdict: {0}")]
    InvalidVerdict(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{} selected instances have no revision: {}", .0.len(), .0.join(", "))]
    PendingRevisions(Vec<String>),
}
