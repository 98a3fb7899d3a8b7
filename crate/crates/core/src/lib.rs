//! Toolkit for evaluating aspect-based summaries that cite their source
//! sentences.
//!
//! The crate is organised around the evaluation workflow:
//!
//! - [`segmenter`] and [`corpus`]: stable sentence indices, dataset files,
//!   splits, statistics and training-set exports.
//! - [`gateway`]: prompt rendering/parsing plus pluggable generation,
//!   decomposition, relevance and entailment backends with retries, rate
//!   limits, a judgment cache and a cost ledger.
//! - [`pipelines`]: track-then-summarize, summarize-then-track, end-to-end
//!   and few-shot generation.
//! - [`metrics`]: claim recall/precision and citation recall/precision with
//!   exact rational arithmetic, plus aggregation into report tables.
//! - [`agreement`]: inter-annotator agreement and rank/linear correlation.

pub mod agreement;
pub mod aspect;
pub mod corpus;
pub mod decimal;
pub mod gateway;
pub mod metrics;
pub mod pipelines;
pub mod segmenter;

pub use aspect::AspectCode;
pub use corpus::{Article, Dataset, DatasetInstance, TraceableSummary};
