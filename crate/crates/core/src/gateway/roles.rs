//! The narrow interfaces pipelines and metrics depend on, and an adapter
//! binding each of them to a named gateway backend.

use std::collections::HashMap;

use crate::aspect::AspectCode;
use crate::corpus::Article;

use super::parse::is_negative_marker;
use super::{prompt, Decomposition, Gateway, GatewayError};

/// Binary entailment `φ(premise, hypothesis)`.
pub trait EntailmentJudge: Sync {
    fn judge_name(&self) -> &str;
    fn entails(&self, premise: &str, hypothesis: &str) -> Result<bool, GatewayError>;
}

pub trait ClaimDecomposer: Sync {
    fn decompose(&self, summary: &str) -> Result<Decomposition, GatewayError>;
}

/// Relevance of a sentence to a query, in `[0, 1]`.
pub trait RelevanceTracker: Sync {
    fn score(&self, query: &str, sentence: &str) -> Result<f64, GatewayError>;
}

/// Produces one summary sentence, or `None` for "nothing relevant".
pub trait Summarizer: Sync {
    fn summarize(
        &self,
        aspect: AspectCode,
        sources: &[String],
        full_context: Option<&str>,
    ) -> Result<Option<String>, GatewayError>;

    fn summarize_article(&self, aspect: AspectCode, article: &Article) -> Result<Option<String>, GatewayError>;
}

/// Raw text generation from a prompt.
pub trait Generator: Sync {
    fn generate(&self, prompt: &str) -> Result<String, GatewayError>;
}

/// A gateway backend used in one of the roles above.
#[derive(Clone, Copy)]
pub struct BackendRef<'a> {
    pub gateway: &'a Gateway,
    pub name: &'a str,
}

impl<'a> BackendRef<'a> {
    pub fn new(gateway: &'a Gateway, name: &'a str) -> Result<Self, GatewayError> {
        if gateway.spec(name).is_none() {
            return Err(GatewayError::UnknownBackend(name.to_string()));
        }
        Ok(BackendRef { gateway, name })
    }
}

impl EntailmentJudge for BackendRef<'_> {
    fn judge_name(&self) -> &str {
        self.name
    }

    fn entails(&self, premise: &str, hypothesis: &str) -> Result<bool, GatewayError> {
        Ok(self.gateway.judge_entailment(self.name, premise, hypothesis)?.verdict)
    }
}

impl ClaimDecomposer for BackendRef<'_> {
    fn decompose(&self, summary: &str) -> Result<Decomposition, GatewayError> {
        self.gateway.decompose_claims(self.name, summary)
    }
}

impl RelevanceTracker for BackendRef<'_> {
    fn score(&self, query: &str, sentence: &str) -> Result<f64, GatewayError> {
        self.gateway.relevance(self.name, query, sentence)
    }
}

impl Generator for BackendRef<'_> {
    fn generate(&self, prompt: &str) -> Result<String, GatewayError> {
        self.gateway.complete(self.name, prompt)
    }
}

impl Summarizer for BackendRef<'_> {
    fn summarize(
        &self,
        aspect: AspectCode,
        sources: &[String],
        full_context: Option<&str>,
    ) -> Result<Option<String>, GatewayError> {
        let text = self.gateway.complete(
            self.name,
            &prompt::render_tracked_summary_prompt(aspect, sources, full_context),
        )?;
        Ok(clean_summary(&text))
    }

    fn summarize_article(&self, aspect: AspectCode, article: &Article) -> Result<Option<String>, GatewayError> {
        let text = self
            .gateway
            .complete(self.name, &prompt::render_article_summary_prompt(aspect, article))?;
        Ok(clean_summary(&text))
    }
}

/// Strips a leading `Summary:` label; empty or "Unknown" text means no summary.
pub fn clean_summary(text: &str) -> Option<String> {
    let t = text.trim();
    let t = match t.get(..8) {
        Some(head) if head.eq_ignore_ascii_case("summary:") => t[8..].trim(),
        _ => t,
    };
    let t = t
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    if t.is_empty() || is_negative_marker(&t) {
        None
    } else {
        Some(t)
    }
}

/// Verdicts from a fixed table, e.g. recorded human judgments.
///
/// Pairs missing from the table are an error unless a default is set.
#[derive(Debug, Clone, Default)]
pub struct TableJudge {
    name: String,
    verdicts: HashMap<(String, String), bool>,
    default: Option<bool>,
}

impl TableJudge {
    pub fn new(name: impl Into<String>) -> Self {
        TableJudge {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn with_default(mut self, verdict: bool) -> Self {
        self.default = Some(verdict);
        self
    }

    pub fn insert(&mut self, premise: impl Into<String>, hypothesis: impl Into<String>, verdict: bool) {
        self.verdicts.insert((premise.into(), hypothesis.into()), verdict);
    }

    pub fn len(&self) -> usize {
        self.verdicts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verdicts.is_empty()
    }
}

impl EntailmentJudge for TableJudge {
    fn judge_name(&self) -> &str {
        &self.name
    }

    fn entails(&self, premise: &str, hypothesis: &str) -> Result<bool, GatewayError> {
        self.verdicts
            .get(&(premise.to_string(), hypothesis.to_string()))
            .copied()
            .or(self.default)
            .ok_or_else(|| GatewayError::Backend {
                backend: self.name.clone(),
                message: format!("no recorded verdict for premise {premise:?} / hypothesis {hypothesis:?}"),
            })
    }
}

/// Subclaims from a fixed table keyed by summary text.
#[derive(Debug, Clone, Default)]
pub struct TableDecomposer {
    claims: HashMap<String, Vec<String>>,
}

impl TableDecomposer {
    pub fn insert(&mut self, summary: impl Into<String>, subclaims: Vec<String>) {
        self.claims.insert(summary.into(), subclaims);
    }
}

impl ClaimDecomposer for TableDecomposer {
    fn decompose(&self, summary: &str) -> Result<Decomposition, GatewayError> {
        match self.claims.get(summary) {
            Some(c) if !c.is_empty() => Ok(Decomposition {
                subclaims: c.clone(),
                fallback_whole_summary: false,
            }),
            _ => Ok(Decomposition {
                subclaims: vec![summary.trim().to_string()],
                fallback_whole_summary: true,
            }),
        }
    }
}
