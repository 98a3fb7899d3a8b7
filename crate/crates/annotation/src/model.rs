use std::fmt;
use std::str::FromStr;

use citesum::gateway::Judgment;
use citesum::TraceableSummary;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Medical,
    Nlp,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Medical => "medical",
            Domain::Nlp => "nlp",
        })
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "medical" => Ok(Domain::Medical),
            "nlp" => Ok(Domain::Nlp),
            _ => Err(format!("unknown domain `{s}` (expected medical or nlp)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Consent {
    pub data_use: bool,
    pub cookies: bool,
}

impl Consent {
    pub fn given(&self) -> bool {
        self.data_use && self.cookies
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotator {
    pub id: String,
    pub email: String,
    pub domain: Domain,
    #[serde(default)]
    pub consent: Consent,
    #[serde(default)]
    pub approved: bool,
}

impl Annotator {
    /// Approved by an administrator and consented to both statements.
    pub fn eligible(&self) -> bool {
        self.approved && self.consent.given()
    }
}

/// The three 1-5 ratings an annotator gives one summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scores {
    pub completeness: u8,
    pub conciseness: u8,
    pub traceability: u8,
}

impl Scores {
    pub fn new(completeness: u8, conciseness: u8, traceability: u8) -> Result<Self, ServiceError> {
        let s = Scores {
            completeness,
            conciseness,
            traceability,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        for v in self.values() {
            if !(1..=5).contains(&v) {
                return Err(ServiceError::InvalidScore(v));
            }
        }
        Ok(())
    }

    /// Completeness, conciseness, traceability.
    pub fn values(&self) -> [u8; 3] {
        [self.completeness, self.conciseness, self.traceability]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub instance_id: String,
    pub annotator_id: String,
    #[serde(flatten)]
    pub scores: Scores,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionRecord {
    pub instance_id: String,
    pub annotator_id: String,
    pub revised: TraceableSummary,
    pub rationale: String,
    pub timestamp: u64,
}

/// Who may submit Phase-II revisions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevisionPolicy {
    /// The two annotators who rated the instance.
    #[default]
    OriginalAnnotators,
    /// Only revisers an administrator designated for the instance.
    DesignatedRevisers,
}

/// Everything a human judge needs for one instance: both summaries, their
/// subclaims and citations. Built from an evaluation report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentTask {
    pub instance_id: String,
    pub reference_summary: Option<String>,
    pub generated_summary: Option<String>,
    pub reference_subclaims: Vec<String>,
    pub generated_subclaims: Vec<String>,
    pub reference_citations: Vec<usize>,
    pub generated_citations: Vec<usize>,
}

impl JudgmentTask {
    pub fn generated_output(&self) -> TraceableSummary {
        match &self.generated_summary {
            Some(s) => TraceableSummary::positive(s.clone(), self.generated_citations.iter().copied()),
            None => TraceableSummary::Negative,
        }
    }
}

/// What a single human verdict is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "snake_case")]
pub enum VerdictTarget {
    /// Does the generated summary entail reference subclaim `index`?
    ReferenceSubclaim { index: usize },
    /// Does the reference summary entail generated subclaim `index`?
    GeneratedSubclaim { index: usize },
    /// Does sentence `citation` entail generated subclaim `subclaim`?
    CitationSupport { citation: usize, subclaim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanVerdict {
    #[serde(flatten)]
    pub target: VerdictTarget,
    pub entailed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanJudgmentRecord {
    pub instance_id: String,
    pub annotator_id: String,
    pub verdicts: Vec<HumanVerdict>,
    /// The verdicts resolved to premise/hypothesis pairs, judge `"human"`.
    pub judgments: Vec<Judgment>,
    /// Every verdict the evaluation procedure would ask for is present.
    pub complete: bool,
    pub timestamp: u64,
}

/// One durable state change. The service state is a fold over these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Registered {
        annotator: Annotator,
        token_sha256: String,
    },
    Consented {
        annotator_id: String,
        consent: Consent,
    },
    Approved {
        annotator_id: String,
    },
    Assigned {
        instance_id: String,
        annotators: [String; 2],
    },
    Rated(RatingRecord),
    PolicySet {
        policy: RevisionPolicy,
    },
    ReviserAssigned {
        instance_id: String,
        annotator_id: String,
    },
    Revised(RevisionRecord),
    JudgmentTaskLoaded(JudgmentTask),
    Judged(HumanJudgmentRecord),
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::Registered { .. } => "registered",
            Event::Consented { .. } => "consented",
            Event::Approved { .. } => "approved",
            Event::Assigned { .. } => "assigned",
            Event::Rated(_) => "rated",
            Event::PolicySet { .. } => "policy_set",
            Event::ReviserAssigned { .. } => "reviser_assigned",
            Event::Revised(_) => "revised",
            Event::JudgmentTaskLoaded(_) => "judgment_task_loaded",
            Event::Judged(_) => "judged",
        }
    }

    pub fn instance_id(&self) -> Option<&str> {
        match self {
            Event::Assigned { instance_id, .. } | Event::ReviserAssigned { instance_id, .. } => Some(instance_id),
            Event::Rated(r) => Some(&r.instance_id),
            Event::Revised(r) => Some(&r.instance_id),
            Event::JudgmentTaskLoaded(t) => Some(&t.instance_id),
            Event::Judged(j) => Some(&j.instance_id),
            _ => None,
        }
    }

    pub fn annotator_id(&self) -> Option<&str> {
        match self {
            Event::Registered { annotator, .. } => Some(&annotator.id),
            Event::Consented { annotator_id, .. }
            | Event::Approved { annotator_id }
            | Event::ReviserAssigned { annotator_id, .. } => Some(annotator_id),
            Event::Rated(r) => Some(&r.annotator_id),
            Event::Revised(r) => Some(&r.annotator_id),
            Event::Judged(j) => Some(&j.annotator_id),
            _ => None,
        }
    }
}
