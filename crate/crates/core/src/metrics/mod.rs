//! Claim recall/precision (CLR, CLP) and citation recall/precision (CIR, CIP).
//!
//! For a reference summary `y` with subclaims `L` and citations `C`, and a
//! generated summary `y'` with subclaims `L'` and citations `C'`:
//!
//! - `CLR = |{l ∈ L : y' ⇒ l}| / |L|`
//! - `CLP = |{l' ∈ L' : y ⇒ l'}| / |L'|`
//! - a generated citation `c'` is valid iff `c' ∈ C` and sentence `c'`
//!   entails at least one `l' ∈ L'` (checked in order, stopping at the first hit)
//! - with `n` valid citations, `CIR = n / |C|` and `CIP = n / |C'|`, where
//!   `|C'|` counts unique generated citations before the support check.
//!
//! Degenerate cases use fixed conventions and are flagged:
//!
//! | reference | output   | CLR   | CIR   | CLP   | CIP   |
//! |-----------|----------|-------|-------|-------|-------|
//! | negative  | negative | 1     | 1     | 1     | 1     |
//! | positive  | negative | 0     | 0     | 1 (f) | 1 (f) |
//! | negative  | positive | 1 (f) | 1 (f) | 0     | 0     |
//!
//! When both are positive, an empty `L` gives CLR 1, an empty `L'` gives
//! CLP 1, an empty `C` gives CIR 1, and an empty `C'` gives CIP 0 (or 1 when
//! `C` is empty too). All values are exact rationals.

mod aggregate;
mod report;

use std::collections::BTreeSet;
use std::fmt;

use num::rational::Ratio;
use num::{BigRational, One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::{Article, TraceableSummary};
use crate::gateway::{ClaimDecomposer, EntailmentJudge, GatewayError};

pub use aggregate::{aggregate, f1, render_aspect_table, render_method_table, Aggregation, MetricReport, MetricRow};
pub use report::{
    evaluate_run, load_report, render_report, write_report, EvaluatedInstance, EvaluationReport, REPORT_SCHEMA,
};

/// A metric value with its raw counts. `den == 0` marks a value fixed by convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Score {
    pub num: u64,
    pub den: u64,
    value: Ratio<u64>,
}

impl Score {
    pub fn ratio(num: u64, den: u64) -> Self {
        assert!(den > 0 && num <= den, "score {num}/{den} outside [0, 1]");
        Score {
            num,
            den,
            value: Ratio::new(num, den),
        }
    }

    /// A degenerate score: no denominator, value 1 or 0.
    pub fn convention(full: bool) -> Self {
        Score {
            num: 0,
            den: 0,
            value: if full { Ratio::one() } else { Ratio::zero() },
        }
    }

    pub fn value(&self) -> Ratio<u64> {
        self.value
    }

    pub fn big(&self) -> BigRational {
        BigRational::new((*self.value.numer()).into(), (*self.value.denom()).into())
    }

    pub fn is_degenerate(&self) -> bool {
        self.den == 0
    }

    pub fn percent(&self) -> String {
        crate::decimal::percent(&self.big())
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_degenerate() {
            write!(f, "{} (by convention)", self.value)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ScoreFields {
    num: u64,
    den: u64,
    value: String,
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ScoreFields {
            num: self.num,
            den: self.den,
            value: format!("{}/{}", self.value.numer(), self.value.denom()),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let f = ScoreFields::deserialize(deserializer)?;
        if f.den == 0 {
            return match f.value.as_str() {
                "1/1" if f.num == 0 => Ok(Score::convention(true)),
                "0/1" if f.num == 0 => Ok(Score::convention(false)),
                _ => Err(D::Error::custom(format!("bad degenerate score {:?}", f.value))),
            };
        }
        if f.num > f.den {
            return Err(D::Error::custom("score numerator exceeds denominator"));
        }
        let s = Score::ratio(f.num, f.den);
        if f.value != format!("{}/{}", s.value.numer(), s.value.denom()) {
            return Err(D::Error::custom("score value does not match counts"));
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubclaimVerdict {
    pub subclaim: String,
    pub entailed: bool,
}

/// Audit trail for one generated citation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationCheck {
    pub index: usize,
    pub in_reference: bool,
    /// Support verdicts against the generated subclaims, in order, up to the first `true`.
    pub support: Vec<bool>,
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricFlag {
    /// Reference negative, output positive: recalls fixed at 1.
    ReferenceNegative,
    /// Reference positive, output negative: precisions fixed at 1.
    OutputNegative,
    NoReferenceSubclaims,
    NoGeneratedSubclaims,
    NoReferenceCitations,
    NoGeneratedCitations,
    ReferenceDecompositionFallback,
    OutputDecompositionFallback,
    /// The pipeline failed on this instance; it was scored as a negative output.
    RunFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub clr: Score,
    pub cir: Score,
    pub clp: Score,
    pub cip: Score,
    /// CLR trace: reference subclaims judged against the generated summary.
    pub reference_subclaims: Vec<SubclaimVerdict>,
    /// CLP trace: generated subclaims judged against the reference summary.
    pub generated_subclaims: Vec<SubclaimVerdict>,
    pub citation_checks: Vec<CitationCheck>,
    pub valid_citations: BTreeSet<usize>,
    pub flags: BTreeSet<MetricFlag>,
    pub judge: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("citation {index} out of range for an article with {n_sentences} sentences")]
    CitationOutOfRange { index: usize, n_sentences: usize },
    #[error("nothing to aggregate")]
    Empty,
    #[error("{0}")]
    Mismatch(String),
}

/// One side of a comparison after decomposition.
#[derive(Debug, Clone, Copy)]
pub struct Decomposed<'a> {
    pub summary: &'a str,
    pub subclaims: &'a [String],
    pub citations: &'a BTreeSet<usize>,
}

fn judge_all(
    premise: &str,
    hypotheses: &[String],
    judge: &dyn EntailmentJudge,
) -> Result<(Score, Vec<SubclaimVerdict>), MetricsError> {
    if hypotheses.is_empty() {
        return Ok((Score::convention(true), vec![]));
    }
    let mut verdicts = Vec::with_capacity(hypotheses.len());
    for h in hypotheses {
        verdicts.push(SubclaimVerdict {
            subclaim: h.clone(),
            entailed: judge.entails(premise, h)?,
        });
    }
    let hits = verdicts.iter().filter(|v| v.entailed).count() as u64;
    Ok((Score::ratio(hits, verdicts.len() as u64), verdicts))
}

/// Share of reference subclaims entailed by the generated summary. Empty input scores 1.
pub fn claim_recall(
    reference_subclaims: &[String],
    generated_summary: &str,
    judge: &dyn EntailmentJudge,
) -> Result<(Score, Vec<SubclaimVerdict>), MetricsError> {
    judge_all(generated_summary, reference_subclaims, judge)
}

/// Share of generated subclaims entailed by the reference summary. Empty input scores 1.
pub fn claim_precision(
    generated_subclaims: &[String],
    reference_summary: &str,
    judge: &dyn EntailmentJudge,
) -> Result<(Score, Vec<SubclaimVerdict>), MetricsError> {
    judge_all(reference_summary, generated_subclaims, judge)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CitationScores {
    pub cir: Score,
    pub cip: Score,
    pub valid: BTreeSet<usize>,
    pub checks: Vec<CitationCheck>,
}

/// Citation recall and precision. Membership in the reference set is checked
/// before any support judgment, so non-members cost no judge calls.
pub fn citation_scores(
    reference_citations: &BTreeSet<usize>,
    generated_citations: &BTreeSet<usize>,
    generated_subclaims: &[String],
    sentences: &[String],
    judge: &dyn EntailmentJudge,
) -> Result<CitationScores, MetricsError> {
    for &index in reference_citations.iter().chain(generated_citations) {
        if index >= sentences.len() {
            return Err(MetricsError::CitationOutOfRange {
                index,
                n_sentences: sentences.len(),
            });
        }
    }
    let mut valid = BTreeSet::new();
    let mut checks = Vec::with_capacity(generated_citations.len());
    for &c in generated_citations {
        let in_reference = reference_citations.contains(&c);
        let mut support = Vec::new();
        if in_reference {
            for claim in generated_subclaims {
                let v = judge.entails(&sentences[c], claim)?;
                support.push(v);
                if v {
                    break;
                }
            }
        }
        let is_valid = in_reference && support.last() == Some(&true);
        if is_valid {
            valid.insert(c);
        }
        checks.push(CitationCheck {
            index: c,
            in_reference,
            support,
            valid: is_valid,
        });
    }
    let n = valid.len() as u64;
    let cir = match reference_citations.len() {
        0 => Score::convention(true),
        d => Score::ratio(n, d as u64),
    };
    let cip = match generated_citations.len() {
        0 => Score::convention(reference_citations.is_empty()),
        d => Score::ratio(n, d as u64),
    };
    Ok(CitationScores {
        cir,
        cip,
        valid,
        checks,
    })
}

/// Scores already-decomposed summaries. `None` is a negative summary.
pub fn evaluate_decomposed(
    reference: Option<Decomposed<'_>>,
    output: Option<Decomposed<'_>>,
    sentences: &[String],
    judge: &dyn EntailmentJudge,
) -> Result<InstanceReport, MetricsError> {
    let mut flags = BTreeSet::new();
    let mut report = InstanceReport {
        clr: Score::convention(true),
        cir: Score::convention(true),
        clp: Score::convention(true),
        cip: Score::convention(true),
        reference_subclaims: vec![],
        generated_subclaims: vec![],
        citation_checks: vec![],
        valid_citations: BTreeSet::new(),
        flags: BTreeSet::new(),
        judge: judge.judge_name().to_string(),
    };
    for side in [reference, output].into_iter().flatten() {
        if let Some(&index) = side.citations.iter().find(|&&c| c >= sentences.len()) {
            return Err(MetricsError::CitationOutOfRange {
                index,
                n_sentences: sentences.len(),
            });
        }
    }
    match (reference, output) {
        (None, None) => {}
        (Some(r), None) => {
            flags.insert(MetricFlag::OutputNegative);
            report.clr = zero_over(r.subclaims.len());
            report.cir = zero_over(r.citations.len());
            report.reference_subclaims = unjudged(r.subclaims);
        }
        (None, Some(o)) => {
            flags.insert(MetricFlag::ReferenceNegative);
            report.clp = zero_over(o.subclaims.len());
            report.cip = zero_over(o.citations.len());
            report.generated_subclaims = unjudged(o.subclaims);
            report.citation_checks = o
                .citations
                .iter()
                .map(|&index| CitationCheck {
                    index,
                    in_reference: false,
                    support: vec![],
                    valid: false,
                })
                .collect();
        }
        (Some(r), Some(o)) => {
            let (clr, ref_verdicts) = claim_recall(r.subclaims, o.summary, judge)?;
            let (clp, gen_verdicts) = claim_precision(o.subclaims, r.summary, judge)?;
            let cites = citation_scores(r.citations, o.citations, o.subclaims, sentences, judge)?;
            if r.subclaims.is_empty() {
                flags.insert(MetricFlag::NoReferenceSubclaims);
            }
            if o.subclaims.is_empty() {
                flags.insert(MetricFlag::NoGeneratedSubclaims);
            }
            if r.citations.is_empty() {
                flags.insert(MetricFlag::NoReferenceCitations);
            }
            if o.citations.is_empty() {
                flags.insert(MetricFlag::NoGeneratedCitations);
            }
            report.clr = clr;
            report.clp = clp;
            report.cir = cites.cir;
            report.cip = cites.cip;
            report.reference_subclaims = ref_verdicts;
            report.generated_subclaims = gen_verdicts;
            report.citation_checks = cites.checks;
            report.valid_citations = cites.valid;
        }
    }
    report.flags = flags;
    Ok(report)
}

/// `0/d`, or a degenerate 0 when `d` is 0.
fn zero_over(d: usize) -> Score {
    if d == 0 {
        Score::convention(false)
    } else {
        Score::ratio(0, d as u64)
    }
}

fn unjudged(claims: &[String]) -> Vec<SubclaimVerdict> {
    claims
        .iter()
        .map(|c| SubclaimVerdict {
            subclaim: c.clone(),
            entailed: false,
        })
        .collect()
}

type Owned = Option<(String, Vec<String>, BTreeSet<usize>)>;

fn borrow(x: &Owned) -> Option<Decomposed<'_>> {
    x.as_ref().map(|(summary, subclaims, citations)| Decomposed {
        summary: summary.as_str(),
        subclaims: subclaims.as_slice(),
        citations,
    })
}

/// Decomposes both summaries and scores them against each other.
pub fn evaluate_instance(
    reference: &TraceableSummary,
    output: &TraceableSummary,
    article: &Article,
    judge: &dyn EntailmentJudge,
    decomposer: &dyn ClaimDecomposer,
) -> Result<InstanceReport, MetricsError> {
    let mut fallbacks = BTreeSet::new();
    let mut split = |s: &TraceableSummary, flag: MetricFlag| -> Result<Option<Vec<String>>, MetricsError> {
        match s.summary() {
            None => Ok(None),
            Some(text) => {
                let d = decomposer.decompose(text)?;
                if d.fallback_whole_summary {
                    fallbacks.insert(flag);
                }
                Ok(Some(d.subclaims))
            }
        }
    };
    let ref_claims = split(reference, MetricFlag::ReferenceDecompositionFallback)?;
    let out_claims = split(output, MetricFlag::OutputDecompositionFallback)?;
    let view = |s: &TraceableSummary, claims: &Option<Vec<String>>| -> Owned {
        Some((s.summary()?.to_string(), claims.clone()?, s.citations()?.clone()))
    };
    let r = view(reference, &ref_claims);
    let o = view(output, &out_claims);
    let mut report = evaluate_decomposed(borrow(&r), borrow(&o), &article.sentences, judge)?;
    report.flags.extend(fallbacks);
    Ok(report)
}
