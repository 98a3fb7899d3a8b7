//! Prompt templates.
//!
//! Documents with citable sentences are rendered one sentence per line as
//! `i: sentence`. Source lists without indices are rendered as `- sentence`.
//! Generation outputs and demonstrations share one shape:
//!
//! ```text
//! Summary: <one sentence>
//! Citations: [i, j]
//! ```
//!
//! with `Summary: Unknown.` / `Citations: Null.` for the negative case.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aspect::AspectCode;
use crate::corpus::{Article, TraceableSummary};

use super::GatewayError;

/// One worked example shown to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub sentences: Vec<String>,
    #[serde(flatten)]
    pub output: TraceableSummary,
}

/// Exactly one positive and one negative demonstration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DemoPair {
    positive: Demonstration,
    negative: Demonstration,
}

impl DemoPair {
    pub fn new(positive: Demonstration, negative: Demonstration) -> Result<Self, GatewayError> {
        if positive.output.is_negative() {
            return Err(GatewayError::Config("positive demonstration has no summary".into()));
        }
        if !negative.output.is_negative() {
            return Err(GatewayError::Config("negative demonstration has a summary".into()));
        }
        for d in [&positive, &negative] {
            if d.sentences.is_empty() {
                return Err(GatewayError::Config("demonstration has no sentences".into()));
            }
            if let Some(i) = d.output.out_of_range(d.sentences.len()) {
                return Err(GatewayError::Config(format!(
                    "demonstration cites missing sentence {i}"
                )));
            }
        }
        Ok(DemoPair { positive, negative })
    }

    pub fn positive(&self) -> &Demonstration {
        &self.positive
    }

    pub fn negative(&self) -> &Demonstration {
        &self.negative
    }
}

impl<'de> Deserialize<'de> for DemoPair {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            positive: Demonstration,
            negative: Demonstration,
        }
        let raw = Raw::deserialize(deserializer)?;
        DemoPair::new(raw.positive, raw.negative).map_err(serde::de::Error::custom)
    }
}

/// Demonstration pairs per aspect, loaded from a JSON object keyed by aspect code.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DemoBank {
    pairs: BTreeMap<AspectCode, DemoPair>,
}

impl DemoBank {
    pub fn insert(&mut self, aspect: AspectCode, pair: DemoPair) {
        self.pairs.insert(aspect, pair);
    }

    pub fn get(&self, aspect: AspectCode) -> Result<&DemoPair, GatewayError> {
        self.pairs
            .get(&aspect)
            .ok_or_else(|| GatewayError::Config(format!("no demonstrations for aspect `{aspect}`")))
    }

    pub fn aspects(&self) -> impl Iterator<Item = AspectCode> + '_ {
        self.pairs.keys().copied()
    }

    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        serde_json::from_str(text).map_err(|e| GatewayError::Config(format!("demonstrations: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Renders a numbered document, one `i: sentence` line per sentence.
pub fn render_document(sentences: &[String]) -> String {
    let mut out = String::new();
    for (i, s) in sentences.iter().enumerate() {
        out.push_str(&format!("{i}: {s}\n"));
    }
    out
}

fn render_sources(sentences: &[String]) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&format!("- {s}\n"));
    }
    out
}

/// The two output lines for a summary, as they appear in demonstrations.
pub fn render_output(output: &TraceableSummary) -> String {
    match output {
        TraceableSummary::Negative => "Summary: Unknown.\nCitations: Null.\n".to_string(),
        TraceableSummary::Positive { summary, citations } => {
            let list: Vec<String> = citations.iter().map(usize::to_string).collect();
            format!("Summary: {summary}\nCitations: [{}]\n", list.join(", "))
        }
    }
}

/// Two-shot prompt: instructions, the target document, the empty answer
/// slots, then the positive and negative demonstrations.
pub fn render_generation_prompt(article: &Article, aspect: AspectCode, demos: &DemoPair) -> String {
    let mut out = String::new();
    out.push_str("Instructions\n");
    out.push_str(&format!(
        "Each sentence of the document below starts with its index marker. Following the demonstrations, \
         write one sentence describing the {} of this study and list the markers of the sentences it draws on. \
         If the document says nothing relevant, answer \"Unknown\".\n\n",
        aspect.generation_focus()
    ));
    out.push_str("Document\n");
    out.push_str(&render_document(&article.sentences));
    out.push_str("\nSummary:\nCitations:\n\n");
    out.push_str("Demonstrations\n");
    for (i, demo) in [demos.positive(), demos.negative()].into_iter().enumerate() {
        if i > 0 {
            out.push_str("\n---\n\n");
        }
        out.push_str("Document\n");
        out.push_str(&render_document(&demo.sentences));
        out.push_str(&render_output(&demo.output));
    }
    out
}

/// Zero-shot prompt for a model that both summarizes and cites.
pub fn render_ete_prompt(article: &Article, aspect: AspectCode) -> String {
    format!(
        "Instructions\nWrite one sentence describing the {} of the study below and list the indices of the \
         sentences it draws on. If the article says nothing relevant, answer \"Unknown\".\n\n\
         Sentences\n{}\nSummary:\nCitations:\n",
        aspect.summary_focus(),
        render_document(&article.sentences)
    )
}

/// Summarizer prompt over tracked sentences, optionally with the whole article as background.
pub fn render_tracked_summary_prompt(aspect: AspectCode, sources: &[String], full_context: Option<&str>) -> String {
    let mut out = String::from("Instructions\n");
    out.push_str(&format!(
        "Write one clear sentence describing the {} of the study. Keep every key detail from the input sentences.",
        aspect.summary_focus()
    ));
    if full_context.is_some() {
        out.push_str(
            " Use only facts stated in the input sentences; the full text is background for resolving \
             abbreviations and references and must not contribute new facts.",
        );
    }
    out.push_str("\n\nSentences\n");
    out.push_str(&render_sources(sources));
    if let Some(context) = full_context {
        out.push_str("\nFull Context\n");
        out.push_str(context.trim());
        out.push('\n');
    }
    out.push_str("\nSummary:\n");
    out
}

/// Summarizer prompt over the whole article (summary first, citations later).
pub fn render_article_summary_prompt(aspect: AspectCode, article: &Article) -> String {
    format!(
        "Instructions\nWrite one clear sentence describing the {} of the study in the article below. \
         If the article says nothing relevant, answer \"Unknown\".\n\nArticle\n{}\nSummary:\n",
        aspect.summary_focus(),
        render_sources(&article.sentences)
    )
}

pub fn render_entailment_prompt(premise: &str, hypothesis: &str) -> String {
    format!(
        "Does the premise entail the hypothesis? Answer with a single word, yes or no.\n\n\
         Premise: {premise}\nHypothesis: {hypothesis}\nAnswer:"
    )
}

pub fn render_decomposition_prompt(summary: &str) -> String {
    format!(
        "Split the text into atomic claims. Each claim is one short declarative sentence stating a single fact. \
         Keep the original order and output one claim per line prefixed with \"- \".\n\nText: {summary}\nClaims:\n"
    )
}

pub fn render_relevance_prompt(query: &str, sentence: &str) -> String {
    format!(
        "Is the sentence relevant to the query? Answer with a single word, yes or no.\n\n\
         Query: {query}\nSentence: {sentence}\nAnswer:"
    )
}
