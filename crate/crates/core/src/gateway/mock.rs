//! Deterministic offline backend.
//!
//! Answers come from a lookup table first. Anything not in the table falls
//! back to simple lexical rules:
//!
//! - generation: the first numbered document line becomes a one-citation
//!   answer; otherwise the first `- ` source line is echoed; otherwise
//!   `Unknown.`
//! - entailment: every content word of the hypothesis appears in the premise
//! - relevance: share of query content words found in the sentence
//! - decomposition: one claim per sentence

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{approx_tokens, CallError, Completion, CompletionRequest, GatewayError};
use crate::segmenter;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRule {
    /// Hex sha256 of the exact prompt.
    #[serde(default)]
    pub prompt_sha256: Option<String>,
    /// Substring that must occur in the prompt.
    #[serde(default)]
    pub contains: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntailRule {
    pub premise: String,
    pub hypothesis: String,
    pub verdict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRule {
    /// `None` matches any query.
    #[serde(default)]
    pub query: Option<String>,
    pub sentence: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeRule {
    pub summary: String,
    pub subclaims: Vec<String>,
}

/// Lookup table for [`MockBackend`], usually loaded from JSON.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockTable {
    #[serde(default)]
    pub generate: Vec<GenerateRule>,
    /// Text returned by `generate` when no rule matches, instead of the lexical fallback.
    #[serde(default)]
    pub default: Option<String>,
    #[serde(default)]
    pub entail: Vec<EntailRule>,
    #[serde(default)]
    pub score: Vec<ScoreRule>,
    #[serde(default)]
    pub decompose: Vec<DecomposeRule>,
}

impl MockTable {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))
    }

    pub fn with_generate(mut self, contains: &str, text: &str) -> Self {
        self.generate.push(GenerateRule {
            prompt_sha256: None,
            contains: Some(contains.to_string()),
            text: text.to_string(),
        });
        self
    }

    pub fn with_prompt(mut self, prompt: &str, text: &str) -> Self {
        self.generate.push(GenerateRule {
            prompt_sha256: Some(prompt_hash(prompt)),
            contains: None,
            text: text.to_string(),
        });
        self
    }

    pub fn with_entail(mut self, premise: &str, hypothesis: &str, verdict: bool) -> Self {
        self.entail.push(EntailRule {
            premise: premise.to_string(),
            hypothesis: hypothesis.to_string(),
            verdict,
        });
        self
    }

    pub fn with_score(mut self, query: Option<&str>, sentence: &str, score: f64) -> Self {
        self.score.push(ScoreRule {
            query: query.map(str::to_string),
            sentence: sentence.to_string(),
            score,
        });
        self
    }

    pub fn with_decomposition(mut self, summary: &str, subclaims: &[&str]) -> Self {
        self.decompose.push(DecomposeRule {
            summary: summary.to_string(),
            subclaims: subclaims.iter().map(|s| s.to_string()).collect(),
        });
        self
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug)]
pub struct MockBackend {
    table: MockTable,
    by_hash: HashMap<String, usize>,
    entail: HashMap<(String, String), bool>,
    decompose: HashMap<String, Vec<String>>,
}

impl MockBackend {
    pub fn new(table: MockTable) -> Self {
        let by_hash = table
            .generate
            .iter()
            .enumerate()
            .filter_map(|(i, r)| Some((r.prompt_sha256.clone()?.to_lowercase(), i)))
            .collect();
        let entail = table
            .entail
            .iter()
            .map(|r| ((r.premise.clone(), r.hypothesis.clone()), r.verdict))
            .collect();
        let decompose = table
            .decompose
            .iter()
            .map(|r| (r.summary.clone(), r.subclaims.clone()))
            .collect();
        MockBackend {
            table,
            by_hash,
            entail,
            decompose,
        }
    }

    fn lookup_generate(&self, prompt: &str) -> Option<&str> {
        if let Some(&i) = self.by_hash.get(&prompt_hash(prompt)) {
            return Some(&self.table.generate[i].text);
        }
        self.table
            .generate
            .iter()
            .find(|r| r.prompt_sha256.is_none() && r.contains.as_deref().is_some_and(|c| prompt.contains(c)))
            .map(|r| r.text.as_str())
            .or(self.table.default.as_deref())
    }
}

impl super::Backend for MockBackend {
    fn generate(&self, request: &CompletionRequest) -> Result<Completion, CallError> {
        let text = match self.lookup_generate(&request.prompt) {
            Some(t) => t.to_string(),
            None => fallback_generation(&request.prompt),
        };
        Ok(Completion {
            input_tokens: approx_tokens(&request.prompt),
            output_tokens: approx_tokens(&text),
            text,
        })
    }

    fn entail(&self, premise: &str, hypothesis: &str) -> Option<Result<bool, CallError>> {
        let key = (premise.to_string(), hypothesis.to_string());
        Some(Ok(match self.entail.get(&key) {
            Some(&v) => v,
            None => lexical_entails(premise, hypothesis),
        }))
    }

    fn score(&self, query: &str, sentence: &str) -> Option<Result<f64, CallError>> {
        let rule = self
            .table
            .score
            .iter()
            .find(|r| r.sentence == sentence && r.query.as_deref() == Some(query))
            .or_else(|| {
                self.table
                    .score
                    .iter()
                    .find(|r| r.sentence == sentence && r.query.is_none())
            });
        Some(Ok(match rule {
            Some(r) => r.score,
            None => lexical_overlap(query, sentence),
        }))
    }

    fn decompose(&self, summary: &str) -> Option<Result<Vec<String>, CallError>> {
        Some(Ok(match self.decompose.get(summary) {
            Some(claims) => claims.clone(),
            None => segmenter::segment_texts(summary).unwrap_or_default(),
        }))
    }
}

fn fallback_generation(prompt: &str) -> String {
    // Only the part before any demonstrations belongs to the target document.
    let target = prompt.split("\nDemonstrations\n").next().unwrap_or(prompt);
    for line in target.lines() {
        if let Some((idx, text)) = line.split_once(": ") {
            if !idx.is_empty() && idx.chars().all(|c| c.is_ascii_digit()) {
                return format!("Summary: {text}\nCitations: [{idx}]");
            }
        }
    }
    for line in target.lines() {
        if let Some(text) = line.strip_prefix("- ") {
            return text.to_string();
        }
    }
    "Unknown.".to_string()
}

const STOPWORDS: &[&str] = &[
    "the", "and", "for", "with", "was", "were", "are", "that", "this", "from", "into", "its", "their", "has", "had",
    "have", "but", "not", "all", "any", "who", "which", "than", "been", "our", "his", "her", "they", "them", "these",
    "those", "also", "each", "per", "via",
];

/// Lower-cased alphanumeric words longer than two characters, minus stopwords.
pub fn content_words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() > 2 || w.chars().all(|c| c.is_ascii_digit()) && !w.is_empty())
        .map(str::to_lowercase)
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .collect()
}

fn lexical_entails(premise: &str, hypothesis: &str) -> bool {
    if premise.trim() == hypothesis.trim() {
        return true;
    }
    let h = content_words(hypothesis);
    if h.is_empty() {
        return false;
    }
    let p = content_words(premise);
    h.is_subset(&p)
}

fn lexical_overlap(query: &str, sentence: &str) -> f64 {
    let q = content_words(query);
    if q.is_empty() {
        return 0.0;
    }
    let s = content_words(sentence);
    q.intersection(&s).count() as f64 / q.len() as f64
}

#[cfg(test)]
mod tests {
    use super::super::Backend;
    use super::*;

    fn req(prompt: &str) -> CompletionRequest {
        CompletionRequest {
            prompt: prompt.to_string(),
            temperature: 1.0,
            max_output_tokens: 64,
        }
    }

    #[test]
    fn hash_rule_wins_over_substring() {
        let table = MockTable::default()
            .with_generate("hello", "substring")
            .with_prompt("hello world", "exact");
        let m = MockBackend::new(table);
        assert_eq!(m.generate(&req("hello world")).unwrap().text, "exact");
        assert_eq!(m.generate(&req("hello there")).unwrap().text, "substring");
    }

    #[test]
    fn deterministic_fallbacks() {
        let m = MockBackend::new(MockTable::default());
        let out = m.generate(&req("Document\n0: Alpha beta.\n1: Gamma.\n")).unwrap();
        assert_eq!(out.text, "Summary: Alpha beta.\nCitations: [0]");
        assert_eq!(
            m.generate(&req("Sentences\n- Only source.\n")).unwrap().text,
            "Only source."
        );
        assert_eq!(m.generate(&req("nothing here")).unwrap().text, "Unknown.");
    }

    #[test]
    fn default_text_overrides_fallback() {
        let mut table = MockTable::default();
        table.default = Some("Summary: Unknown.\nCitations: Null.".into());
        let m = MockBackend::new(table);
        assert_eq!(
            m.generate(&req("0: x")).unwrap().text,
            "Summary: Unknown.\nCitations: Null."
        );
    }

    #[test]
    fn lexical_rules() {
        assert!(lexical_entails(
            "Patients received 40 mg daily.",
            "patients received 40 mg"
        ));
        assert!(!lexical_entails(
            "Patients received 40 mg daily.",
            "Mice received 40 mg"
        ));
        assert_eq!(lexical_overlap("tumor size", "The tumor shrank."), 0.5);
        assert_eq!(lexical_overlap("of in", "anything"), 0.0);
    }

    #[test]
    fn table_overrides_lexical() {
        let m = MockBackend::new(
            MockTable::default()
                .with_entail("a b c", "a b c", false)
                .with_score(None, "S.", 0.9)
                .with_decomposition("Two facts here.", &["Fact one.", "Fact two."]),
        );
        assert_eq!(m.entail("a b c", "a b c").unwrap(), Ok(false));
        assert_eq!(m.score("anything", "S.").unwrap(), Ok(0.9));
        assert_eq!(
            m.decompose("Two facts here.").unwrap().unwrap(),
            vec!["Fact one.", "Fact two."]
        );
        assert_eq!(m.decompose("One. Two.").unwrap().unwrap(), vec!["One.", "Two."]);
    }
}
