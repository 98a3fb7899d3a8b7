//! Parsing of model output back into structured values.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::TraceableSummary;

/// Something recoverable that was wrong with a generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseFlag {
    /// An index `>= n_sentences` was dropped.
    CitationOutOfRange { index: usize },
    /// The same index was listed more than once.
    DuplicateCitation { index: usize },
    /// A summary was given but no usable citation list.
    MissingCitations,
    /// The summary was "Unknown" but citations were listed anyway; they were ignored.
    CitationsOnNegative,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("no `Summary:` field in output")]
    NoSummary,
    #[error("unreadable citation list {0:?}")]
    BadCitations(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedGeneration {
    pub summary: TraceableSummary,
    pub flags: Vec<ParseFlag>,
}

/// Strips markdown emphasis and leading list markers from a line.
fn clean(line: &str) -> &str {
    line.trim().trim_matches(|c| c == '*' || c == '#' || c == '_').trim()
}

fn field<'a>(line: &'a str, name: &str) -> Option<&'a str> {
    let line = clean(line);
    let head = line.get(..name.len())?;
    if !head.eq_ignore_ascii_case(name) {
        return None;
    }
    let rest = line[name.len()..].trim_start_matches(['*', '_']).trim_start();
    rest.strip_prefix(':').map(|r| r.trim_start_matches(['*', '_']).trim())
}

/// `Unknown`, `Null`, `None` with optional trailing period, any case.
pub fn is_negative_marker(text: &str) -> bool {
    let t = text
        .trim()
        .trim_matches(|c| c == '"' || c == '\'')
        .trim_end_matches('.')
        .trim();
    ["unknown", "null", "none"].iter().any(|m| t.eq_ignore_ascii_case(m))
}

/// Parses `Summary:` / `Citations:` output for an article of `n_sentences` sentences.
pub fn parse_generation(text: &str, n_sentences: usize) -> Result<ParsedGeneration, ParseError> {
    let lines: Vec<&str> = text.lines().collect();
    let start = lines
        .iter()
        .position(|l| field(l, "summary").is_some())
        .ok_or(ParseError::NoSummary)?;
    let mut summary_parts = vec![field(lines[start], "summary").unwrap_or_default().to_string()];
    let mut citations_text = None;
    for line in &lines[start + 1..] {
        if let Some(c) = field(line, "citations") {
            citations_text = Some(c.to_string());
            break;
        }
        if !line.trim().is_empty() {
            summary_parts.push(line.trim().to_string());
        }
    }
    let summary = summary_parts
        .into_iter()
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ");

    let mut flags = Vec::new();
    if summary.is_empty() {
        return Err(ParseError::NoSummary);
    }
    if is_negative_marker(&summary) {
        if citations_text
            .as_deref()
            .is_some_and(|c| !is_negative_marker(c) && !c.is_empty())
        {
            flags.push(ParseFlag::CitationsOnNegative);
        }
        return Ok(ParsedGeneration {
            summary: TraceableSummary::Negative,
            flags,
        });
    }

    let citations = match citations_text.as_deref() {
        None => {
            flags.push(ParseFlag::MissingCitations);
            BTreeSet::new()
        }
        Some(c) if c.is_empty() || is_negative_marker(c) => {
            flags.push(ParseFlag::MissingCitations);
            BTreeSet::new()
        }
        Some(c) => {
            let indices = parse_index_list(c)?;
            let mut kept = BTreeSet::new();
            let mut dup_flagged = BTreeSet::new();
            for i in indices {
                if i >= n_sentences {
                    flags.push(ParseFlag::CitationOutOfRange { index: i });
                } else if !kept.insert(i) && dup_flagged.insert(i) {
                    flags.push(ParseFlag::DuplicateCitation { index: i });
                }
            }
            if kept.is_empty() && !flags.iter().any(|f| matches!(f, ParseFlag::CitationOutOfRange { .. })) {
                flags.push(ParseFlag::MissingCitations);
            }
            kept
        }
    };
    Ok(ParsedGeneration {
        summary: TraceableSummary::Positive { summary, citations },
        flags,
    })
}

/// Reads integers out of `[1, 2]`, `1, 2`, `1 2`, `[1][2]`.
fn parse_index_list(text: &str) -> Result<Vec<usize>, ParseError> {
    let mut out = Vec::new();
    for token in text.split(|c: char| !c.is_ascii_digit()) {
        if token.is_empty() {
            continue;
        }
        out.push(token.parse().map_err(|_| ParseError::BadCitations(text.to_string()))?);
    }
    let only_list_chars = text
        .chars()
        .all(|c| c.is_ascii_digit() || c.is_whitespace() || "[](),;.".contains(c));
    if !only_list_chars {
        return Err(ParseError::BadCitations(text.to_string()));
    }
    Ok(out)
}

/// Leading yes/no style answer, or `None` if the text is not a verdict.
pub fn parse_verdict(text: &str) -> Option<bool> {
    let word: String = text
        .trim()
        .chars()
        .skip_while(|c| !c.is_alphanumeric())
        .take_while(|c| c.is_alphanumeric() || *c == '_')
        .collect::<String>()
        .to_lowercase();
    match word.as_str() {
        "yes" | "true" | "entailment" | "entailed" | "entails" | "1" => Some(true),
        "no" | "false" | "not_entailment" | "contradiction" | "neutral" | "0" => Some(false),
        _ => None,
    }
}

/// One claim per non-empty line, with bullet or numbering prefixes removed.
pub fn parse_subclaims(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| {
            let l = l.trim();
            let l = l.trim_start_matches(['-', '*', '\u{2022}']).trim_start();
            let digits = l.chars().take_while(char::is_ascii_digit).count();
            let l = if digits > 0 && l[digits..].starts_with(['.', ')']) {
                l[digits + 1..].trim_start()
            } else {
                l
            };
            l.trim().to_string()
        })
        .filter(|l| !l.is_empty())
        .collect()
}
