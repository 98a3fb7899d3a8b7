//! Rule-based sentence segmentation.
//!
//! Citation indices refer to the sentences emitted here, so the rules are
//! frozen per [`SEGMENTER_VERSION`]. Any change to the splitting behaviour
//! must bump the version; datasets record the version they were built with.
//!
//! A boundary is placed after a run of terminal punctuation (`.`, `!`, `?`),
//! optionally followed by closing quotes, when all of the following hold:
//!
//! 1. the terminal run is followed by whitespace,
//! 2. the next non-whitespace character is an upper-case letter, a digit,
//!    or an opening quote/bracket,
//! 3. the boundary is not inside a balanced `(...)` or `[...]` group,
//! 4. the token ending in `.` is not a known abbreviation (`e.g.`, `vs.`,
//!    `Fig.`, ...) or a dotted acronym such as `U.S.`.
//!
//! Colons never split, so section labels (`BACKGROUND:`, `PURPOSE:`) stay
//! attached to the sentence that follows them.

use serde::{Deserialize, Serialize};

/// Version tag of the splitting rules. Recorded in every export and dataset header.
pub const SEGMENTER_VERSION: &str = "citesum-rules-v1";

const ABBREVIATIONS: &[&str] = &[
    "e.g", "i.e", "eg", "ie", "vs", "cf", "etc", "al", "approx", "ca", "dr", "drs", "fig", "figs", "no", "nos", "vol",
    "pp", "mr", "mrs", "ms", "prof", "st", "inc", "ltd", "co", "jr", "sr", "ref", "refs", "eq", "eqs", "resp", "incl",
    "viz", "sec", "dept", "univ",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexedSentence {
    pub index: usize,
    pub text: String,
    /// Byte offsets `[start, end)` into the segmented text.
    pub char_span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SegmentError {
    #[error("cannot segment empty text")]
    Empty,
}

/// Splits `raw_text` into indexed sentences.
pub fn segment(raw_text: &str) -> Result<Vec<IndexedSentence>, SegmentError> {
    if raw_text.trim().is_empty() {
        return Err(SegmentError::Empty);
    }
    let chars: Vec<(usize, char)> = raw_text.char_indices().collect();
    let guarded = bracket_guarded(&chars);

    let mut sentences = Vec::new();
    let mut start: Option<usize> = None;
    let mut i = 0;
    while i < chars.len() {
        let (offset, ch) = chars[i];
        if start.is_none() && !ch.is_whitespace() {
            start = Some(offset);
        }
        if is_terminal(ch) && !guarded[i] {
            let mut j = i;
            while j + 1 < chars.len() && is_terminal(chars[j + 1].1) {
                j += 1;
            }
            while j + 1 < chars.len() && is_closing_quote(chars[j + 1].1) {
                j += 1;
            }
            if should_split(raw_text, &chars, i, j) {
                let end = chars[j].0 + chars[j].1.len_utf8();
                push(&mut sentences, raw_text, start.take().unwrap_or(offset), end);
            }
            i = j + 1;
            continue;
        }
        i += 1;
    }
    if let Some(s) = start {
        let end = raw_text.trim_end().len();
        if end > s {
            push(&mut sentences, raw_text, s, end);
        }
    }
    Ok(sentences)
}

/// Convenience wrapper returning only the sentence strings.
pub fn segment_texts(raw_text: &str) -> Result<Vec<String>, SegmentError> {
    Ok(segment(raw_text)?.into_iter().map(|s| s.text).collect())
}

fn push(out: &mut Vec<IndexedSentence>, raw: &str, start: usize, end: usize) {
    let text = raw[start..end].trim_end();
    out.push(IndexedSentence {
        index: out.len(),
        text: text.to_string(),
        char_span: (start, start + text.len()),
    });
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closing_quote(c: char) -> bool {
    matches!(c, '"' | '\'' | '\u{201D}' | '\u{2019}')
}

fn is_opening(c: char) -> bool {
    matches!(c, '"' | '\'' | '\u{201C}' | '\u{2018}' | '(' | '[')
}

// `first` is the first terminal character, `last` the final char of the terminal run.
fn should_split(raw: &str, chars: &[(usize, char)], first: usize, last: usize) -> bool {
    let Some(&(_, after)) = chars.get(last + 1) else {
        return true;
    };
    if !after.is_whitespace() {
        return false;
    }
    let next = chars[last + 1..].iter().map(|&(_, c)| c).find(|c| !c.is_whitespace());
    match next {
        None => return true,
        Some(c) if c.is_uppercase() || c.is_ascii_digit() || is_opening(c) => {}
        Some(_) => return false,
    }
    if chars[first].1 == '.' && first == last {
        let token = preceding_token(raw, chars[first].0);
        if is_abbreviation(token) {
            return false;
        }
    }
    true
}

/// The whitespace-delimited token immediately before byte offset `dot`.
fn preceding_token(raw: &str, dot: usize) -> &str {
    let head = &raw[..dot];
    let begin = head
        .rfind(char::is_whitespace)
        .map(|p| p + head[p..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(0);
    head[begin..].trim_start_matches(['(', '[', '"', '\'', '\u{201C}'])
}

fn is_abbreviation(token: &str) -> bool {
    if token.is_empty() {
        return false;
    }
    let lower = token.to_lowercase();
    if ABBREVIATIONS.contains(&lower.as_str()) {
        return true;
    }
    // Dotted acronyms: "U.S", "p.o", "a.m".
    token.contains('.')
        && token
            .split('.')
            .all(|part| !part.is_empty() && part.chars().count() <= 2 && part.chars().all(char::is_alphabetic))
}

/// Marks every character that sits inside a balanced bracket pair.
///
/// Unmatched brackets are ignored so a stray `(` cannot swallow the rest of
/// the text.
fn bracket_guarded(chars: &[(usize, char)]) -> Vec<bool> {
    let mut depth_delta = vec![0i32; chars.len() + 1];
    for (open, close) in [('(', ')'), ('[', ']')] {
        let mut stack = Vec::new();
        for (i, &(_, c)) in chars.iter().enumerate() {
            if c == open {
                stack.push(i);
            } else if c == close {
                if let Some(o) = stack.pop() {
                    depth_delta[o + 1] += 1;
                    depth_delta[i] -= 1;
                }
            }
        }
    }
    let mut depth = 0;
    depth_delta[..chars.len()]
        .iter()
        .map(|d| {
            depth += d;
            depth > 0
        })
        .collect()
}
