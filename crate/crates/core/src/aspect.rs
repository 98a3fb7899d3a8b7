//! The closed set of seven medical aspects a summary can be conditioned on.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown aspect code `{0}`")]
pub struct AspectParseError(pub String);

/// One of the seven medical facets.
///
/// Serialized as its lowercase single-letter code (`"a"`, `"i"`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AspectCode {
    Aims,
    Intervention,
    Outcomes,
    Participants,
    Medicine,
    Duration,
    SideEffects,
}

impl AspectCode {
    /// All aspects in canonical table order.
    pub const ALL: [AspectCode; 7] = [
        AspectCode::Aims,
        AspectCode::Intervention,
        AspectCode::Outcomes,
        AspectCode::Participants,
        AspectCode::Medicine,
        AspectCode::Duration,
        AspectCode::SideEffects,
    ];

    pub fn code(self) -> char {
        match self {
            AspectCode::Aims => 'a',
            AspectCode::Intervention => 'i',
            AspectCode::Outcomes => 'o',
            AspectCode::Participants => 'p',
            AspectCode::Medicine => 'm',
            AspectCode::Duration => 'd',
            AspectCode::SideEffects => 's',
        }
    }

    pub fn from_code(code: char) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.code() == code.to_ascii_lowercase())
    }

    pub fn name(self) -> &'static str {
        match self {
            AspectCode::Aims => "Aims",
            AspectCode::Intervention => "Intervention",
            AspectCode::Outcomes => "Outcomes",
            AspectCode::Participants => "Participants",
            AspectCode::Medicine => "Medicine",
            AspectCode::Duration => "Duration",
            AspectCode::SideEffects => "Side Effects",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            AspectCode::Aims => "Objective",
            AspectCode::Intervention => "Treatment Method",
            AspectCode::Outcomes => "Results of Predefined Variables",
            AspectCode::Participants => "E.g., Diseases, Number",
            AspectCode::Medicine => "E.g., Name, Dosage",
            AspectCode::Duration => "Treatment Duration",
            AspectCode::SideEffects => "Observed Adverse Events",
        }
    }

    /// Relevance query handed to a tracker when selecting sentences for this aspect.
    pub fn tracker_query(self) -> String {
        format!("{}: {}", self.name(), self.description())
    }

    /// Phrase substituted into the few-shot / end-to-end generation instruction.
    pub fn generation_focus(self) -> &'static str {
        match self {
            AspectCode::Aims => "research questions or aims",
            AspectCode::Intervention => "research methods or interventions",
            AspectCode::Outcomes => "research results or outcomes",
            AspectCode::Participants => "participants (e.g., diseases, number)",
            AspectCode::Medicine => "medicines (e.g., name, dosage)",
            AspectCode::Duration => "treatment duration",
            AspectCode::SideEffects => "observed side effects or adverse events",
        }
    }

    /// Phrase substituted into the summarizer instructions.
    pub fn summary_focus(self) -> &'static str {
        match self {
            AspectCode::Aims => "research aims or questions",
            other => other.generation_focus(),
        }
    }

    /// Position in [`AspectCode::ALL`].
    pub fn ordinal(self) -> usize {
        self as usize
    }
}

impl fmt::Display for AspectCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

impl FromStr for AspectCode {
    type Err = AspectParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Self::from_code(c).ok_or_else(|| AspectParseError(s.to_string())),
            _ => Self::ALL
                .into_iter()
                .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
                .ok_or_else(|| AspectParseError(s.to_string())),
        }
    }
}

impl Serialize for AspectCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.code().to_string())
    }
}

impl<'de> Deserialize<'de> for AspectCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
