//! Stage 1: sentence segmentation and rhetorical role labelling.

mod roles;
mod segment;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use roles::{
    classify_roles, BackendConfig, FileBackend, HeuristicBackend, RemoteBackend, RoleBackend,
    RoleRules,
};
pub use segment::{is_enumerated_line, Segmenter};

/// One sentence of a document. `span` holds byte offsets `[start, end)`
/// into the source text; `text` is exactly that slice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub text: String,
    pub span: (usize, usize),
}

/// Segments `text` with the shipped abbreviation list.
pub fn segment(text: &str) -> Vec<Sentence> {
    Segmenter::default().segment(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RhetoricalRole {
    Facts,
    RulingByLowerCourt,
    Argument,
    Statute,
    Precedent,
    RatioOfTheDecision,
    RulingByPresentCourt,
}

impl RhetoricalRole {
    pub const ALL: [RhetoricalRole; 7] = [
        RhetoricalRole::Facts,
        RhetoricalRole::RulingByLowerCourt,
        RhetoricalRole::Argument,
        RhetoricalRole::Statute,
        RhetoricalRole::Precedent,
        RhetoricalRole::RatioOfTheDecision,
        RhetoricalRole::RulingByPresentCourt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RhetoricalRole::Facts => "Facts",
            RhetoricalRole::RulingByLowerCourt => "RulingByLowerCourt",
            RhetoricalRole::Argument => "Argument",
            RhetoricalRole::Statute => "Statute",
            RhetoricalRole::Precedent => "Precedent",
            RhetoricalRole::RatioOfTheDecision => "RatioOfTheDecision",
            RhetoricalRole::RulingByPresentCourt => "RulingByPresentCourt",
        }
    }
}

impl fmt::Display for RhetoricalRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RhetoricalRole {
    type Err = TextprepError;

    /// Accepts the canonical names, their spaced forms ("Ruling by Lower
    /// Court") and the short tags used by published annotations (FAC, RLC,
    /// ARG, STA, PRE, RATIO, RPC).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(char::is_ascii_alphanumeric)
            .collect::<String>()
            .to_ascii_lowercase();
        let role = match key.as_str() {
            "facts" | "fact" | "fac" => RhetoricalRole::Facts,
            "rulingbylowercourt" | "rlc" => RhetoricalRole::RulingByLowerCourt,
            "argument" | "arguments" | "arg" => RhetoricalRole::Argument,
            "statute" | "statutes" | "sta" => RhetoricalRole::Statute,
            "precedent" | "precedents" | "pre" => RhetoricalRole::Precedent,
            "ratioofthedecision" | "ratio" | "rod" => RhetoricalRole::RatioOfTheDecision,
            "rulingbypresentcourt" | "rpc" => RhetoricalRole::RulingByPresentCourt,
            _ => return Err(TextprepError::UnknownRole(s.to_string())),
        };
        Ok(role)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub sentence: Sentence,
    pub role: RhetoricalRole,
    pub backend_id: String,
}

#[derive(Debug, Error)]
pub enum TextprepError {
    #[error(
        "unknown rhetorical role `{0}`; valid roles are Facts, RulingByLowerCourt, Argument, \
         Statute, Precedent, RatioOfTheDecision, RulingByPresentCourt"
    )]
    UnknownRole(String),
    #[error("no role label for case `{case_id}` sentence {index}")]
    MissingLabel { case_id: String, index: usize },
    #[error("sentence text for case `{case_id}` index {index} not found in the document")]
    BoundaryMismatch { case_id: String, index: usize },
    #[error("role labels file {path}: line {line}: {message}")]
    LabelsFile {
        path: String,
        line: usize,
        message: String,
    },
    #[error("role rules: {0}")]
    Rules(String),
    #[error("remote role backend: {0}")]
    Remote(String),
    #[error("no sentence is labelled RulingByPresentCourt")]
    AbsentFinalStatement,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Sentences labelled `Facts`, in document order.
pub fn facts_of(labeled: &[LabeledSentence]) -> Vec<Sentence> {
    labeled
        .iter()
        .filter(|l| l.role == RhetoricalRole::Facts)
        .map(|l| l.sentence.clone())
        .collect()
}

/// The last sentence labelled `RulingByPresentCourt`.
pub fn final_statement(labeled: &[LabeledSentence]) -> Result<Sentence, TextprepError> {
    labeled
        .iter()
        .filter(|l| l.role == RhetoricalRole::RulingByPresentCourt)
        .max_by_key(|l| l.sentence.index)
        .map(|l| l.sentence.clone())
        .ok_or(TextprepError::AbsentFinalStatement)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(roles: &[RhetoricalRole]) -> Vec<LabeledSentence> {
        roles
            .iter()
            .enumerate()
            .map(|(i, &role)| LabeledSentence {
                sentence: Sentence {
                    index: i,
                    text: format!("s{i}"),
                    span: (i * 4, i * 4 + 2),
                },
                role,
                backend_id: "test".into(),
            })
            .collect()
    }

    #[test]
    fn facts_filter() {
        use RhetoricalRole::*;
        let l = labeled(&[Facts, Argument, Facts]);
        let f: Vec<usize> = facts_of(&l).iter().map(|s| s.index).collect();
        assert_eq!(f, [0, 2]);
        assert!(facts_of(&labeled(&[Argument, Statute])).is_empty());
        let all = labeled(&[Facts, Facts]);
        assert_eq!(
            facts_of(&all),
            all.iter().map(|l| l.sentence.clone()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn final_statement_is_last_present_ruling() {
        use RhetoricalRole::*;
        let mut roles = vec![Facts; 43];
        roles[10] = RulingByPresentCourt;
        roles[42] = RulingByPresentCourt;
        assert_eq!(final_statement(&labeled(&roles)).unwrap().index, 42);
        assert_eq!(
            final_statement(&labeled(&[Facts, RulingByPresentCourt, Argument]))
                .unwrap()
                .index,
            1
        );
        assert!(matches!(
            final_statement(&labeled(&[Facts, Argument])),
            Err(TextprepError::AbsentFinalStatement)
        ));
    }

    #[test]
    fn role_parsing() {
        assert_eq!(
            "Ruling by Present Court".parse::<RhetoricalRole>().unwrap(),
            RhetoricalRole::RulingByPresentCourt
        );
        assert_eq!(
            "RLC".parse::<RhetoricalRole>().unwrap(),
            RhetoricalRole::RulingByLowerCourt
        );
        for r in RhetoricalRole::ALL {
            assert_eq!(r.name().parse::<RhetoricalRole>().unwrap(), r);
        }
        let err = "Judgment".parse::<RhetoricalRole>().unwrap_err();
        let msg = err.to_string();
        for r in RhetoricalRole::ALL {
            assert!(msg.contains(r.name()));
        }
    }
}
