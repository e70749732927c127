//! Prompt templates for pipeline stages 2 through 6.
//!
//! Template bodies live in `prompts/<stage>.txt` and are embedded at build
//! time; their exact bytes are pinned by [`template_digest`]. Placeholders
//! use `{name}`; literal braces are written `{{` and `}}`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::json::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Context,
    DecisionPoints,
    Ruling,
    Prediction,
    Explanation,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Context,
        Stage::DecisionPoints,
        Stage::Ruling,
        Stage::Prediction,
        Stage::Explanation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Context => "context",
            Stage::DecisionPoints => "decision_points",
            Stage::Ruling => "ruling",
            Stage::Prediction => "prediction",
            Stage::Explanation => "explanation",
        }
    }

    fn body(self) -> &'static str {
        match self {
            Stage::Context => include_str!("../prompts/context.txt"),
            Stage::DecisionPoints => include_str!("../prompts/decision_points.txt"),
            Stage::Ruling => include_str!("../prompts/ruling.txt"),
            Stage::Prediction => include_str!("../prompts/prediction.txt"),
            Stage::Explanation => include_str!("../prompts/explanation.txt"),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| PromptError::UnknownStage(s.to_string()))
    }
}

/// Every placeholder name a template may use.
pub const BINDING_NAMES: [&str; 10] = [
    "facts",
    "group_text",
    "present_court",
    "context",
    "present_court_points",
    "final_statement",
    "court_ruling",
    "decision_points_text",
    "predicted_outcome",
    "document",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("missing binding for placeholder `{0}`")]
    MissingPlaceholder(String),
    #[error("unknown binding name `{0}`")]
    UnknownBinding(String),
    #[error("binding `{name}` is not used by the {stage} template")]
    ExtraBinding { stage: Stage, name: String },
    #[error("binding `{0}` given more than once")]
    DuplicateBinding(String),
    #[error("malformed template: {0}")]
    Malformed(String),
    #[error("unknown stage `{0}`")]
    UnknownStage(String),
    #[error("section `{header}` not found in the {stage} template")]
    MissingSection { stage: Stage, header: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binding {
    pub name: String,
    pub value: String,
}

impl Binding {
    pub fn new(name: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value: value.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    stage: Stage,
    body: String,
    pieces: Vec<Piece>,
    placeholders: BTreeSet<String>,
}

impl PromptTemplate {
    /// The embedded template for `stage`.
    pub fn for_stage(stage: Stage) -> Self {
        Self::parse(stage, stage.body().to_string()).expect("embedded templates are well formed")
    }

    pub fn parse(stage: Stage, body: String) -> Result<Self, PromptError> {
        let pieces = tokenize(&body)?;
        let mut placeholders = BTreeSet::new();
        for piece in &pieces {
            if let Piece::Slot(name) = piece {
                if !BINDING_NAMES.contains(&name.as_str()) {
                    return Err(PromptError::UnknownBinding(name.clone()));
                }
                placeholders.insert(name.clone());
            }
        }
        Ok(Self {
            stage,
            body,
            pieces,
            placeholders,
        })
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn placeholders(&self) -> &BTreeSet<String> {
        &self.placeholders
    }

    pub fn render(&self, bindings: &[Binding]) -> Result<String, PromptError> {
        let mut values: BTreeMap<&str, &str> = BTreeMap::new();
        for b in bindings {
            if !BINDING_NAMES.contains(&b.name.as_str()) {
                return Err(PromptError::UnknownBinding(b.name.clone()));
            }
            if !self.placeholders.contains(&b.name) {
                return Err(PromptError::ExtraBinding {
                    stage: self.stage,
                    name: b.name.clone(),
                });
            }
            if values.insert(b.name.as_str(), b.value.as_str()).is_some() {
                return Err(PromptError::DuplicateBinding(b.name.clone()));
            }
        }
        if let Some(missing) = self
            .placeholders
            .iter()
            .find(|p| !values.contains_key(p.as_str()))
        {
            return Err(PromptError::MissingPlaceholder(missing.clone()));
        }
        let mut out = String::with_capacity(
            self.body.len() + values.values().map(|v| v.len()).sum::<usize>(),
        );
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => out.push_str(values[name.as_str()]),
            }
        }
        Ok(out)
    }

    /// Drop the `### <header>` section: its header line and everything up
    /// to the next `### ` line (or the end of the body).
    pub fn without_section(&self, header: &str) -> Result<Self, PromptError> {
        self.replace_section(header, "")
    }

    /// Replace the `### <header>` section with `replacement`, which should
    /// carry its own header line and trailing separator.
    pub fn replace_section(&self, header: &str, replacement: &str) -> Result<Self, PromptError> {
        let (start, end) = self.section_range(header)?;
        let mut body = String::with_capacity(self.body.len());
        body.push_str(&self.body[..start]);
        body.push_str(replacement);
        body.push_str(&self.body[end..]);
        Self::parse(self.stage, body)
    }

    /// Drop every line containing `needle`.
    pub fn without_lines_containing(&self, needle: &str) -> Result<Self, PromptError> {
        let body: Vec<&str> = self
            .body
            .split_inclusive('\n')
            .filter(|line| !line.contains(needle))
            .collect();
        Self::parse(self.stage, body.concat())
    }

    fn section_range(&self, header: &str) -> Result<(usize, usize), PromptError> {
        let wanted = format!("### {header}");
        let mut offset = 0;
        let mut start = None;
        for line in self.body.split_inclusive('\n') {
            let trimmed = line.trim_end();
            if let Some(s) = start {
                if trimmed.starts_with("### ") {
                    return Ok((s, offset));
                }
            } else if trimmed == wanted || trimmed.starts_with(&format!("{wanted}:")) {
                start = Some(offset);
            }
            offset += line.len();
        }
        match start {
            Some(s) => Ok((s, self.body.len())),
            None => Err(PromptError::MissingSection {
                stage: self.stage,
                header: header.to_string(),
            }),
        }
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.body.as_bytes())
    }
}

fn tokenize(body: &str) -> Result<Vec<Piece>, PromptError> {
    let mut pieces = Vec::new();
    let mut text = String::new();
    let mut chars = body.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            '{' if matches!(chars.peek(), Some((_, '{'))) => {
                chars.next();
                text.push('{');
            }
            '}' if matches!(chars.peek(), Some((_, '}'))) => {
                chars.next();
                text.push('}');
            }
            '{' => {
                let rest = &body[i + 1..];
                let close = rest
                    .find('}')
                    .ok_or_else(|| PromptError::Malformed(format!("unclosed `{{` at byte {i}")))?;
                let name = &rest[..close];
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_lowercase() || c == '_') {
                    return Err(PromptError::Malformed(format!(
                        "invalid placeholder `{{{name}}}` at byte {i}"
                    )));
                }
                if !text.is_empty() {
                    pieces.push(Piece::Text(std::mem::take(&mut text)));
                }
                pieces.push(Piece::Slot(name.to_string()));
                for _ in 0..=close {
                    chars.next();
                }
            }
            '}' => {
                return Err(PromptError::Malformed(format!("stray `}}` at byte {i}")));
            }
            _ => text.push(c),
        }
    }
    if !text.is_empty() {
        pieces.push(Piece::Text(text));
    }
    Ok(pieces)
}

/// Render the embedded template for `stage`.
pub fn render(stage: Stage, bindings: &[Binding]) -> Result<String, PromptError> {
    PromptTemplate::for_stage(stage).render(bindings)
}

/// SHA-256 of the embedded template body.
pub fn template_digest(stage: Stage) -> String {
    PromptTemplate::for_stage(stage).digest()
}

/// Digests of all five embedded templates keyed by stage name.
pub fn all_digests() -> BTreeMap<String, String> {
    Stage::ALL
        .into_iter()
        .map(|s| (s.name().to_string(), template_digest(s)))
        .collect()
}
