//! Stages 2 to 6: case context, decision points, present court ruling,
//! judgment prediction and structured explanation.

mod chunk;
mod parse;
mod run;
mod stages;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chunk::{chunk_document, ChunkOptions};
pub use parse::{
    parse_decision_points, parse_explanation, parse_llm_json, parse_llm_json_traced,
    parse_prediction, parse_ruling, JsonParseError, RepairStep, EXPLANATION_HEADERS,
};
pub use run::{run_case, CaseFailure, CaseOutcome, PipelineSettings, PromptExchange};
pub use stages::{
    build_case_context, extract_decision_points, generate_explanation, generate_present_ruling,
    predict_from_points, predict_judgment, serialize_context, serialize_points, stage_template,
    FinalStatement, Llm, Omissions, RulingInput, NO_FINAL_STATEMENT,
};

use crate::llmgate::LlmError;
use crate::prompts::PromptError;
use crate::textprep::TextprepError;

/// The six case-level fields. An empty string means "not mentioned".
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CaseContext {
    pub appellants: String,
    pub respondents: String,
    pub issue: String,
    pub appellant_stance: String,
    pub respondent_stance: String,
    pub present_court: String,
}

impl CaseContext {
    pub const KEYS: [&'static str; 6] = [
        "appellants",
        "respondents",
        "issue",
        "appellant_stance",
        "respondent_stance",
        "present_court",
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecisionPoint {
    pub issue: String,
    pub decision_maker: String,
    pub outcome: String,
    pub time: Option<String>,
    pub reasoning: Option<String>,
    pub present_court_decision: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkSource {
    BulletGroup,
    TokenWindow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub index: usize,
    /// Document text covered by this chunk, `text == doc[span.0..span.1]`.
    pub text: String,
    pub source: ChunkSource,
    pub token_count: usize,
    pub span: (usize, usize),
    /// Line introducing a bullet list; sent along with every item of the
    /// list but not part of the chunk's own span.
    pub lead_in: Option<String>,
}

impl Chunk {
    /// Text sent to the extraction prompt.
    pub fn prompt_text(&self) -> String {
        match &self.lead_in {
            Some(lead) => format!("{lead}\n{}", self.text),
            None => self.text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CourtRuling {
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub value: u8,
}

impl Prediction {
    pub const GRANTED: Prediction = Prediction { value: 1 };
    pub const DISMISSED: Prediction = Prediction { value: 0 };

    pub fn new(value: u8) -> Option<Self> {
        (value <= 1).then_some(Self { value })
    }

    pub fn outcome_phrase(self) -> &'static str {
        if self.value == 1 {
            "Appeal Granted"
        } else {
            "Appeal Dismissed"
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub facts: String,
    pub issues: String,
    pub law_and_precedents: String,
    pub reasoning: String,
    pub conclusion: String,
}

impl Explanation {
    /// Sections joined under their headers, in fixed order.
    pub fn to_text(&self) -> String {
        let bodies = [
            &self.facts,
            &self.issues,
            &self.law_and_precedents,
            &self.reasoning,
            &self.conclusion,
        ];
        EXPLANATION_HEADERS
            .iter()
            .zip(bodies)
            .map(|(h, b)| format!("{h}:\n{b}"))
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub context: Option<CaseContext>,
    pub decision_points: Option<Vec<DecisionPoint>>,
    pub ruling: Option<CourtRuling>,
    pub prediction: Prediction,
    pub explanation: Option<Explanation>,
    pub warnings: Vec<String>,
}

/// A pipeline stage that can be switched off for an ablation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    NoRhetorical,
    NoContext,
    NoDecisionPoints,
    NoRuling,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::NoRhetorical,
        Ablation::NoContext,
        Ablation::NoDecisionPoints,
        Ablation::NoRuling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::NoRhetorical => "no_rhetorical",
            Ablation::NoContext => "no_context",
            Ablation::NoDecisionPoints => "no_decision_points",
            Ablation::NoRuling => "no_ruling",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                format!(
                    "unknown ablation `{s}` (expected one of no_rhetorical, no_context, no_decision_points, no_ruling)"
                )
            })
    }
}

/// The five ablation-study configurations, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Configuration {
    Full,
    NoRhetorical,
    NoContext,
    NoDecisionPoints,
    NoRuling,
}

impl Configuration {
    pub const ALL: [Configuration; 5] = [
        Configuration::Full,
        Configuration::NoRhetorical,
        Configuration::NoContext,
        Configuration::NoDecisionPoints,
        Configuration::NoRuling,
    ];

    pub fn ablation(self) -> Option<Ablation> {
        match self {
            Configuration::Full => None,
            Configuration::NoRhetorical => Some(Ablation::NoRhetorical),
            Configuration::NoContext => Some(Ablation::NoContext),
            Configuration::NoDecisionPoints => Some(Ablation::NoDecisionPoints),
            Configuration::NoRuling => Some(Ablation::NoRuling),
        }
    }

    pub fn name(self) -> &'static str {
        self.ablation().map_or("full", Ablation::name)
    }

    pub fn label(self) -> &'static str {
        match self {
            Configuration::Full => "Full pipeline (all stages)",
            Configuration::NoRhetorical => "Without Rhetorical Role Classification",
            Configuration::NoContext => "Without Case Context Construction",
            Configuration::NoDecisionPoints => "Without Decision Point Extraction",
            Configuration::NoRuling => "Without Present Court Ruling Generation",
        }
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error("{stage}: completion failed: {source}")]
    Llm {
        stage: &'static str,
        #[source]
        source: LlmError,
    },
    #[error("{stage}: prompt: {source}")]
    Prompt {
        stage: &'static str,
        #[source]
        source: PromptError,
    },
    #[error("{stage}: unparseable response: {message}")]
    Unparseable {
        stage: &'static str,
        message: String,
        raw_response: String,
    },
    #[error("ruling: no present-court decision points and no final statement")]
    RulingUnavailable,
    #[error("explanation: missing sections {missing:?}")]
    MissingSections {
        missing: Vec<String>,
        raw_response: String,
    },
    #[error("role labelling: {0}")]
    Roles(#[from] TextprepError),
}

impl StageError {
    pub fn raw_response(&self) -> Option<&str> {
        match self {
            StageError::Unparseable { raw_response, .. }
            | StageError::MissingSections { raw_response, .. } => Some(raw_response),
            _ => None,
        }
    }

    pub fn stage(&self) -> &'static str {
        match self {
            StageError::Llm { stage, .. }
            | StageError::Prompt { stage, .. }
            | StageError::Unparseable { stage, .. } => stage,
            StageError::RulingUnavailable => "ruling",
            StageError::MissingSections { .. } => "explanation",
            StageError::Roles(_) => "roles",
        }
    }
}
