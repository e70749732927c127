//! One case through all stages.

use serde::{Deserialize, Serialize};

use super::chunk::{chunk_document, ChunkOptions};
use super::stages::{
    build_case_context, extract_decision_points, generate_explanation, generate_present_ruling,
    predict_from_points, predict_judgment, FinalStatement, Llm, RulingInput,
};
use super::{Ablation, RunArtifacts, StageError};
use crate::corpus::CaseRecord;
use crate::llmgate::LlmGate;
use crate::textprep::{classify_roles, facts_of, final_statement, RoleBackend, Segmenter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSettings {
    pub model_id: String,
    pub temperature: f64,
    pub max_output: u32,
    pub seed: u64,
    pub ablation: Option<Ablation>,
    pub chunk: ChunkOptions,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            model_id: "scripted".into(),
            temperature: 0.0,
            max_output: 2048,
            seed: 1,
            ablation: None,
            chunk: ChunkOptions::default(),
        }
    }
}

/// A rendered prompt and the response it got.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptExchange {
    pub stage: String,
    pub prompt: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseFailure {
    pub case_id: String,
    pub stage: String,
    pub message: String,
    pub raw_response: Option<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub case_id: String,
    pub result: Result<RunArtifacts, CaseFailure>,
    pub exchanges: Vec<PromptExchange>,
}

/// Run every enabled stage over `record`. Failures are reported in the
/// outcome, never panicked on.
pub fn run_case(
    record: &CaseRecord,
    settings: &PipelineSettings,
    gate: &LlmGate,
    segmenter: &Segmenter,
    roles: &dyn RoleBackend,
) -> CaseOutcome {
    let llm = Llm::new(
        gate,
        &settings.model_id,
        settings.temperature,
        settings.seed,
        settings.max_output,
    );
    let mut warnings = Vec::new();
    let result =
        stages(record, settings, &llm, segmenter, roles, &mut warnings).map_err(|e| CaseFailure {
            case_id: record.case_id.clone(),
            stage: e.stage().to_string(),
            message: e.to_string(),
            raw_response: e.raw_response().map(str::to_string),
            warnings: warnings.clone(),
        });
    CaseOutcome {
        case_id: record.case_id.clone(),
        result,
        exchanges: llm.into_exchanges(),
    }
}

fn stages(
    record: &CaseRecord,
    settings: &PipelineSettings,
    llm: &Llm,
    segmenter: &Segmenter,
    roles: &dyn RoleBackend,
    warnings: &mut Vec<String>,
) -> Result<RunArtifacts, StageError> {
    let ablation = settings.ablation;
    let text = record.text.as_str();

    // Stage 1. Sentences are needed for chunking even when roles are off.
    let sentences = match roles.sentences_for(&record.case_id, text) {
        Some(r) => r?,
        None => segmenter.segment(text),
    };
    let (facts, final_stmt) = if ablation == Some(Ablation::NoRhetorical) {
        (text.trim().to_string(), None)
    } else {
        let labeled = classify_roles(&record.case_id, &sentences, roles)?;
        let facts: Vec<String> = facts_of(&labeled).into_iter().map(|s| s.text).collect();
        (
            facts.join(" "),
            Some(final_statement(&labeled).ok().map(|s| s.text)),
        )
    };
    let final_stmt = match &final_stmt {
        None => FinalStatement::Omitted,
        Some(None) => {
            warnings.push("roles: no sentence labelled as a ruling by the present court".into());
            FinalStatement::Absent
        }
        Some(Some(s)) => FinalStatement::Found(s),
    };

    // Stage 2.
    let context = if ablation == Some(Ablation::NoContext) {
        None
    } else {
        Some(build_case_context(&facts, llm, warnings)?)
    };

    // Stage 3.
    let points = if ablation == Some(Ablation::NoDecisionPoints) {
        None
    } else {
        let chunks = chunk_document(text, &sentences, &settings.chunk);
        let court = context.as_ref().map_or("", |c| c.present_court.as_str());
        Some(extract_decision_points(&chunks, court, llm, warnings)?)
    };

    // Stage 4.
    let ruling = if ablation == Some(Ablation::NoRuling) {
        None
    } else {
        let input = match &points {
            Some(p) => RulingInput::Points(p),
            None => RulingInput::Document(text),
        };
        match generate_present_ruling(context.as_ref(), input, final_stmt, llm, warnings) {
            Ok(r) => Some(r),
            Err(StageError::RulingUnavailable) => {
                warnings.push(
                    "ruling: no present-court decision points and no final statement; predicting from all decision points"
                        .into(),
                );
                None
            }
            Err(e) => return Err(e),
        }
    };

    // Stage 5.
    let prediction = match &ruling {
        Some(r) => predict_judgment(context.as_ref(), r, llm, warnings)?,
        None => predict_from_points(
            context.as_ref(),
            points.as_deref().unwrap_or_default(),
            llm,
            warnings,
        )?,
    };

    // Stage 6.
    let explanation = generate_explanation(
        context.as_ref(),
        points.as_deref(),
        ruling.as_ref(),
        prediction,
        llm,
    )?;

    Ok(RunArtifacts {
        context,
        decision_points: points,
        ruling,
        prediction,
        explanation: Some(explanation),
        warnings: std::mem::take(warnings),
    })
}
