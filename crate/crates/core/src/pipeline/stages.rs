//! Prompt construction, completion and parsing for stages 2 to 6.

use std::cell::RefCell;
use std::collections::HashSet;

use serde::Serialize;
use serde_json::Value;

use super::parse::{
    parse_decision_points, parse_explanation, parse_llm_json, parse_prediction, parse_ruling,
};
use super::run::PromptExchange;
use super::{
    Ablation, CaseContext, Chunk, CourtRuling, DecisionPoint, Explanation, Prediction, StageError,
};
use crate::corpus::markers::normalize_court;
use crate::json::to_canonical_string;
use crate::llmgate::{CompletionRequest, LlmGate};
use crate::prompts::{Binding, PromptError, PromptTemplate, Stage};

/// Bound to `{final_statement}` when no sentence is labelled as a ruling by
/// the present court.
pub const NO_FINAL_STATEMENT: &str = "(no explicit final statement found)";

const JSON_RETRY: &str = "\n\nRespond with the JSON only, exactly in the output format above.";
const PREDICTION_RETRY: &str =
    "\n\nEnd your answer with a single line of the form `Prediction: 0` or `Prediction: 1`.";
const EXPLANATION_RETRY: &str = "\n\nUse exactly these section headers, each followed by a colon: Facts of the Case, Legal Issue(s) Presented, Applicable Law and Precedents, Analysis / Reasoning, Predicted Conclusion.";

/// Completion handle for one case: the gate plus the request parameters,
/// recording every exchange.
pub struct Llm<'a> {
    gate: &'a LlmGate,
    model_id: String,
    temperature: f64,
    seed: u64,
    max_output: u32,
    exchanges: RefCell<Vec<PromptExchange>>,
}

impl<'a> Llm<'a> {
    pub fn new(
        gate: &'a LlmGate,
        model_id: &str,
        temperature: f64,
        seed: u64,
        max_output: u32,
    ) -> Self {
        Self {
            gate,
            model_id: model_id.to_string(),
            temperature,
            seed,
            max_output,
            exchanges: RefCell::new(Vec::new()),
        }
    }

    pub fn complete(&self, stage: &'static str, prompt: String) -> Result<String, StageError> {
        let req = CompletionRequest {
            prompt,
            model_id: self.model_id.clone(),
            temperature: self.temperature,
            seed: self.seed,
            max_output: self.max_output,
        };
        let response = self
            .gate
            .complete(&req)
            .map_err(|source| StageError::Llm { stage, source })?;
        self.exchanges.borrow_mut().push(PromptExchange {
            stage: stage.to_string(),
            prompt: req.prompt,
            response: response.clone(),
        });
        Ok(response)
    }

    pub fn exchanges(&self) -> Vec<PromptExchange> {
        self.exchanges.borrow().clone()
    }

    pub fn into_exchanges(self) -> Vec<PromptExchange> {
        self.exchanges.into_inner()
    }
}

fn canonical<T: Serialize + ?Sized>(value: &T) -> String {
    to_canonical_string(value)
        .expect("value serializes")
        .trim_end()
        .to_string()
}

/// Context as bound into prompts: stable-key pretty JSON.
pub fn serialize_context(ctx: &CaseContext) -> String {
    canonical(ctx)
}

pub fn serialize_points(points: &[DecisionPoint]) -> String {
    canonical(points)
}

fn prompt_err(stage: &'static str) -> impl FnOnce(PromptError) -> StageError {
    move |source| StageError::Prompt { stage, source }
}

/// Prompt inputs left out of a run, each removing its template section.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Omissions {
    pub context: bool,
    pub final_statement: bool,
    /// Decision points are replaced by the document in the ruling prompt.
    pub decision_points: bool,
    /// Decision points are compared directly in the prediction prompt.
    pub ruling: bool,
}

impl Omissions {
    pub fn for_ablation(ablation: Option<Ablation>) -> Self {
        Self {
            context: ablation == Some(Ablation::NoContext),
            final_statement: ablation == Some(Ablation::NoRhetorical),
            decision_points: ablation == Some(Ablation::NoDecisionPoints),
            ruling: ablation == Some(Ablation::NoRuling),
        }
    }
}

/// Stage template with the sections for omitted inputs edited out.
pub fn stage_template(stage: Stage, omit: Omissions) -> Result<PromptTemplate, PromptError> {
    let mut t = PromptTemplate::for_stage(stage);
    match stage {
        Stage::Context | Stage::DecisionPoints => {}
        Stage::Ruling => {
            if omit.context {
                t = t.without_section("Case Context")?;
            }
            if omit.decision_points {
                t = t
                    .replace_section(
                        "Decision Points",
                        "### Case Proceeding Document:\n\n{document}\n---\n\n",
                    )?
                    .without_lines_containing("2. Focus on the decision points")?;
            }
            if omit.final_statement {
                t = t
                    .without_section("Final Statements from the Present Court")?
                    .without_lines_containing("3. Use the **Final Statements")?;
            }
        }
        Stage::Prediction => {
            if omit.ruling {
                t = t.replace_section(
                    "Final Court Ruling",
                    "### Decision Points:\n{decision_points_text}\n---\n\n",
                )?;
            }
            if omit.context {
                t = t.without_section("Case Context")?;
            }
        }
        Stage::Explanation => {
            if omit.context {
                t = t
                    .without_section("Case Context")?
                    .without_lines_containing("- The **case context**")?;
            }
            if omit.ruling {
                t = t
                    .without_section("Final Court Ruling")?
                    .without_lines_containing("- The **final court ruling**")?;
            }
            if omit.decision_points {
                t = t
                    .without_section("Decision Points")?
                    .without_lines_containing("- A set of **decision points**")?;
            }
        }
    }
    Ok(t)
}

fn string_field(obj: &serde_json::Map<String, Value>, key: &str) -> Option<String> {
    match obj.get(key)? {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Null => Some(String::new()),
        other => Some(other.to_string()),
    }
}

fn context_from_value(value: &Value, warnings: &mut Vec<String>) -> Option<CaseContext> {
    let obj = match value {
        Value::Object(o) => o,
        Value::Array(a) => a.first()?.as_object()?,
        _ => return None,
    };
    if !CaseContext::KEYS.iter().any(|k| obj.contains_key(*k)) {
        return None;
    }
    let mut get = |key: &str| {
        string_field(obj, key).unwrap_or_else(|| {
            warnings.push(format!("context: key {key:?} missing; left empty"));
            String::new()
        })
    };
    Some(CaseContext {
        appellants: get("appellants"),
        respondents: get("respondents"),
        issue: get("issue"),
        appellant_stance: get("appellant_stance"),
        respondent_stance: get("respondent_stance"),
        present_court: get("present_court"),
    })
}

/// Stage 2: the six case-level fields from the facts text.
pub fn build_case_context(
    facts: &str,
    llm: &Llm,
    warnings: &mut Vec<String>,
) -> Result<CaseContext, StageError> {
    const STAGE: &str = "context";
    if facts.trim().is_empty() {
        warnings
            .push("context: no facts sentences; building context from an empty facts block".into());
    }
    let prompt = stage_template(Stage::Context, Omissions::default())
        .and_then(|t| t.render(&[Binding::new("facts", facts)]))
        .map_err(prompt_err(STAGE))?;
    let mut response = llm.complete(STAGE, prompt.clone())?;
    for attempt in 0..2 {
        if let Ok(v) = parse_llm_json(&response) {
            if let Some(ctx) = context_from_value(&v, warnings) {
                return Ok(ctx);
            }
        }
        if attempt == 0 {
            response = llm.complete(STAGE, format!("{prompt}{JSON_RETRY}"))?;
        }
    }
    Err(StageError::Unparseable {
        stage: STAGE,
        message: "no JSON object with the context fields".into(),
        raw_response: response,
    })
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn point_key(p: &DecisionPoint) -> (String, String, String, Option<String>, Option<String>, bool) {
    (
        normalize_ws(&p.issue),
        normalize_ws(&p.decision_maker),
        normalize_ws(&p.outcome),
        p.time.as_deref().map(normalize_ws),
        p.reasoning.as_deref().map(normalize_ws),
        p.present_court_decision,
    )
}

/// Stage 3: decision points from every chunk, in chunk order. Exact
/// duplicates are merged; a chunk whose response cannot be parsed adds
/// nothing but a warning.
pub fn extract_decision_points(
    chunks: &[Chunk],
    present_court: &str,
    llm: &Llm,
    warnings: &mut Vec<String>,
) -> Result<Vec<DecisionPoint>, StageError> {
    const STAGE: &str = "decision_points";
    let template =
        stage_template(Stage::DecisionPoints, Omissions::default()).map_err(prompt_err(STAGE))?;
    let court = normalize_court(present_court);
    if court.is_empty() {
        warnings.push("decision_points: present court unknown; flag check skipped".into());
    }
    let mut seen = HashSet::new();
    let mut points = Vec::new();
    for chunk in chunks {
        let prompt = template
            .render(&[
                Binding::new("present_court", present_court),
                Binding::new("group_text", chunk.prompt_text()),
            ])
            .map_err(prompt_err(STAGE))?;
        let response = llm.complete(STAGE, prompt)?;
        let value = match parse_llm_json(&response) {
            Ok(v) => v,
            Err(e) => {
                warnings.push(format!(
                    "decision_points: chunk {} unparseable, skipped: {e}",
                    chunk.index
                ));
                continue;
            }
        };
        let (found, notes) = parse_decision_points(&value);
        warnings.extend(
            notes
                .into_iter()
                .map(|n| format!("decision_points: chunk {}: {n}", chunk.index)),
        );
        for p in found {
            if !court.is_empty() {
                let maker = normalize_court(&p.decision_maker);
                let looks_present = maker.contains(&court) || court.contains(&maker);
                if looks_present != p.present_court_decision {
                    warnings.push(format!(
                        "decision_points: flag {} for {:?} disagrees with present court {:?}",
                        p.present_court_decision, p.decision_maker, present_court
                    ));
                }
            }
            if seen.insert(point_key(&p)) {
                points.push(p);
            }
        }
    }
    Ok(points)
}

/// What the ruling stage is given.
pub enum RulingInput<'a> {
    Points(&'a [DecisionPoint]),
    /// Under the no-decision-points ablation the document stands in.
    Document(&'a str),
}

/// The final statement as offered to the ruling stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinalStatement<'a> {
    Found(&'a str),
    /// No sentence carries the present-court ruling role.
    Absent,
    /// Role labels are unavailable; the prompt section is dropped.
    Omitted,
}

/// Stage 4: the present court's ruling. Without context the context
/// section is dropped.
pub fn generate_present_ruling(
    context: Option<&CaseContext>,
    input: RulingInput,
    final_statement: FinalStatement,
    llm: &Llm,
    warnings: &mut Vec<String>,
) -> Result<CourtRuling, StageError> {
    const STAGE: &str = "ruling";
    let omit = Omissions {
        context: context.is_none(),
        final_statement: final_statement == FinalStatement::Omitted,
        decision_points: matches!(input, RulingInput::Document(_)),
        ruling: false,
    };
    let template = stage_template(Stage::Ruling, omit).map_err(prompt_err(STAGE))?;
    let mut bindings = Vec::new();
    if let Some(ctx) = context {
        bindings.push(Binding::new("context", serialize_context(ctx)));
    }
    match input {
        RulingInput::Points(points) => {
            let flagged: Vec<DecisionPoint> = points
                .iter()
                .filter(|p| p.present_court_decision)
                .cloned()
                .collect();
            if flagged.is_empty() && !matches!(final_statement, FinalStatement::Found(_)) {
                return Err(StageError::RulingUnavailable);
            }
            bindings.push(Binding::new(
                "present_court_points",
                serialize_points(&flagged),
            ));
        }
        RulingInput::Document(doc) => bindings.push(Binding::new("document", doc.trim())),
    }
    match final_statement {
        FinalStatement::Found(s) => bindings.push(Binding::new("final_statement", s)),
        FinalStatement::Absent => {
            bindings.push(Binding::new("final_statement", NO_FINAL_STATEMENT))
        }
        FinalStatement::Omitted => {}
    }
    let prompt = template.render(&bindings).map_err(prompt_err(STAGE))?;
    let response = llm.complete(STAGE, prompt)?;
    match parse_ruling(&response) {
        Some((ruling, true)) => Ok(ruling),
        Some((ruling, false)) => {
            warnings.push(
                "ruling: response lacks a \"Final Ruling:\" header; whole response taken".into(),
            );
            Ok(ruling)
        }
        None => Err(StageError::Unparseable {
            stage: STAGE,
            message: "empty ruling".into(),
            raw_response: response,
        }),
    }
}

fn complete_prediction(prompt: String, llm: &Llm) -> Result<Prediction, StageError> {
    const STAGE: &str = "prediction";
    let response = llm.complete(STAGE, prompt.clone())?;
    if let Some(v) = parse_prediction(&response) {
        return Ok(Prediction { value: v });
    }
    let response = llm.complete(STAGE, format!("{prompt}{PREDICTION_RETRY}"))?;
    parse_prediction(&response)
        .map(|value| Prediction { value })
        .ok_or(StageError::Unparseable {
            stage: STAGE,
            message: "no `Prediction: <0 or 1>` line".into(),
            raw_response: response,
        })
}

fn warn_empty_stance(context: Option<&CaseContext>, warnings: &mut Vec<String>) {
    if context.is_some_and(|c| c.appellant_stance.is_empty()) {
        warnings.push("prediction: appellant stance is empty".into());
    }
}

/// Stage 5: compare the ruling with what the appellant sought.
pub fn predict_judgment(
    context: Option<&CaseContext>,
    ruling: &CourtRuling,
    llm: &Llm,
    warnings: &mut Vec<String>,
) -> Result<Prediction, StageError> {
    warn_empty_stance(context, warnings);
    let omit = Omissions {
        context: context.is_none(),
        ..Omissions::default()
    };
    let template = stage_template(Stage::Prediction, omit).map_err(prompt_err("prediction"))?;
    let mut bindings = vec![Binding::new("court_ruling", ruling.text.as_str())];
    if let Some(ctx) = context {
        bindings.push(Binding::new("context", serialize_context(ctx)));
    }
    let prompt = template
        .render(&bindings)
        .map_err(prompt_err("prediction"))?;
    complete_prediction(prompt, llm)
}

/// Stage 5 without a ruling: compare the context with the decision points
/// directly.
pub fn predict_from_points(
    context: Option<&CaseContext>,
    points: &[DecisionPoint],
    llm: &Llm,
    warnings: &mut Vec<String>,
) -> Result<Prediction, StageError> {
    warn_empty_stance(context, warnings);
    let omit = Omissions {
        context: context.is_none(),
        ruling: true,
        ..Omissions::default()
    };
    let template = stage_template(Stage::Prediction, omit).map_err(prompt_err("prediction"))?;
    let mut bindings = vec![Binding::new(
        "decision_points_text",
        serialize_points(points),
    )];
    if let Some(ctx) = context {
        bindings.push(Binding::new("context", serialize_context(ctx)));
    }
    let prompt = template
        .render(&bindings)
        .map_err(prompt_err("prediction"))?;
    complete_prediction(prompt, llm)
}

/// Stage 6: the five-section explanation. Absent inputs drop their
/// prompt sections.
pub fn generate_explanation(
    context: Option<&CaseContext>,
    points: Option<&[DecisionPoint]>,
    ruling: Option<&CourtRuling>,
    prediction: Prediction,
    llm: &Llm,
) -> Result<Explanation, StageError> {
    const STAGE: &str = "explanation";
    let omit = Omissions {
        context: context.is_none(),
        final_statement: false,
        decision_points: points.is_none(),
        ruling: ruling.is_none(),
    };
    let template = stage_template(Stage::Explanation, omit).map_err(prompt_err(STAGE))?;
    let mut bindings = vec![Binding::new(
        "predicted_outcome",
        prediction.outcome_phrase(),
    )];
    if let Some(ctx) = context {
        bindings.push(Binding::new("context", serialize_context(ctx)));
    }
    if let Some(r) = ruling {
        bindings.push(Binding::new("court_ruling", r.text.as_str()));
    }
    if let Some(p) = points {
        bindings.push(Binding::new("decision_points_text", serialize_points(p)));
    }
    let prompt = template.render(&bindings).map_err(prompt_err(STAGE))?;
    let response = llm.complete(STAGE, prompt.clone())?;
    if let Ok(e) = parse_explanation(&response) {
        return Ok(e);
    }
    let response = llm.complete(STAGE, format!("{prompt}{EXPLANATION_RETRY}"))?;
    parse_explanation(&response).map_err(|missing| StageError::MissingSections {
        missing,
        raw_response: response,
    })
}
