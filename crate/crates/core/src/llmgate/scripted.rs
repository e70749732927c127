//! Deterministic stand-in for a model, answering the five stage prompts
//! over synthetic documents by reading their planted marker sentences.
//!
//! Stage rules:
//! - context: each field is the last matching marker in the facts block.
//! - decision points: every decision sentence in the text; the flag is
//!   set when the maker equals the present court, or for every point when
//!   no present court is given.
//! - ruling: what the flagged points and the final statement ordered,
//!   declined or reserved. Given a raw document instead of points, only
//!   its first 1000 words are read and every maker counts as the court.
//! - prediction: 1 iff an ordered relief is among those the appellant
//!   seeks; without a context block, 1 iff anything was ordered.
//! - explanation: the five sections, ending with the bound outcome.

use serde_json::{json, Value};

use super::{CompletionRequest, LlmError, Provider, ProviderError, ProviderId};
use crate::corpus::markers::{self, Disposition};
use crate::pipeline::{parse_llm_json, CaseContext};

/// Words of a raw document the scripted model reads.
pub const DOCUMENT_WINDOW: usize = 1000;

#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedProvider;

impl Provider for ScriptedProvider {
    fn id(&self) -> ProviderId {
        ProviderId::Scripted
    }

    fn call(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        scripted_respond(&req.prompt).map_err(ProviderError::Permanent)
    }
}

fn unrecognized(msg: impl Into<String>) -> LlmError {
    LlmError::UnrecognizedMarker(msg.into())
}

/// Answer one rendered stage prompt.
pub fn scripted_respond(prompt: &str) -> Result<String, LlmError> {
    let first = prompt.lines().next().unwrap_or_default();
    if first.contains("helping summarize appeal case details") {
        respond_context(prompt)
    } else if first.contains("extracting **all decision points**") {
        respond_decision_points(prompt)
    } else if first.contains("identify the **final ruling of the present court**") {
        respond_ruling(prompt)
    } else if first.contains("helping to analyze the outcome of an appeal") {
        Ok(respond_prediction(prompt))
    } else if first.contains("generate a structured legal explanation") {
        Ok(respond_explanation(prompt))
    } else {
        Err(unrecognized(
            "prompt matches none of the five stage templates",
        ))
    }
}

/// Body of the `### <header>` section up to the next `### ` line, with a
/// trailing `---` separator removed.
fn section<'a>(prompt: &'a str, header: &str) -> Option<&'a str> {
    let wanted = format!("### {header}");
    let mut offset = 0;
    let mut start = None;
    for line in prompt.split_inclusive('\n') {
        if let Some(s) = start {
            if line.starts_with("### ") {
                return Some(trim_section(&prompt[s..offset]));
            }
        } else if line.trim_end().starts_with(&wanted) {
            start = Some(offset + line.len());
        }
        offset += line.len();
    }
    start.map(|s| trim_section(&prompt[s..]))
}

fn trim_section(s: &str) -> &str {
    let t = s.trim();
    t.strip_suffix("---").unwrap_or(t).trim()
}

fn respond_context(prompt: &str) -> Result<String, LlmError> {
    let facts = prompt
        .find("### Facts:")
        .map(|i| &prompt[i + "### Facts:".len()..])
        .ok_or_else(|| unrecognized("context prompt has no facts block"))?;
    let field = |re| markers::last_capture(re, facts).unwrap_or_default();
    let ctx = CaseContext {
        appellants: field(&markers::APPELLANT),
        respondents: field(&markers::RESPONDENT),
        issue: field(&markers::ISSUE),
        appellant_stance: field(&markers::APPELLANT_STANCE),
        respondent_stance: field(&markers::RESPONDENT_STANCE),
        present_court: field(&markers::COURT),
    };
    if ctx == CaseContext::default() {
        return Err(unrecognized("no context markers in the facts block"));
    }
    Ok(serde_json::to_string_pretty(&ctx).expect("context serializes"))
}

fn respond_decision_points(prompt: &str) -> Result<String, LlmError> {
    let input = prompt
        .find("### Input:\nPresent Court: \"")
        .map(|i| &prompt[i + "### Input:\nPresent Court: \"".len()..])
        .ok_or_else(|| unrecognized("decision point prompt has no input block"))?;
    let (court, rest) = input
        .split_once("\"\nText: ")
        .ok_or_else(|| unrecognized("decision point prompt has no text block"))?;
    let court = markers::normalize_court(court);
    let points: Vec<Value> = markers::find_decisions(rest)
        .into_iter()
        .map(|d| {
            json!({
                "issue": d.issue,
                "decision_maker": d.maker,
                "outcome": d.disposition.outcome(&d.relief),
                "time": d.time,
                "reasoning": d.reasoning,
                "present_court_decision": court.is_empty() || markers::normalize_court(&d.maker) == court,
            })
        })
        .collect();
    Ok(serde_json::to_string_pretty(&points).expect("points serialize"))
}

#[derive(Default)]
struct Dispositions {
    items: Vec<(Disposition, String)>,
}

impl Dispositions {
    fn push(&mut self, d: Disposition, relief: &str) {
        let item = (d, relief.trim().to_string());
        if !self.items.contains(&item) {
            self.items.push(item);
        }
    }

    fn ordered(&self) -> impl Iterator<Item = &str> {
        self.items
            .iter()
            .filter(|(d, _)| *d == Disposition::Ordered)
            .map(|(_, r)| r.as_str())
    }
}

/// Flagged points' outcomes from a serialized points block.
fn flagged_outcomes(block: &str, out: &mut Dispositions) {
    let Ok(Value::Array(points)) = parse_llm_json(block) else {
        return;
    };
    for p in &points {
        if p.get("present_court_decision").and_then(Value::as_bool) != Some(true) {
            continue;
        }
        if let Some((d, relief)) = p
            .get("outcome")
            .and_then(Value::as_str)
            .and_then(Disposition::parse_outcome)
        {
            out.push(d, relief);
        }
    }
}

fn respond_ruling(prompt: &str) -> Result<String, LlmError> {
    let mut found = Dispositions::default();
    if let Some(doc) = section(prompt, "Case Proceeding Document:") {
        let head: Vec<&str> = doc.split_whitespace().take(DOCUMENT_WINDOW).collect();
        for d in markers::find_decisions(&head.join(" ")) {
            found.push(d.disposition, &d.relief);
        }
    } else if let Some(block) = section(prompt, "Decision Points:") {
        flagged_outcomes(block, &mut found);
    }
    if let Some(stmt) = section(prompt, "Final Statements from the Present Court:") {
        for c in markers::FINAL.captures_iter(stmt) {
            if let Some(d) = Disposition::from_verb(&c[1]) {
                found.push(d, &c[2]);
            }
        }
    }
    let mut lines: Vec<String> = found
        .items
        .iter()
        .map(|(d, r)| format!("The court {} {r}.", d.verb()))
        .collect();
    if lines.is_empty() {
        lines.push("The court made no operative order on the reliefs before it.".to_string());
    }
    Ok(format!("Final Ruling:\n{}", lines.join("\n")))
}

fn context_from_block(block: &str) -> Option<CaseContext> {
    parse_llm_json(block)
        .ok()
        .and_then(|v| serde_json::from_value(v).ok())
}

/// Reliefs ordered according to a ruling text made of `The court ... .` lines.
fn ruling_dispositions(ruling: &str) -> Dispositions {
    let mut out = Dispositions::default();
    for line in ruling.lines() {
        if let Some(rest) = line.trim().strip_prefix("The court ") {
            if let Some((d, relief)) = Disposition::parse_outcome(rest) {
                out.push(d, relief);
            }
        }
    }
    out
}

fn respond_prediction(prompt: &str) -> String {
    let context = section(prompt, "Case Context:").and_then(context_from_block);
    let found = match section(prompt, "Final Court Ruling:") {
        Some(ruling) => ruling_dispositions(ruling),
        None => {
            let mut d = Dispositions::default();
            if let Some(block) = section(prompt, "Decision Points:") {
                flagged_outcomes(block, &mut d);
            }
            d
        }
    };
    let ordered: Vec<String> = found.ordered().map(str::to_lowercase).collect();
    let (value, why) = match &context {
        Some(ctx) => {
            let sought = markers::stance_reliefs(&ctx.appellant_stance);
            if ordered.iter().any(|r| sought.contains(r)) {
                (
                    1,
                    "The court granted relief that the appellant was seeking.",
                )
            } else {
                (0, "The court did not grant what the appellant was seeking.")
            }
        }
        None if !ordered.is_empty() => (1, "The court granted relief in the appeal."),
        None => (0, "The court granted no relief in the appeal."),
    };
    format!("{why}\nPrediction: {value}")
}

fn respond_explanation(prompt: &str) -> String {
    let context = section(prompt, "Case Context:").and_then(context_from_block);
    let ruling = section(prompt, "Final Court Ruling:").map(str::to_string);
    let points = section(prompt, "Decision Points:")
        .and_then(|b| parse_llm_json(b).ok())
        .and_then(|v| v.as_array().map(Vec::len));
    let outcome = section(prompt, "Predicted Outcome:").unwrap_or_default();
    explanation_text(context.as_ref(), ruling.as_deref(), points, outcome)
}

/// The five-section explanation written by the scripted model.
pub fn explanation_text(
    context: Option<&CaseContext>,
    ruling: Option<&str>,
    point_count: Option<usize>,
    outcome: &str,
) -> String {
    let facts = match context {
        Some(c) => {
            let against = if c.respondents.is_empty() {
                "the respondent"
            } else {
                &c.respondents
            };
            format!(
                "{} appealed against {} before the {}, seeking {}.",
                c.appellants, against, c.present_court, c.appellant_stance
            )
        }
        None => "The appellant challenged the decision of the court below.".to_string(),
    };
    let issue = match context {
        Some(c) if !c.issue.is_empty() => format!("The court had to decide {}.", c.issue),
        _ => "The court had to decide whether the decision under appeal could stand.".to_string(),
    };
    let law = match point_count {
        Some(n) => format!(
            "The decision rests on the record of the earlier proceedings and the {n} determinations made across its stages."
        ),
        None => "The decision rests on the record of the earlier proceedings.".to_string(),
    };
    let analysis = match ruling {
        Some(r) => r
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect::<Vec<_>>()
            .join(" "),
        None => "The determinations of the present court were weighed against the reliefs sought."
            .to_string(),
    };
    let conclusion = if outcome.contains("Granted") {
        "Appeal Granted."
    } else {
        "Appeal Dismissed."
    };
    format!(
        "Facts of the Case:\n{facts}\n\nLegal Issue(s) Presented:\n{issue}\n\nApplicable Law and Precedents:\n{law}\n\nAnalysis / Reasoning:\n{analysis}\n\nPredicted Conclusion:\n{conclusion}"
    )
}
