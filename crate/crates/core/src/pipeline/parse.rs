//! Tolerant parsing of model output.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde_json::Value;
use thiserror::Error;

use super::{CourtRuling, DecisionPoint, Explanation};

/// Steps of the JSON repair ladder, in the order they are tried.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RepairStep {
    /// The response parsed as-is.
    Direct = 0,
    /// Code fences and surrounding prose removed.
    ExtractOutermost = 1,
    TrailingCommas = 2,
    SmartQuotes = 3,
    RawNewlines = 4,
}

impl RepairStep {
    fn name(self) -> &'static str {
        match self {
            RepairStep::Direct => "direct",
            RepairStep::ExtractOutermost => "extract",
            RepairStep::TrailingCommas => "trailing-commas",
            RepairStep::SmartQuotes => "smart-quotes",
            RepairStep::RawNewlines => "raw-newlines",
        }
    }
}

impl fmt::Display for RepairStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("no JSON value recovered; repair trace: {}", trace.join("; "))]
pub struct JsonParseError {
    pub trace: Vec<String>,
}

pub fn parse_llm_json(text: &str) -> Result<Value, JsonParseError> {
    parse_llm_json_traced(text).map(|(v, _)| v)
}

/// Like [`parse_llm_json`], also reporting which repair step succeeded.
pub fn parse_llm_json_traced(text: &str) -> Result<(Value, RepairStep), JsonParseError> {
    let mut trace = Vec::new();
    let mut attempt = |step: RepairStep, candidate: &str| -> Option<Value> {
        match serde_json::from_str::<Value>(candidate) {
            Ok(v) => Some(v),
            Err(e) => {
                trace.push(format!("{step}: {e}"));
                None
            }
        }
    };

    let s0 = text.trim();
    if let Some(v) = attempt(RepairStep::Direct, s0) {
        return Ok((v, RepairStep::Direct));
    }
    let s1 = extract_outermost(&strip_fences(s0));
    if let Some(v) = attempt(RepairStep::ExtractOutermost, &s1) {
        return Ok((v, RepairStep::ExtractOutermost));
    }
    let s2 = remove_trailing_commas(&s1);
    if let Some(v) = attempt(RepairStep::TrailingCommas, &s2) {
        return Ok((v, RepairStep::TrailingCommas));
    }
    // Once smart quotes become real delimiters the string-aware passes see
    // different string boundaries, so extraction and comma removal rerun.
    let s3 = remove_trailing_commas(&extract_outermost(&normalize_quotes(&s2)));
    if let Some(v) = attempt(RepairStep::SmartQuotes, &s3) {
        return Ok((v, RepairStep::SmartQuotes));
    }
    let s4 = escape_raw_control_chars(&s3);
    if let Some(v) = attempt(RepairStep::RawNewlines, &s4) {
        return Ok((v, RepairStep::RawNewlines));
    }
    Err(JsonParseError { trace })
}

static FENCE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"```[A-Za-z0-9_-]*").expect("fence pattern"));

fn strip_fences(s: &str) -> String {
    FENCE.replace_all(s, "").into_owned()
}

/// The largest balanced `{...}` or `[...]` block, or everything from the
/// first opener when nothing balances.
fn extract_outermost(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut best: Option<(usize, usize)> = None;
    let mut first_open = None;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'{' || b == b'[' {
            first_open.get_or_insert(i);
            if let Some(end) = balanced_end(bytes, i) {
                if best.is_none_or(|(bs, be)| end - i > be - bs) {
                    best = Some((i, end));
                }
                i = end + 1;
                continue;
            }
        }
        i += 1;
    }
    match (best, first_open) {
        (Some((a, b)), _) => s[a..=b].to_string(),
        (None, Some(a)) => s[a..].to_string(),
        (None, None) => s.to_string(),
    }
}

fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut stack = Vec::new();
    let mut in_str = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_str {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_str = false;
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'{' | b'[' => stack.push(b),
            b'}' | b']' => {
                let open = stack.pop()?;
                if (open == b'{') != (b == b'}') {
                    return None;
                }
                if stack.is_empty() {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Drop commas that directly precede `}` or `]`, outside string literals.
fn remove_trailing_commas(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    let mut in_str = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_str {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_str = false;
            }
            continue;
        }
        if c == '"' {
            in_str = true;
        }
        if c == ',' {
            let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
            if matches!(next, Some('}') | Some(']')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

fn normalize_quotes(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            '“' | '”' | '„' | '‟' | '″' => '"',
            '‘' | '’' | '‚' | '‛' | '′' => '\'',
            other => other,
        })
        .collect()
}

/// Escape raw newlines, carriage returns and tabs inside string literals.
fn escape_raw_control_chars(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 16);
    let mut in_str = false;
    let mut escaped = false;
    for c in s.chars() {
        if in_str {
            if escaped {
                escaped = false;
                out.push(c);
                continue;
            }
            match c {
                '\\' => {
                    escaped = true;
                    out.push(c);
                }
                '"' => {
                    in_str = false;
                    out.push(c);
                }
                '\n' => out.push_str("\\n"),
                '\r' => out.push_str("\\r"),
                '\t' => out.push_str("\\t"),
                other => out.push(other),
            }
        } else {
            if c == '"' {
                in_str = true;
            }
            out.push(c);
        }
    }
    out
}

static PREDICTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?i)\bprediction\b[\s*_`'"]*[:=\-–]?[\s*_`'"]*([01])(?:[^0-9]|$)"#)
        .expect("prediction pattern")
});

/// The digit of the last `Prediction: <0|1>` occurrence.
pub fn parse_prediction(text: &str) -> Option<u8> {
    PREDICTION
        .captures_iter(text)
        .last()
        .map(|c| if &c[1] == "1" { 1 } else { 0 })
}

static RULING_HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?im)^[\s#*>_-]*final\s+ruling[\s*_]*:[\s*_]*").expect("ruling header pattern")
});

/// Text after the `Final Ruling:` header. Returns the ruling and whether the
/// header was present; `None` when nothing usable remains.
pub fn parse_ruling(text: &str) -> Option<(CourtRuling, bool)> {
    let (body, found) = match RULING_HEADER.find(text) {
        Some(m) => (&text[m.end()..], true),
        None => (text, false),
    };
    let body = body.trim().trim_end_matches("---").trim();
    (!body.is_empty()).then(|| {
        (
            CourtRuling {
                text: body.to_string(),
            },
            found,
        )
    })
}

/// Section headers of the structured explanation, in order.
pub const EXPLANATION_HEADERS: [&str; 5] = [
    "Facts of the Case",
    "Legal Issue(s) Presented",
    "Applicable Law and Precedents",
    "Analysis / Reasoning",
    "Predicted Conclusion",
];

fn header_slot(key: &str) -> Option<usize> {
    match key {
        "factsofthecase" => Some(0),
        "legalissuespresented" | "legalissuepresented" => Some(1),
        "applicablelawandprecedents" | "applicablelawandprecedent" => Some(2),
        "analysisreasoning" => Some(3),
        "predictedconclusion" => Some(4),
        _ => None,
    }
}

static LEADING_DECORATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^[\s#*_>\-]*(?:(?:\d{1,2}|[ivxIVX]{1,4}|[A-Ea-e])[.)]\s*)?[\s*_]*")
        .expect("decoration pattern")
});

fn normalize_key(s: &str) -> String {
    s.chars()
        .filter(char::is_ascii_alphanumeric)
        .collect::<String>()
        .to_ascii_lowercase()
}

/// Recognise `line` as an explanation header; returns its slot and any
/// content that follows the colon on the same line.
fn match_header(line: &str) -> Option<(usize, &str)> {
    let stripped = LEADING_DECORATION
        .find(line)
        .map_or(line, |m| &line[m.end()..]);
    let (head, rest) = match stripped.find(':') {
        Some(p) => (&stripped[..p], &stripped[p + 1..]),
        None => (stripped, ""),
    };
    let slot = header_slot(&normalize_key(head))?;
    Some((slot, rest.trim_start_matches(['*', '_']).trim()))
}

/// Split a response into the five sections. On failure returns the names
/// of the missing or empty sections.
pub fn parse_explanation(text: &str) -> Result<Explanation, Vec<String>> {
    let mut sections: [Vec<&str>; 5] = Default::default();
    let mut seen = [false; 5];
    let mut current: Option<usize> = None;
    for line in text.lines() {
        if let Some((slot, rest)) = match_header(line) {
            current = Some(slot);
            seen[slot] = true;
            if !rest.is_empty() {
                sections[slot].push(rest);
            }
            continue;
        }
        if let Some(slot) = current {
            let t = line.trim();
            if t.chars().all(|c| c == '-') && !t.is_empty() {
                continue;
            }
            sections[slot].push(line);
        }
    }
    let bodies: Vec<String> = sections
        .iter()
        .map(|lines| lines.join("\n").trim().to_string())
        .collect();
    let missing: Vec<String> = (0..5)
        .filter(|&i| !seen[i] || bodies[i].is_empty())
        .map(|i| EXPLANATION_HEADERS[i].to_string())
        .collect();
    if !missing.is_empty() {
        return Err(missing);
    }
    let mut it = bodies.into_iter();
    let mut next = || it.next().unwrap_or_default();
    Ok(Explanation {
        facts: next(),
        issues: next(),
        law_and_precedents: next(),
        reasoning: next(),
        conclusion: next(),
    })
}

fn as_text(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => {
            let t = s.trim();
            let lower = t.to_ascii_lowercase();
            if t.is_empty() || matches!(lower.as_str(), "null" | "none" | "n/a" | "na") {
                None
            } else {
                Some(t.to_string())
            }
        }
        other => Some(other.to_string()),
    }
}

fn as_flag(v: Option<&Value>) -> Option<bool> {
    match v? {
        Value::Bool(b) => Some(*b),
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "true" | "yes" => Some(true),
            "false" | "no" => Some(false),
            _ => None,
        },
        _ => None,
    }
}

/// Decision points from a parsed response. Accepts an array, an object
/// wrapping one array, or a single point object. Elements lacking a
/// required field are skipped with a warning.
pub fn parse_decision_points(value: &Value) -> (Vec<DecisionPoint>, Vec<String>) {
    let mut warnings = Vec::new();
    let items: Vec<&Value> = match value {
        Value::Array(a) => a.iter().collect(),
        Value::Object(o) if o.contains_key("issue") => vec![value],
        Value::Object(o) => match o.values().find_map(Value::as_array) {
            Some(a) => a.iter().collect(),
            None => {
                warnings.push("decision point response holds no array".to_string());
                Vec::new()
            }
        },
        _ => {
            warnings.push("decision point response is not an array".to_string());
            Vec::new()
        }
    };
    let mut points = Vec::new();
    for (i, item) in items.into_iter().enumerate() {
        let Some(obj) = item.as_object() else {
            warnings.push(format!("decision point {i} is not an object"));
            continue;
        };
        let field = |k: &str| obj.get(k).and_then(as_text);
        let (Some(issue), Some(decision_maker), Some(outcome)) =
            (field("issue"), field("decision_maker"), field("outcome"))
        else {
            warnings.push(format!(
                "decision point {i} lacks issue, decision_maker or outcome; skipped"
            ));
            continue;
        };
        let flag = as_flag(obj.get("present_court_decision")).unwrap_or_else(|| {
            warnings.push(format!(
                "decision point {i} has no usable present_court_decision; treated as false"
            ));
            false
        });
        points.push(DecisionPoint {
            issue,
            decision_maker,
            outcome,
            time: field("time"),
            reasoning: field("reasoning"),
            present_court_decision: flag,
        });
    }
    (points, warnings)
}
