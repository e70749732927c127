//! Rhetorical role backends: precomputed labels, keyword heuristics and a
//! JSON-over-HTTP service.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{LabeledSentence, RhetoricalRole, Sentence, TextprepError};
use crate::llmgate::Gate;

const SHIPPED_RULES: &str = include_str!("../../data/role_rules.toml");

pub trait RoleBackend: Send + Sync {
    fn id(&self) -> &str;

    fn classify(
        &self,
        case_id: &str,
        sentences: &[Sentence],
    ) -> Result<Vec<LabeledSentence>, TextprepError>;

    /// Externally supplied sentence boundaries for `case_id`, when the
    /// backend carries them. `None` means "segment the text yourself".
    fn sentences_for(
        &self,
        _case_id: &str,
        _text: &str,
    ) -> Option<Result<Vec<Sentence>, TextprepError>> {
        None
    }
}

/// Label `sentences` with `backend`, checking that every sentence got
/// exactly one role.
pub fn classify_roles(
    case_id: &str,
    sentences: &[Sentence],
    backend: &dyn RoleBackend,
) -> Result<Vec<LabeledSentence>, TextprepError> {
    let labeled = backend.classify(case_id, sentences)?;
    if labeled.len() != sentences.len() {
        let index = labeled.len().min(sentences.len());
        return Err(TextprepError::MissingLabel {
            case_id: case_id.to_string(),
            index,
        });
    }
    Ok(labeled)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    File {
        path: PathBuf,
    },
    Heuristic {
        #[serde(default)]
        rules: Option<PathBuf>,
    },
    Remote {
        url: String,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
}

fn default_in_flight() -> usize {
    4
}

fn default_timeout_secs() -> u64 {
    60
}

impl BackendConfig {
    pub fn build(&self) -> Result<Arc<dyn RoleBackend>, TextprepError> {
        Ok(match self {
            BackendConfig::File { path } => Arc::new(FileBackend::load(path)?),
            BackendConfig::Heuristic { rules: None } => Arc::new(HeuristicBackend::default()),
            BackendConfig::Heuristic { rules: Some(path) } => {
                let text = fs::read_to_string(path).map_err(|source| TextprepError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                Arc::new(HeuristicBackend::new(RoleRules::parse(&text)?))
            }
            BackendConfig::Remote {
                url,
                max_in_flight,
                timeout_secs,
            } => Arc::new(RemoteBackend::new(
                url.clone(),
                *max_in_flight,
                Duration::from_secs(*timeout_secs),
            )),
        })
    }
}

fn label(
    sentences: &[Sentence],
    roles: Vec<RhetoricalRole>,
    backend_id: &str,
) -> Vec<LabeledSentence> {
    sentences
        .iter()
        .cloned()
        .zip(roles)
        .map(|(sentence, role)| LabeledSentence {
            sentence,
            role,
            backend_id: backend_id.to_string(),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// file backend

#[derive(Debug, Deserialize)]
struct LabelLine {
    case_id: String,
    sentence_index: usize,
    role: String,
    #[serde(default)]
    text: Option<String>,
}

/// Precomputed labels from a JSONL file of
/// `{"case_id", "sentence_index", "role"}` records. Records may also carry
/// the sentence `text`; when every record of a case does, those texts
/// define the case's sentence boundaries.
#[derive(Debug, Default)]
pub struct FileBackend {
    labels: HashMap<String, Vec<Option<LabelSlot>>>,
}

/// A sentence's role and, when the file gives it, its text.
type LabelSlot = (RhetoricalRole, Option<String>);

impl FileBackend {
    pub fn load(path: &Path) -> Result<Self, TextprepError> {
        let text = fs::read_to_string(path).map_err(|source| TextprepError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, TextprepError> {
        let mut backend = Self::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| TextprepError::LabelsFile {
                path: origin.to_string(),
                line: i + 1,
                message,
            };
            let rec: LabelLine = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            let role: RhetoricalRole = rec
                .role
                .parse()
                .map_err(|e: TextprepError| err(e.to_string()))?;
            let slots = backend.labels.entry(rec.case_id).or_default();
            if slots.len() <= rec.sentence_index {
                slots.resize(rec.sentence_index + 1, None);
            }
            if slots[rec.sentence_index].is_some() {
                return Err(err(format!(
                    "duplicate label for sentence {}",
                    rec.sentence_index
                )));
            }
            slots[rec.sentence_index] = Some((role, rec.text));
        }
        Ok(backend)
    }
}

impl RoleBackend for FileBackend {
    fn id(&self) -> &str {
        "file"
    }

    fn classify(
        &self,
        case_id: &str,
        sentences: &[Sentence],
    ) -> Result<Vec<LabeledSentence>, TextprepError> {
        let slots = self.labels.get(case_id);
        let roles = sentences
            .iter()
            .map(|s| {
                slots
                    .and_then(|v| v.get(s.index))
                    .and_then(|slot| slot.as_ref())
                    .map(|(role, _)| *role)
                    .ok_or_else(|| TextprepError::MissingLabel {
                        case_id: case_id.to_string(),
                        index: s.index,
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(label(sentences, roles, self.id()))
    }

    fn sentences_for(
        &self,
        case_id: &str,
        text: &str,
    ) -> Option<Result<Vec<Sentence>, TextprepError>> {
        let slots = self.labels.get(case_id)?;
        let texts: Option<Vec<&str>> = slots
            .iter()
            .map(|slot| slot.as_ref().and_then(|(_, t)| t.as_deref()))
            .collect();
        let texts = texts?;
        let mut cursor = 0;
        let mut out = Vec::with_capacity(texts.len());
        for (index, t) in texts.into_iter().enumerate() {
            let t = t.trim();
            let Some(found) = text[cursor..].find(t) else {
                return Some(Err(TextprepError::BoundaryMismatch {
                    case_id: case_id.to_string(),
                    index,
                }));
            };
            let start = cursor + found;
            let end = start + t.len();
            out.push(Sentence {
                index,
                text: t.to_string(),
                span: (start, end),
            });
            cursor = end;
        }
        Some(Ok(out))
    }
}

// ---------------------------------------------------------------------------
// heuristic backend

#[derive(Debug, Deserialize)]
struct RawRules {
    default_role: String,
    tie_order: Vec<String>,
    #[serde(default)]
    prior: Vec<RawPrior>,
    #[serde(default)]
    rule: Vec<RawRule>,
}

#[derive(Debug, Deserialize)]
struct RawPrior {
    role: String,
    from: f64,
    to: f64,
    weight: f64,
}

#[derive(Debug, Deserialize)]
struct RawRule {
    pattern: String,
    role: String,
    priority: f64,
}

#[derive(Debug, Clone)]
struct Prior {
    role: RhetoricalRole,
    from: f64,
    to: f64,
    weight: f64,
}

#[derive(Debug, Clone)]
struct Rule {
    pattern: Regex,
    role: RhetoricalRole,
    priority: f64,
}

/// Parsed heuristic rule file.
#[derive(Debug, Clone)]
pub struct RoleRules {
    default_role: RhetoricalRole,
    tie_order: Vec<RhetoricalRole>,
    priors: Vec<Prior>,
    rules: Vec<Rule>,
}

impl Default for RoleRules {
    fn default() -> Self {
        Self::parse(SHIPPED_RULES).expect("shipped rule file parses")
    }
}

impl RoleRules {
    pub fn parse(text: &str) -> Result<Self, TextprepError> {
        let raw: RawRules =
            toml::from_str(text).map_err(|e| TextprepError::Rules(e.to_string()))?;
        let role = |s: &str| s.parse::<RhetoricalRole>();
        let tie_order = raw
            .tie_order
            .iter()
            .map(|s| role(s))
            .collect::<Result<Vec<_>, _>>()?;
        for r in RhetoricalRole::ALL {
            if !tie_order.contains(&r) {
                return Err(TextprepError::Rules(format!("tie_order is missing {r}")));
            }
        }
        let priors = raw
            .prior
            .iter()
            .map(|p| {
                Ok(Prior {
                    role: role(&p.role)?,
                    from: p.from,
                    to: p.to,
                    weight: p.weight,
                })
            })
            .collect::<Result<Vec<_>, TextprepError>>()?;
        let rules = raw
            .rule
            .iter()
            .map(|r| {
                Ok(Rule {
                    pattern: Regex::new(&r.pattern).map_err(|e| {
                        TextprepError::Rules(format!("pattern {:?}: {e}", r.pattern))
                    })?,
                    role: role(&r.role)?,
                    priority: r.priority,
                })
            })
            .collect::<Result<Vec<_>, TextprepError>>()?;
        Ok(Self {
            default_role: role(&raw.default_role)?,
            tie_order,
            priors,
            rules,
        })
    }

    /// Role for a sentence at relative `position` in `[0, 1]`.
    pub fn classify_one(&self, text: &str, position: f64) -> RhetoricalRole {
        let mut scores = [0.0f64; 7];
        let slot = |r: RhetoricalRole| {
            RhetoricalRole::ALL
                .iter()
                .position(|&x| x == r)
                .unwrap_or(0)
        };
        let mut matched = false;
        for rule in &self.rules {
            if rule.pattern.is_match(text) {
                scores[slot(rule.role)] += rule.priority;
                matched = true;
            }
        }
        if !matched {
            return self.default_role;
        }
        for p in &self.priors {
            if position >= p.from && position <= p.to {
                scores[slot(p.role)] += p.weight;
            }
        }
        let mut best = self.tie_order[0];
        let mut best_score = f64::NEG_INFINITY;
        for &r in &self.tie_order {
            let s = scores[slot(r)];
            if s > best_score {
                best = r;
                best_score = s;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Default)]
pub struct HeuristicBackend {
    rules: RoleRules,
}

impl HeuristicBackend {
    pub fn new(rules: RoleRules) -> Self {
        Self { rules }
    }
}

impl RoleBackend for HeuristicBackend {
    fn id(&self) -> &str {
        "heuristic"
    }

    fn classify(
        &self,
        _case_id: &str,
        sentences: &[Sentence],
    ) -> Result<Vec<LabeledSentence>, TextprepError> {
        let n = sentences.len();
        let roles = sentences
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let position = if n <= 1 {
                    1.0
                } else {
                    i as f64 / (n - 1) as f64
                };
                self.rules.classify_one(&s.text, position)
            })
            .collect();
        Ok(label(sentences, roles, self.id()))
    }
}

// ---------------------------------------------------------------------------
// remote backend

#[derive(Serialize)]
struct RemoteRequest<'a> {
    sentences: Vec<&'a str>,
}

#[derive(Deserialize)]
struct RemoteResponse {
    roles: Vec<String>,
}

/// Client for a service answering `{"sentences": [...]}` with
/// `{"roles": [...]}`, one role per sentence.
pub struct RemoteBackend {
    url: String,
    agent: ureq::Agent,
    gate: Gate,
}

impl RemoteBackend {
    pub fn new(url: String, max_in_flight: usize, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url,
            agent,
            gate: Gate::new(max_in_flight),
        }
    }
}

impl RoleBackend for RemoteBackend {
    fn id(&self) -> &str {
        "remote"
    }

    fn classify(
        &self,
        _case_id: &str,
        sentences: &[Sentence],
    ) -> Result<Vec<LabeledSentence>, TextprepError> {
        let body = RemoteRequest {
            sentences: sentences.iter().map(|s| s.text.as_str()).collect(),
        };
        let _permit = self.gate.acquire();
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .map_err(|e| TextprepError::Remote(format!("{}: {e}", self.url)))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(TextprepError::Remote(format!(
                "{} returned HTTP {status}",
                self.url
            )));
        }
        let parsed: RemoteResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| TextprepError::Remote(format!("invalid response: {e}")))?;
        if parsed.roles.len() != sentences.len() {
            return Err(TextprepError::Remote(format!(
                "expected {} roles, got {}",
                sentences.len(),
                parsed.roles.len()
            )));
        }
        let roles = parsed
            .roles
            .iter()
            .map(|r| r.parse())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(label(sentences, roles, self.id()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::segment;

    fn sents(texts: &[&str]) -> Vec<Sentence> {
        let mut off = 0;
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let s = Sentence {
                    index: i,
                    text: t.to_string(),
                    span: (off, off + t.len()),
                };
                off += t.len() + 1;
                s
            })
            .collect()
    }

    #[test]
    fn file_backend_passthrough() {
        let labels = r#"{"case_id":"c1","sentence_index":0,"role":"Facts"}
{"case_id":"c1","sentence_index":1,"role":"RulingByPresentCourt"}"#;
        let b = FileBackend::parse(labels, "mem").unwrap();
        let out = classify_roles("c1", &sents(&["A.", "B."]), &b).unwrap();
        let roles: Vec<_> = out.iter().map(|l| l.role).collect();
        assert_eq!(
            roles,
            [RhetoricalRole::Facts, RhetoricalRole::RulingByPresentCourt]
        );
        assert!(out.iter().all(|l| l.backend_id == "file"));
    }

    #[test]
    fn file_backend_refuses_to_guess() {
        let labels = r#"{"case_id":"c1","sentence_index":0,"role":"Facts"}"#;
        let b = FileBackend::parse(labels, "mem").unwrap();
        let err = classify_roles("c1", &sents(&["A.", "B."]), &b).unwrap_err();
        assert!(
            matches!(err, TextprepError::MissingLabel { ref case_id, index: 1 } if case_id == "c1")
        );
        let err = classify_roles("c2", &sents(&["A."]), &b).unwrap_err();
        assert!(err.to_string().contains("c2"));
    }

    #[test]
    fn file_backend_rejects_unknown_role() {
        let labels = r#"{"case_id":"c1","sentence_index":0,"role":"Judgment"}"#;
        let err = FileBackend::parse(labels, "mem").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }

    #[test]
    fn file_backend_external_boundaries() {
        let doc = "First part here. Second part, with Mr. X here.";
        let labels = r#"{"case_id":"c","sentence_index":0,"role":"Facts","text":"First part here."}
{"case_id":"c","sentence_index":1,"role":"Argument","text":"Second part, with Mr. X here."}"#;
        let b = FileBackend::parse(labels, "mem").unwrap();
        let s = b.sentences_for("c", doc).unwrap().unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(&doc[s[1].span.0..s[1].span.1], s[1].text);
        assert!(b.sentences_for("other", doc).is_none());
    }

    #[test]
    fn heuristic_final_dismissal() {
        // "appeal is dismissed" hits the present-ruling pattern (4) and "with
        // costs" adds 1; the last-position prior adds 1 more. Nothing else
        // matches, so RulingByPresentCourt wins with 6.
        let doc = "The appellant was employed as a clerk. Learned counsel argued otherwise. The appeal is dismissed with costs.";
        let s = segment(doc);
        let out = HeuristicBackend::default().classify("c", &s).unwrap();
        assert_eq!(out[2].role, RhetoricalRole::RulingByPresentCourt);
        assert_eq!(out[0].role, RhetoricalRole::Facts);
        assert_eq!(out[1].role, RhetoricalRole::Argument);
    }

    #[test]
    fn heuristic_ties_follow_tie_order() {
        let rules = RoleRules::parse(
            r#"
default_role = "Facts"
tie_order = ["Statute", "Argument", "Facts", "Precedent", "RatioOfTheDecision", "RulingByLowerCourt", "RulingByPresentCourt"]
[[rule]]
pattern = "x"
role = "Argument"
priority = 1
[[rule]]
pattern = "x"
role = "Statute"
priority = 1
"#,
        )
        .unwrap();
        assert_eq!(rules.classify_one("x", 0.5), RhetoricalRole::Statute);
        assert_eq!(rules.classify_one("y", 0.5), RhetoricalRole::Facts);
    }

    #[test]
    fn rules_must_rank_every_role() {
        let err =
            RoleRules::parse("default_role = \"Facts\"\ntie_order = [\"Facts\"]\n").unwrap_err();
        assert!(err.to_string().contains("tie_order"));
    }
}
