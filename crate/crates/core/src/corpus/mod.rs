//! Case records, JSONL ingestion, synthetic corpora and run artifacts on disk.

pub mod markers;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub use synthetic::{generate_synthetic_corpus, planted_label, SyntheticCase, TrapKind};

use crate::json::{sha256_hex, to_canonical_line, to_canonical_string, write_atomic};
use crate::pipeline::RunArtifacts;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub text: String,
    /// 1 = appeal granted, 0 = dismissed.
    pub gold_label: Option<u8>,
    pub reference_explanation: Option<String>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: malformed JSON: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate case id {id:?}")]
    DuplicateId { id: String, line: usize },
    #[error("line {line}: required field {field:?} is missing or empty")]
    MissingField { line: usize, field: String },
    #[error("line {line}: unrecognised label {value}")]
    BadLabel { line: usize, value: String },
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Maps dataset keys onto record fields and string labels onto 0/1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMap {
    pub id: String,
    pub text: String,
    pub label: String,
    pub explanation: String,
    /// Lower-cased label strings and their numeric value.
    pub label_map: BTreeMap<String, u8>,
}

impl Default for FieldMap {
    fn default() -> Self {
        let label_map = [
            ("1", 1),
            ("granted", 1),
            ("allowed", 1),
            ("accepted", 1),
            ("0", 0),
            ("dismissed", 0),
            ("rejected", 0),
            ("denied", 0),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            id: "id".into(),
            text: "text".into(),
            label: "label".into(),
            explanation: "explanation".into(),
            label_map,
        }
    }
}

impl FieldMap {
    fn label_of(&self, v: &Value, line: usize) -> Result<Option<u8>, CorpusError> {
        let bad = || CorpusError::BadLabel {
            line,
            value: v.to_string(),
        };
        match v {
            Value::Null => Ok(None),
            Value::Number(n) => match n.as_u64() {
                Some(x @ (0 | 1)) => Ok(Some(x as u8)),
                _ => Err(bad()),
            },
            Value::Bool(b) => Ok(Some(u8::from(*b))),
            Value::String(s) => self
                .label_map
                .get(&s.trim().to_lowercase())
                .copied()
                .map(Some)
                .ok_or_else(bad),
            _ => Err(bad()),
        }
    }
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

pub fn ingest_jsonl(path: &Path, map: &FieldMap) -> Result<Vec<CaseRecord>, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    ingest_jsonl_str(&text, map)
}

/// Parse JSONL text; blank lines are skipped, line numbers are 1-based.
pub fn ingest_jsonl_str(text: &str, map: &FieldMap) -> Result<Vec<CaseRecord>, CorpusError> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let obj: Map<String, Value> =
            serde_json::from_str(raw).map_err(|e| CorpusError::Malformed {
                line,
                message: e.to_string(),
            })?;
        let missing = |field: &str| CorpusError::MissingField {
            line,
            field: field.to_string(),
        };
        let case_id = obj
            .get(&map.id)
            .and_then(scalar_text)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| missing(&map.id))?;
        let text = obj
            .get(&map.text)
            .and_then(Value::as_str)
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| missing(&map.text))?
            .to_string();
        let gold_label = match obj.get(&map.label) {
            Some(v) => map.label_of(v, line)?,
            None => None,
        };
        let reference_explanation = obj
            .get(&map.explanation)
            .and_then(Value::as_str)
            .map(str::to_string);
        if seen.insert(case_id.clone(), line).is_some() {
            return Err(CorpusError::DuplicateId { id: case_id, line });
        }
        out.push(CaseRecord {
            case_id,
            text,
            gold_label,
            reference_explanation,
        });
    }
    Ok(out)
}

/// Serialize records as JSONL under the mapped keys; absent optional
/// fields are omitted.
pub fn write_jsonl_string(records: &[CaseRecord], map: &FieldMap) -> String {
    let mut out = String::new();
    for r in records {
        let mut obj = Map::new();
        obj.insert(map.id.clone(), Value::String(r.case_id.clone()));
        obj.insert(map.text.clone(), Value::String(r.text.clone()));
        if let Some(l) = r.gold_label {
            obj.insert(map.label.clone(), Value::from(l));
        }
        if let Some(e) = &r.reference_explanation {
            obj.insert(map.explanation.clone(), Value::String(e.clone()));
        }
        out.push_str(&to_canonical_line(&Value::Object(obj)).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(path: &Path, records: &[CaseRecord], map: &FieldMap) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    write_atomic(path, write_jsonl_string(records, map).as_bytes()).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Interrupted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub seed: u64,
    pub provider_id: String,
    pub model_id: String,
    pub config_digest: String,
    /// Names of disabled stages; empty for the full configuration.
    pub ablation_flags: BTreeSet<String>,
    pub prompt_digests: BTreeMap<String, String>,
    pub status: RunStatus,
    pub cases_total: usize,
    pub cases_completed: usize,
    pub cases_failed: usize,
    pub cases_skipped: usize,
    pub failed_cases: Vec<String>,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text)
            .map_err(|e| CorpusError::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let text = to_canonical_string(self).expect("manifest serializes");
        write_atomic(path, text.as_bytes()).map_err(io_err(path))
    }
}

/// Digest of a configuration value. Object keys are sorted before hashing,
/// so the digest does not depend on key order.
pub fn config_digest<T: Serialize + ?Sized>(config: &T) -> String {
    let value = serde_json::to_value(config).expect("config serializes");
    sha256_hex(to_canonical_string(&value).expect("value serializes"))
}

/// File-system-safe directory name for a case id. Ids that need changing
/// get a short digest suffix so distinct ids never collide.
pub fn case_dir_name(case_id: &str) -> String {
    let clean: String = case_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if clean == case_id && !clean.starts_with('.') {
        clean
    } else {
        format!(
            "{}-{}",
            clean.trim_start_matches('.'),
            &sha256_hex(case_id)[..8]
        )
    }
}

pub const ARTIFACT_FILES: [&str; 6] = [
    "context.json",
    "decision_points.json",
    "ruling.json",
    "prediction.json",
    "explanation.json",
    "warnings.json",
];

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CorpusError> {
    let text = to_canonical_string(value).expect("artifact serializes");
    write_atomic(path, text.as_bytes()).map_err(io_err(path))
}

fn write_or_remove<T: Serialize>(path: &Path, value: Option<&T>) -> Result<(), CorpusError> {
    match value {
        Some(v) => write_json(path, v),
        None => match fs::remove_file(path) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(io_err(path)(e)),
            _ => Ok(()),
        },
    }
}

/// Write one JSON file per stage output under `<run_dir>/<case dir>/`.
/// Outputs of disabled stages are not written (and stale copies removed).
pub fn persist_artifacts(
    run_dir: &Path,
    case_id: &str,
    artifacts: &RunArtifacts,
) -> Result<PathBuf, CorpusError> {
    let dir = run_dir.join(case_dir_name(case_id));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_or_remove(&dir.join("context.json"), artifacts.context.as_ref())?;
    write_or_remove(
        &dir.join("decision_points.json"),
        artifacts.decision_points.as_ref(),
    )?;
    write_or_remove(&dir.join("ruling.json"), artifacts.ruling.as_ref())?;
    write_json(&dir.join("prediction.json"), &artifacts.prediction)?;
    write_or_remove(
        &dir.join("explanation.json"),
        artifacts.explanation.as_ref(),
    )?;
    write_json(&dir.join("warnings.json"), &artifacts.warnings)?;
    write_or_remove::<()>(&dir.join("failure.json"), None)?;
    Ok(dir)
}

/// Record a failed case as `failure.json`, replacing any earlier outputs.
pub fn persist_failure<T: Serialize>(
    run_dir: &Path,
    case_id: &str,
    failure: &T,
) -> Result<PathBuf, CorpusError> {
    let dir = run_dir.join(case_dir_name(case_id));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for name in ARTIFACT_FILES {
        write_or_remove::<()>(&dir.join(name), None)?;
    }
    write_json(&dir.join("failure.json"), failure)?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{CaseContext, Prediction};

    #[test]
    fn ingest_identity_map() {
        let recs = ingest_jsonl_str(
            "{\"id\":\"c1\",\"text\":\"...\",\"label\":1}\n{\"id\":\"c2\",\"text\":\"x\"}\n",
            &FieldMap::default(),
        )
        .unwrap();
        assert_eq!(recs[0].case_id, "c1");
        assert_eq!(recs[0].gold_label, Some(1));
        assert_eq!(recs[1].gold_label, None);
        assert_eq!(recs[1].reference_explanation, None);
    }

    #[test]
    fn duplicate_id_names_line() {
        let err = ingest_jsonl_str(
            "{\"id\":\"c1\",\"text\":\"a\"}\n{\"id\":\"c1\",\"text\":\"b\"}\n",
            &FieldMap::default(),
        )
        .unwrap_err();
        assert!(
            matches!(&err, CorpusError::DuplicateId { id, line: 2 } if id == "c1"),
            "{err}"
        );
    }

    #[test]
    fn malformed_and_missing_text() {
        let err = ingest_jsonl_str(
            "{\"id\":\"a\",\"text\":\"t\"}\n{oops\n",
            &FieldMap::default(),
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 2, .. }));
        let err = ingest_jsonl_str("{\"id\":\"a\"}\n", &FieldMap::default()).unwrap_err();
        assert!(matches!(err, CorpusError::MissingField { line: 1, .. }));
    }

    #[test]
    fn mapped_keys_and_string_labels() {
        let map = FieldMap {
            id: "name".into(),
            text: "input".into(),
            label: "decision".into(),
            explanation: "expl".into(),
            ..FieldMap::default()
        };
        let recs = ingest_jsonl_str(
            "{\"name\":7,\"input\":\"t\",\"decision\":\"Dismissed\",\"expl\":\"e\"}",
            &map,
        )
        .unwrap();
        assert_eq!(recs[0].case_id, "7");
        assert_eq!(recs[0].gold_label, Some(0));
        assert_eq!(recs[0].reference_explanation.as_deref(), Some("e"));
        let err = ingest_jsonl_str(
            "{\"name\":\"a\",\"input\":\"t\",\"decision\":\"Partly\"}",
            &map,
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::BadLabel { .. }));
    }

    #[test]
    fn config_digest_ignores_key_order() {
        let a: Value = serde_json::from_str("{\"a\":1,\"b\":{\"x\":1,\"y\":2}}").unwrap();
        let b: Value = serde_json::from_str("{\"b\":{\"y\":2,\"x\":1},\"a\":1}").unwrap();
        assert_eq!(config_digest(&a), config_digest(&b));
    }

    #[test]
    fn case_dir_names() {
        assert_eq!(case_dir_name("c1"), "c1");
        assert_ne!(case_dir_name("a/b"), case_dir_name("a_b"));
        assert!(!case_dir_name("../x").contains('/'));
        assert!(!case_dir_name("..").starts_with('.'));
    }

    fn artifacts() -> RunArtifacts {
        RunArtifacts {
            context: Some(CaseContext::default()),
            decision_points: Some(Vec::new()),
            ruling: None,
            prediction: Prediction::GRANTED,
            explanation: None,
            warnings: vec!["w".into()],
        }
    }

    #[test]
    fn persist_layout_and_determinism() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let da = persist_artifacts(a.path(), "c1", &artifacts()).unwrap();
        let db = persist_artifacts(b.path(), "c1", &artifacts()).unwrap();
        for name in [
            "context.json",
            "decision_points.json",
            "prediction.json",
            "warnings.json",
        ] {
            assert_eq!(
                fs::read(da.join(name)).unwrap(),
                fs::read(db.join(name)).unwrap()
            );
        }
        assert!(!da.join("ruling.json").exists());
    }

    #[test]
    fn unwritable_dir_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = persist_artifacts(&blocker, "c1", &artifacts()).unwrap_err();
        assert!(err.to_string().contains("file"), "{err}");
    }
}
