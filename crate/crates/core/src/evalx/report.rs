//! Scoring a run directory against a gold corpus.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::classify::{
    aggregate_seeds_with, classification_report, ClassificationReport, Deviation, SeedAggregate,
};
use super::lexical::{bleu, rouge_l, rouge_n};
use super::EvalError;
use crate::corpus::{case_dir_name, CaseRecord, RunManifest};
use crate::json::{to_canonical_string, write_atomic};
use crate::pipeline::{Configuration, Explanation, Prediction};

/// Explanation metrics that need external models and are left out.
pub const NOT_COMPUTED: [&str; 3] = ["METEOR", "BERTScore", "BLANC"];

const PREDICTION_METRICS: [&str; 4] = ["accuracy", "macro_precision", "macro_recall", "macro_f1"];
const LEXICAL_METRICS: [&str; 4] = ["rouge_1", "rouge_2", "rouge_l", "bleu"];

/// Mean F1 (BLEU score for `bleu`) over the cases that have a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalScores {
    pub cases: usize,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEval {
    pub seed: u64,
    pub status: String,
    /// Cases with both a prediction and a gold label.
    pub evaluated: usize,
    pub failed: usize,
    /// Gold cases with neither a prediction nor a failure record.
    pub missing: usize,
    pub classification: ClassificationReport,
    pub lexical: Option<LexicalScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_dir: String,
    pub ablation_flags: Vec<String>,
    pub seeds: Vec<SeedEval>,
    pub failed_cases: usize,
    pub prediction: BTreeMap<String, SeedAggregate>,
    pub lexical: Option<BTreeMap<String, SeedAggregate>>,
    pub lexical_notice: Option<String>,
    pub not_computed: Vec<String>,
    pub deviation: Deviation,
}

impl EvalReport {
    pub fn metric(&self, name: &str) -> Option<&SeedAggregate> {
        self.prediction.get(name)
    }
}

fn run_err(path: &Path, message: impl ToString) -> EvalError {
    EvalError::Run {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| run_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| run_err(path, e))
}

/// Seed directories of a run: either `run_dir` itself when it holds a
/// manifest, or every `seed-*` child that does.
fn seed_dirs(run_dir: &Path) -> Result<Vec<(RunManifest, PathBuf)>, EvalError> {
    if !run_dir.is_dir() {
        return Err(run_err(run_dir, "not a directory"));
    }
    let load =
        |dir: &Path| RunManifest::load(&dir.join("manifest.json")).map_err(|e| run_err(dir, e));
    if run_dir.join("manifest.json").is_file() {
        return Ok(vec![(load(run_dir)?, run_dir.to_path_buf())]);
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(run_dir).map_err(|e| run_err(run_dir, e))? {
        let path = entry.map_err(|e| run_err(run_dir, e))?.path();
        let is_seed = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("seed-"));
        if is_seed && path.join("manifest.json").is_file() {
            out.push((load(&path)?, path));
        }
    }
    if out.is_empty() {
        return Err(run_err(run_dir, "no run manifest found"));
    }
    out.sort_by_key(|(m, _)| m.seed);
    Ok(out)
}

fn lexical_for(pairs: &[(Explanation, &str)]) -> Result<Option<LexicalScores>, EvalError> {
    if pairs.is_empty() {
        return Ok(None);
    }
    let mut sums: BTreeMap<String, f64> = LEXICAL_METRICS
        .iter()
        .map(|m| (m.to_string(), 0.0))
        .collect();
    for (exp, reference) in pairs {
        let cand = exp.to_text();
        let values = [
            rouge_n(&cand, reference, 1)?.f1,
            rouge_n(&cand, reference, 2)?.f1,
            rouge_l(&cand, reference)?.f1,
            bleu(&cand, reference, 4)?,
        ];
        for (m, v) in LEXICAL_METRICS.iter().zip(values) {
            *sums.get_mut(*m).expect("known metric") += v;
        }
    }
    let n = pairs.len() as f64;
    Ok(Some(LexicalScores {
        cases: pairs.len(),
        scores: sums.into_iter().map(|(k, v)| (k, v / n)).collect(),
    }))
}

fn eval_seed(
    manifest: &RunManifest,
    dir: &Path,
    gold: &[CaseRecord],
) -> Result<Option<SeedEval>, EvalError> {
    let (mut preds, mut golds) = (Vec::new(), Vec::new());
    let (mut failed, mut missing) = (0, 0);
    let mut pairs = Vec::new();
    for rec in gold {
        let case_dir = dir.join(case_dir_name(&rec.case_id));
        let pred_path = case_dir.join("prediction.json");
        if case_dir.join("failure.json").is_file() {
            failed += 1;
            continue;
        }
        if !pred_path.is_file() {
            missing += 1;
            continue;
        }
        let Some(label) = rec.gold_label else {
            continue;
        };
        let pred: Prediction = read_json(&pred_path)?;
        preds.push(pred.value);
        golds.push(label);
        let exp_path = case_dir.join("explanation.json");
        if let Some(reference) = rec
            .reference_explanation
            .as_deref()
            .filter(|r| !r.trim().is_empty())
        {
            if exp_path.is_file() {
                pairs.push((read_json::<Explanation>(&exp_path)?, reference));
            }
        }
    }
    if preds.is_empty() {
        return Ok(None);
    }
    Ok(Some(SeedEval {
        seed: manifest.seed,
        status: serde_json::to_value(manifest.status)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
        evaluated: preds.len(),
        failed,
        missing,
        classification: classification_report(&preds, &golds)?,
        lexical: lexical_for(&pairs)?,
    }))
}

/// Join the run's predictions to gold labels, score every seed and
/// aggregate across seeds.
pub fn eval_run(run_dir: &Path, gold: &[CaseRecord]) -> Result<EvalReport, EvalError> {
    eval_run_with(run_dir, gold, Deviation::Sample)
}

pub fn eval_run_with(
    run_dir: &Path,
    gold: &[CaseRecord],
    deviation: Deviation,
) -> Result<EvalReport, EvalError> {
    let aggregate_seeds = |v: &[(u64, f64)]| aggregate_seeds_with(v, deviation);
    let dirs = seed_dirs(run_dir)?;
    let mut seeds = Vec::new();
    for (manifest, dir) in &dirs {
        if let Some(s) = eval_seed(manifest, dir, gold)? {
            seeds.push(s);
        }
    }
    if seeds.is_empty() {
        return Err(EvalError::NoOverlap);
    }
    let agg = |f: &dyn Fn(&SeedEval) -> f64| {
        aggregate_seeds(&seeds.iter().map(|s| (s.seed, f(s))).collect::<Vec<_>>())
    };
    let mut prediction = BTreeMap::new();
    prediction.insert("accuracy".to_string(), agg(&|s| s.classification.accuracy)?);
    prediction.insert(
        "macro_precision".to_string(),
        agg(&|s| s.classification.macro_precision)?,
    );
    prediction.insert(
        "macro_recall".to_string(),
        agg(&|s| s.classification.macro_recall)?,
    );
    prediction.insert("macro_f1".to_string(), agg(&|s| s.classification.macro_f1)?);

    let with_lexical: Vec<&SeedEval> = seeds.iter().filter(|s| s.lexical.is_some()).collect();
    let (lexical, lexical_notice) = if with_lexical.is_empty() {
        (
            None,
            Some("gold corpus has no reference explanations; lexical metrics omitted".to_string()),
        )
    } else {
        let mut out = BTreeMap::new();
        for m in LEXICAL_METRICS {
            let values: Vec<(u64, f64)> = with_lexical
                .iter()
                .map(|s| (s.seed, s.lexical.as_ref().expect("filtered").scores[m]))
                .collect();
            out.insert(m.to_string(), aggregate_seeds(&values)?);
        }
        (Some(out), None)
    };
    let flags = dirs
        .first()
        .map(|(m, _)| m.ablation_flags.iter().cloned().collect())
        .unwrap_or_default();
    Ok(EvalReport {
        run_dir: run_dir.display().to_string(),
        ablation_flags: flags,
        failed_cases: seeds.iter().map(|s| s.failed).sum(),
        seeds,
        prediction,
        lexical,
        lexical_notice,
        not_computed: NOT_COMPUTED.iter().map(|s| s.to_string()).collect(),
        deviation,
    })
}

/// Left-aligned columns separated by two spaces.
fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(i, cell)| format!("{cell:<w$}", w = widths[i]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub fn render_text(report: &EvalReport) -> String {
    let seeds: Vec<String> = report.seeds.iter().map(|s| s.seed.to_string()).collect();
    let mut out = format!("Run: {}\n", report.run_dir);
    if !report.ablation_flags.is_empty() {
        out += &format!("Ablation: {}\n", report.ablation_flags.join(", "));
    }
    out += &format!(
        "Seeds: {}  Cases evaluated: {}  Failed cases: {}\n",
        seeds.join(", "),
        report
            .seeds
            .iter()
            .map(|s| s.evaluated.to_string())
            .collect::<Vec<_>>()
            .join("/"),
        report.failed_cases
    );
    let missing: usize = report.seeds.iter().map(|s| s.missing).sum();
    if missing > 0 {
        out += &format!("Missing cases: {missing}\n");
    }

    out += &format!(
        "\nJudgment prediction (mean ± std over {} seed(s), %)\n",
        report.seeds.len()
    );
    let header = ["Accuracy", "Macro Precision", "Macro Recall", "Macro F1"];
    let values = PREDICTION_METRICS
        .iter()
        .map(|m| report.prediction[*m].display_pct())
        .collect();
    out += &table(&[header.iter().map(|s| s.to_string()).collect(), values]);

    out += "\nExplanation quality (mean ± std, %)\n";
    let mut header: Vec<String> = ["ROUGE-1", "ROUGE-2", "ROUGE-L", "BLEU"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(NOT_COMPUTED.iter().map(|s| s.to_string()));
    let mut values: Vec<String> = match &report.lexical {
        Some(lex) => LEXICAL_METRICS
            .iter()
            .map(|m| lex[*m].display_pct())
            .collect(),
        None => vec!["-".to_string(); LEXICAL_METRICS.len()],
    };
    values.extend(NOT_COMPUTED.iter().map(|_| "not computed".to_string()));
    out += &table(&[header, values]);
    if let Some(n) = &report.lexical_notice {
        out += &format!("Note: {n}\n");
    }
    out
}

/// Write `report.json` and `report.txt` into `dir`.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<(PathBuf, PathBuf), EvalError> {
    let json_path = dir.join("report.json");
    let txt_path = dir.join("report.txt");
    let json = to_canonical_string(report).expect("report serializes");
    write_atomic(&json_path, json.as_bytes()).map_err(|e| run_err(&json_path, e))?;
    write_atomic(&txt_path, render_text(report).as_bytes()).map_err(|e| run_err(&txt_path, e))?;
    Ok((json_path, txt_path))
}

/// Comparison table over ablation configurations, rows in the fixed
/// reporting order whatever order they are given in.
pub fn render_ablation_table(rows: &[(Configuration, EvalReport)]) -> String {
    let by_config: HashMap<Configuration, &EvalReport> =
        rows.iter().map(|(c, r)| (*c, r)).collect();
    let mut cells = vec![[
        "Configuration",
        "Accuracy",
        "Macro F1",
        "Clarity",
        "Linking",
        "Usefulness",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect::<Vec<_>>()];
    for config in Configuration::ALL {
        let Some(r) = by_config.get(&config) else {
            continue;
        };
        cells.push(vec![
            config.label().to_string(),
            r.prediction["accuracy"].display_pct(),
            r.prediction["macro_f1"].display_pct(),
            "not rated".into(),
            "not rated".into(),
            "not rated".into(),
        ]);
    }
    table(&cells)
}
