//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde_json::Value;
use vichara_cli::{cmd_ablate, cmd_eval, cmd_run, Config};
use vichara_core::corpus::{generate_synthetic_corpus, write_jsonl, CaseRecord, FieldMap};
use vichara_core::evalx::{
    aggregate_seeds, bleu, classification_report, fleiss_kappa, rouge_l, rouge_n, RatingMatrix,
};
use vichara_core::llmgate::{LlmGate, ResponseCache, ScriptedProvider};
use vichara_core::pipeline::{
    chunk_document, parse_explanation, parse_llm_json, parse_prediction, parse_ruling, run_case,
    ChunkOptions, ChunkSource, Configuration, PipelineSettings, PromptExchange,
};
use vichara_core::prompts::{template_digest, Stage};
use vichara_core::textprep::{HeuristicBackend, Segmenter};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn synthetic(n: usize, seed: u64) -> Vec<CaseRecord> {
    generate_synthetic_corpus(n, seed)
        .into_iter()
        .map(|c| c.record)
        .collect()
}

fn write_corpus(dir: &Path, records: &[CaseRecord]) -> std::path::PathBuf {
    let path = dir.join("corpus.jsonl");
    write_jsonl(&path, records, &FieldMap::default()).unwrap();
    path
}

fn base_config(run_dir: &Path) -> Config {
    Config {
        run_dir: run_dir.display().to_string(),
        ..Config::default()
    }
}

fn end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synthetic(200, 2024);
    let path = write_corpus(tmp.path(), &corpus);
    let cfg = base_config(&tmp.path().join("run"));
    let start = Instant::now();
    let summary = cmd_run(&cfg, &path, &AtomicBool::new(false)).map_err(|e| e.to_string())?;
    let report = cmd_eval(&tmp.path().join("run"), &path, &cfg).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let acc = &report.prediction["accuracy"];
    let f1 = &report.prediction["macro_f1"];
    check(summary.seeds.len() == 5, "expected 5 seeds")?;
    check(
        summary.failed_cases() == 0,
        format!("{} failed cases", summary.failed_cases()),
    )?;
    check(
        acc.mean == 1.0 && acc.std == 0.0,
        format!("accuracy {acc:?}"),
    )?;
    check(f1.mean == 1.0 && f1.std == 0.0, format!("macro F1 {f1:?}"))?;
    let txt = fs::read_to_string(tmp.path().join("run/report.txt")).unwrap();
    check(
        txt.contains("100.00 ± 0.00"),
        "report.txt lacks 100.00 ± 0.00",
    )?;
    check(secs < 30.0, format!("took {secs:.1}s"))?;
    Ok(format!(
        "200 cases x 5 seeds, accuracy {:.3}, macro F1 {:.3}, {secs:.1}s",
        acc.mean, f1.mean
    ))
}

fn ablation() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synthetic(200, 77);
    let path = write_corpus(tmp.path(), &corpus);
    let cfg = Config {
        seeds: vec![1],
        ..base_config(&tmp.path().join("ablate"))
    };
    let out = cmd_ablate(&cfg, &path, &AtomicBool::new(false)).map_err(|e| e.to_string())?;
    check(out.runs.len() == 5, "expected five configurations")?;
    let rows = out.table.lines().filter(|l| !l.trim().is_empty()).count();
    check(
        rows == 6,
        format!("table has {rows} lines, expected header + 5"),
    )?;
    let score = |c: Configuration| {
        out.runs
            .iter()
            .find(|r| r.0 == c)
            .map(|r| r.3.prediction["accuracy"].mean)
            .unwrap()
    };
    let full = score(Configuration::Full);
    let mut detail = vec![format!("full {full:.3}")];
    for c in &Configuration::ALL[1..] {
        let s = score(*c);
        detail.push(format!("{} {s:.3}", c.name()));
        check(s < full, format!("{} scored {s} >= full {full}", c.name()))?;
    }
    let lowest = Configuration::ALL[1..]
        .iter()
        .map(|c| score(*c))
        .fold(f64::INFINITY, f64::min);
    check(
        score(Configuration::NoDecisionPoints) == lowest,
        "no_decision_points is not the lowest",
    )?;
    Ok(detail.join(", "))
}

/// Confusion-matrix oracle written independently of the library.
fn brute_force(preds: &[u8], golds: &[u8]) -> (f64, f64, f64, f64) {
    let n = preds.len();
    let correct = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    let mut ps = Vec::new();
    let mut rs = Vec::new();
    let mut fs = Vec::new();
    for c in [0u8, 1] {
        if !preds.contains(&c) && !golds.contains(&c) {
            continue;
        }
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        for i in 0..n {
            match (preds[i] == c, golds[i] == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let p = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let r = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let f = if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        };
        ps.push(p);
        rs.push(r);
        fs.push(f);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (correct as f64 / n as f64, mean(&ps), mean(&rs), mean(&fs))
}

/// Fleiss' kappa straight from the textbook definition.
fn kappa_direct(rows: &[Vec<u8>]) -> f64 {
    let n_items = rows.len() as f64;
    let n = rows[0].len() as f64;
    let mut p_i_sum = 0.0;
    let mut col = [0.0f64; 5];
    for row in rows {
        let mut agree_pairs = 0.0;
        for j in 1..=5u8 {
            let nij = row.iter().filter(|&&v| v == j).count() as f64;
            agree_pairs += nij * (nij - 1.0);
            col[(j - 1) as usize] += nij;
        }
        p_i_sum += agree_pairs / (n * (n - 1.0));
    }
    let p_bar = p_i_sum / n_items;
    let pe: f64 = col
        .iter()
        .map(|c| (c / (n_items * n)) * (c / (n_items * n)))
        .sum();
    (p_bar - pe) / (1.0 - pe)
}

fn metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for i in 0..1000 {
        let len = rng.random_range(1..=50);
        let preds: Vec<u8> = (0..len).map(|_| rng.random_range(0..2)).collect();
        let golds: Vec<u8> = (0..len).map(|_| rng.random_range(0..2)).collect();
        let r = classification_report(&preds, &golds).map_err(|e| e.to_string())?;
        let (a, p, rc, f) = brute_force(&preds, &golds);
        check(
            (r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1) == (a, p, rc, f),
            format!("classification instance {i} disagrees with oracle"),
        )?;
    }

    let close = |x: f64, y: f64| (x - y).abs() <= 1e-9;
    let cand = "The court allowed the appeal today.";
    let refr = "The court dismissed the appeal.";
    // Unigrams: 4 of 6 candidate, 4 of 5 reference.
    let r1 = rouge_n(cand, refr, 1).map_err(|e| e.to_string())?;
    check(
        close(r1.precision, 4.0 / 6.0) && close(r1.recall, 0.8) && close(r1.f1, 8.0 / 11.0),
        "rouge-1 fixture",
    )?;
    // Bigrams "the court" and "the appeal": 2 of 5, 2 of 4.
    let r2 = rouge_n(cand, refr, 2).map_err(|e| e.to_string())?;
    check(
        close(r2.precision, 0.4) && close(r2.recall, 0.5) && close(r2.f1, 4.0 / 9.0),
        "rouge-2 fixture",
    )?;
    // LCS "the court the appeal".
    let rl = rouge_l(cand, refr).map_err(|e| e.to_string())?;
    check(close(rl.f1, 8.0 / 11.0), "rouge-l fixture")?;
    let ex = rouge_n("the appeal is allowed", "the appeal is dismissed", 1).unwrap();
    check(close(ex.f1, 0.75), "rouge-1 worked example")?;
    let lcs = rouge_l("a b c d", "a c d").unwrap();
    check(
        close(lcs.recall, 1.0) && close(lcs.precision, 0.75) && close(lcs.f1, 6.0 / 7.0),
        "rouge-l worked example",
    )?;
    // Modified precisions 4/6, 2/5, then 0/4 and 0/3 smoothed to 1/5 and 1/4; no brevity penalty.
    let b = bleu(cand, refr, 4).map_err(|e| e.to_string())?;
    let expected = (4.0f64 / 6.0 * 2.0 / 5.0 * 1.0 / 5.0 * 1.0 / 4.0).powf(0.25);
    check(
        close(b, expected),
        format!("bleu fixture {b} vs {expected}"),
    )?;
    let short = bleu("one two three four", "one two three four five six", 4).unwrap();
    check(
        close(short, (1.0f64 - 6.0 / 4.0).exp()),
        "bleu brevity fixture",
    )?;

    let fixture = vec![vec![5, 5, 4], vec![3, 3, 3], vec![4, 2, 4], vec![1, 1, 2]];
    let k =
        fleiss_kappa(&RatingMatrix::new(fixture.clone()).unwrap()).map_err(|e| e.to_string())?;
    let pe = 30.0 / 144.0;
    check(close(k, (0.5 - pe) / (1.0 - pe)), "kappa hand fixture")?;
    check(close(k, kappa_direct(&fixture)), "kappa direct formula")?;
    for _ in 0..200 {
        let items = rng.random_range(2..30);
        let raters = rng.random_range(2..6);
        let rows: Vec<Vec<u8>> = (0..items)
            .map(|_| (0..raters).map(|_| rng.random_range(1..=5)).collect())
            .collect();
        if let Ok(k) = fleiss_kappa(&RatingMatrix::new(rows.clone()).unwrap()) {
            check(close(k, kappa_direct(&rows)), "kappa random instance")?;
        }
    }
    let perfect = RatingMatrix::new(vec![
        vec![1, 1, 1],
        vec![4, 4, 4],
        vec![5, 5, 5],
        vec![2, 2, 2],
    ])
    .unwrap();
    check(
        fleiss_kappa(&perfect).map_err(|e| e.to_string())? == 1.0,
        "perfect agreement is not 1.0",
    )?;
    let uniform: Vec<Vec<u8>> = (0..10_000)
        .map(|_| (0..3).map(|_| rng.random_range(1..=5)).collect())
        .collect();
    let ku = fleiss_kappa(&RatingMatrix::new(uniform).unwrap()).unwrap();
    check(ku.abs() < 0.05, format!("uniform kappa {ku}"))?;

    let seeds: Vec<(u64, f64)> = [81.2, 81.9, 81.5, 81.6, 81.3]
        .iter()
        .enumerate()
        .map(|(i, &v)| (i as u64 + 1, v))
        .collect();
    let agg = aggregate_seeds(&seeds).map_err(|e| e.to_string())?;
    check(
        (agg.mean - 81.5).abs() < 1e-3 && (agg.std - 0.274).abs() < 1e-3,
        format!("aggregate {agg:?}"),
    )?;
    Ok(format!(
        "1000 oracle instances, kappa {k:.4}, seeds {:.3} ± {:.3}",
        agg.mean, agg.std
    ))
}

fn sample_exchanges() -> Vec<PromptExchange> {
    let gate = LlmGate::new(Arc::new(ScriptedProvider), ResponseCache::memory());
    let settings = PipelineSettings::default();
    synthetic(12, 31)
        .iter()
        .flat_map(|r| {
            run_case(
                r,
                &settings,
                &gate,
                &Segmenter::default(),
                &HeuristicBackend::default(),
            )
            .exchanges
        })
        .collect()
}

fn smart_quotes(s: &str) -> String {
    let mut open = true;
    s.chars()
        .map(|c| {
            if c == '"' {
                open = !open;
                if open {
                    '\u{201d}'
                } else {
                    '\u{201c}'
                }
            } else {
                c
            }
        })
        .collect()
}

/// Replace one space inside the first string value with a raw newline.
fn embed_newline(s: &str) -> String {
    if let Some(i) = s.find("\": \"") {
        let start = i + 4;
        if let Some(end) = s[start..].find('"') {
            if let Some(sp) = s[start..start + end].find(' ') {
                let at = start + sp;
                return format!("{}\n{}", &s[..at], &s[at + 1..]);
            }
        }
    }
    s.replace(". ", ".\n\n")
}

fn perturb(s: &str, kind: usize) -> String {
    match kind {
        0 => format!("```json\n{s}\n```"),
        1 => s.replace("\n}", ",\n}").replace("\n]", ",\n]"),
        2 => smart_quotes(s),
        3 => format!("Sure, here is the requested output.\n\n{s}\n\nI hope this helps."),
        _ => embed_newline(s),
    }
}

fn parser_robustness() -> Outcome {
    let exchanges = sample_exchanges();
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let (mut ok, mut panics) = (0, 0);
    let total = 500;
    for _ in 0..total {
        let ex = &exchanges[rng.random_range(0..exchanges.len())];
        let mut text = ex.response.clone();
        let kinds = rng.random_range(1..=3);
        for _ in 0..kinds {
            text = perturb(&text, rng.random_range(0..5));
        }
        let clean = ex.response.clone();
        let stage = ex.stage.clone();
        let result = catch_unwind(AssertUnwindSafe(|| match stage.as_str() {
            "context" => {
                let want = parse_llm_json(&clean).unwrap();
                let keys = |v: &Value| {
                    v.as_object()
                        .map(|o| o.keys().cloned().collect::<BTreeSet<_>>())
                };
                parse_llm_json(&text).is_ok_and(|v| keys(&v) == keys(&want))
            }
            "decision_points" => {
                let want = parse_llm_json(&clean).unwrap();
                let len = |v: &Value| v.as_array().map(Vec::len);
                parse_llm_json(&text).is_ok_and(|v| len(&v) == len(&want))
            }
            "ruling" => parse_ruling(&text).is_some(),
            "prediction" => parse_prediction(&text) == parse_prediction(&clean),
            "explanation" => parse_explanation(&text).is_ok(),
            _ => false,
        }));
        match result {
            Ok(true) => ok += 1,
            Ok(false) => {}
            Err(_) => panics += 1,
        }
    }
    let rate = ok as f64 / total as f64;
    check(panics == 0, format!("{panics} panics"))?;
    check(rate >= 0.95, format!("parse rate {:.1}%", rate * 100.0))?;
    check(
        parse_prediction("Prediction: 0\nOn reflection...\nPrediction: 1") == Some(1),
        "last match",
    )?;
    check(
        parse_prediction("The appeal should fail.").is_none(),
        "missing match",
    )?;
    check(
        parse_prediction("prediction: 1\n**Prediction:** 0") == Some(0),
        "multi match",
    )?;
    Ok(format!(
        "{ok}/{total} parsed ({:.1}%), {panics} panics",
        rate * 100.0
    ))
}

fn chunker() -> Outcome {
    let bullet_line = Regex::new(r"(?m)^(?:\d+\.|\([a-z]+\)) \S").unwrap();
    let seg = Segmenter::default();
    let opts = ChunkOptions::default();
    let mut bullet_docs = 0;
    for case in generate_synthetic_corpus(100, 4242) {
        let doc = &case.record.text;
        let sentences = seg.segment(doc);
        let chunks = chunk_document(doc, &sentences, &opts);
        let mut owner = vec![0u8; doc.len()];
        for c in &chunks {
            for o in &mut owner[c.span.0..c.span.1] {
                *o += 1;
            }
            if c.source == ChunkSource::TokenWindow && c.token_count > 1000 {
                let inside = sentences
                    .iter()
                    .filter(|s| s.span.0 >= c.span.0 && s.span.1 <= c.span.1)
                    .count();
                check(
                    inside == 1,
                    format!("{}: oversized multi-sentence chunk", case.record.case_id),
                )?;
            }
        }
        for (i, ch) in doc.char_indices() {
            if !ch.is_whitespace() && owner[i] != 1 {
                return Err(format!(
                    "{}: byte {i} covered {} times",
                    case.record.case_id, owner[i]
                ));
            }
        }
        let items = bullet_line.find_iter(doc).count();
        let groups = chunks
            .iter()
            .filter(|c| c.source == ChunkSource::BulletGroup)
            .count();
        check(
            items == groups,
            format!(
                "{}: {items} list items but {groups} bullet chunks",
                case.record.case_id
            ),
        )?;
        if items > 0 {
            bullet_docs += 1;
        }
    }
    check(bullet_docs > 0, "no bullet documents in the sample")?;
    Ok(format!("100 documents, {bullet_docs} with lists"))
}

const FROZEN_DIGESTS: [(Stage, &str); 5] = [
    (
        Stage::Context,
        "669a3da2a017a4b62a8d9851e8925e5fb6c1cdd7a757f8c811ffc45c196ea055",
    ),
    (
        Stage::DecisionPoints,
        "3f637f16e4a4564a5f505334be0cc4d2a3ee39c133bdeaaec1f4f5865e8eedbf",
    ),
    (
        Stage::Ruling,
        "14f0f597da1fe930adbd89dab3db6be9ca9d1c097f71d8fabec3f8f3b10d4bc8",
    ),
    (
        Stage::Prediction,
        "158f21d9c3b2ef8280e27dfa803065f3e93b727d575b1bb5b9e4d5e2207e8461",
    ),
    (
        Stage::Explanation,
        "b4a197758a49e27b7f3f2a49701e16198bc37748efe6144d2b17d137eb5305b4",
    ),
];

fn prompt_fidelity() -> Outcome {
    for (stage, digest) in FROZEN_DIGESTS {
        check(
            template_digest(stage) == digest,
            format!("{stage} template digest changed"),
        )?;
    }
    let exchanges = sample_exchanges();
    let first = |stage: &str| {
        exchanges
            .iter()
            .find(|e| e.stage == stage)
            .map(|e| e.prompt.clone())
            .unwrap()
    };
    check(
        first("prediction").contains("Prediction: <0 or 1>"),
        "prediction anchor",
    )?;
    check(first("ruling").contains("Final Ruling:"), "ruling anchor")?;
    let explanation = first("explanation");
    for header in [
        "Facts of the Case",
        "Legal Issue(s) Presented",
        "Applicable Law and Precedents",
        "Analysis / Reasoning",
        "Predicted Conclusion",
    ] {
        check(
            explanation.contains(header),
            format!("explanation prompt lacks {header:?}"),
        )?;
    }
    check(
        first("decision_points").contains("Do NOT include triple backticks"),
        "decision point anchor",
    )?;
    Ok("5 digests frozen, anchors present".into())
}

/// A corpus in a foreign schema: other key names and string labels.
fn write_foreign_corpus(path: &Path, records: &[CaseRecord]) {
    let mut out = String::new();
    for r in records {
        let label = if r.gold_label == Some(1) {
            "Granted"
        } else {
            "Dismissed"
        };
        let v = serde_json::json!({"uid": r.case_id, "judgment_text": r.text, "outcome": label});
        out.push_str(&v.to_string());
        out.push('\n');
    }
    fs::write(path, out).unwrap();
}

fn protocol() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("user.jsonl");
    write_foreign_corpus(&corpus, &synthetic(24, 5150));
    let fields = |c: Config| Config {
        id_field: "uid".into(),
        text_field: "judgment_text".into(),
        label_field: "outcome".into(),
        ..c
    };
    let fixtures = tmp.path().join("fixtures");
    let record = fields(Config {
        record_fixtures: fixtures.display().to_string(),
        ..base_config(&tmp.path().join("recorded"))
    });
    let cancel = AtomicBool::new(false);
    cmd_run(&record, &corpus, &cancel).map_err(|e| e.to_string())?;

    let replay = fields(Config {
        provider: "fixture".into(),
        model: "scripted".into(),
        fixture_dir: fixtures.display().to_string(),
        ..base_config(&tmp.path().join("replayed"))
    });
    let summary = cmd_run(&replay, &corpus, &cancel).map_err(|e| e.to_string())?;
    check(
        summary.failed_cases() == 0,
        format!("{} failed cases on replay", summary.failed_cases()),
    )?;
    let report =
        cmd_eval(&tmp.path().join("replayed"), &corpus, &replay).map_err(|e| e.to_string())?;
    check(
        report.seeds.len() == 5,
        format!("{} seeds evaluated", report.seeds.len()),
    )?;
    for m in ["accuracy", "macro_precision", "macro_recall", "macro_f1"] {
        let agg = &report.prediction[m];
        check(
            agg.per_seed.len() == 5,
            format!("{m} aggregated over {} seeds", agg.per_seed.len()),
        )?;
    }
    let txt = fs::read_to_string(tmp.path().join("replayed/report.txt")).unwrap();
    check(txt.contains(" ± "), "report lacks mean ± std")?;
    let m =
        vichara_core::RunManifest::load(&tmp.path().join("replayed/seed-3/manifest.json")).unwrap();
    check(m.provider_id == "fixture", "manifest provider id")?;
    let a =
        fs::read_to_string(tmp.path().join("recorded/seed-3/syn-0007/explanation.json")).unwrap();
    let b =
        fs::read_to_string(tmp.path().join("replayed/seed-3/syn-0007/explanation.json")).unwrap();
    check(a == b, "replayed artifacts differ from recorded ones")?;
    Ok(format!(
        "fixture provider, 5 seeds, macro F1 {}",
        report.prediction["macro_f1"].display_pct()
    ))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("end-to-end oracle", end_to_end),
        ("ablation sensitivity", ablation),
        ("metric oracles", metrics),
        ("parser robustness", parser_robustness),
        ("chunker invariants", chunker),
        ("prompt fidelity", prompt_fidelity),
        ("protocol fidelity", protocol),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let result = catch_unwind(f).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {name}: {reason}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
