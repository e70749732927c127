//! Running a corpus over several seeds with a bounded worker pool.
//!
//! Layout of a run directory:
//!
//! ```text
//! <run_dir>/seed-<k>/manifest.json
//! <run_dir>/seed-<k>/<case dir>/{context,decision_points,ruling,prediction,explanation,warnings}.json
//! <run_dir>/seed-<k>/<case dir>/failure.json        (failed cases only)
//! <run_dir>/seed-<k>/<case dir>/prompts/NN-<stage>.{prompt,response}.txt   (with dump_prompts)
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::Utc;
use thiserror::Error;

use crate::corpus::{
    case_dir_name, persist_artifacts, persist_failure, CaseRecord, CorpusError, RunManifest,
    RunStatus,
};
use crate::json::write_atomic;
use crate::llmgate::LlmGate;
use crate::pipeline::{run_case, CaseOutcome, PipelineSettings, PromptExchange};
use crate::prompts::all_digests;
use crate::textprep::{RoleBackend, Segmenter};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub run_dir: PathBuf,
    pub seeds: Vec<u64>,
    /// The per-seed value of `settings.seed` is overwritten.
    pub settings: PipelineSettings,
    pub workers: usize,
    pub dump_prompts: bool,
    pub config_digest: String,
}

#[derive(Debug, Clone)]
pub struct SeedSummary {
    pub seed: u64,
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub seeds: Vec<SeedSummary>,
}

impl RunSummary {
    pub fn failed_cases(&self) -> usize {
        self.seeds.iter().map(|s| s.manifest.cases_failed).sum()
    }

    pub fn interrupted(&self) -> bool {
        self.seeds
            .iter()
            .any(|s| s.manifest.status == RunStatus::Interrupted)
    }
}

pub fn seed_dir(run_dir: &Path, seed: u64) -> PathBuf {
    run_dir.join(format!("seed-{seed}"))
}

fn dump_exchanges(case_dir: &Path, exchanges: &[PromptExchange]) -> Result<(), RunError> {
    let dir = case_dir.join("prompts");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (i, ex) in exchanges.iter().enumerate() {
        let stem = format!("{:02}-{}", i + 1, ex.stage);
        let p = dir.join(format!("{stem}.prompt.txt"));
        write_atomic(&p, ex.prompt.as_bytes()).map_err(io_err(&p))?;
        let r = dir.join(format!("{stem}.response.txt"));
        write_atomic(&r, ex.response.as_bytes()).map_err(io_err(&r))?;
    }
    Ok(())
}

fn persist(dir: &Path, outcome: &CaseOutcome, dump_prompts: bool) -> Result<bool, RunError> {
    let case_dir = match &outcome.result {
        Ok(artifacts) => persist_artifacts(dir, &outcome.case_id, artifacts)?,
        Err(failure) => persist_failure(dir, &outcome.case_id, failure)?,
    };
    if dump_prompts {
        dump_exchanges(&case_dir, &outcome.exchanges)?;
    }
    Ok(outcome.result.is_ok())
}

#[derive(Default)]
struct Tally {
    completed: usize,
    failed: Vec<String>,
    error: Option<RunError>,
}

/// Run one seed. Cases are handed out in corpus order; once `cancel` is
/// set no new case starts, in-flight cases finish and the manifest is
/// marked interrupted.
pub fn run_seed(
    records: &[CaseRecord],
    opts: &RunOptions,
    seed: u64,
    gate: &LlmGate,
    segmenter: &Segmenter,
    roles: &dyn RoleBackend,
    cancel: &AtomicBool,
) -> Result<SeedSummary, RunError> {
    let dir = seed_dir(&opts.run_dir, seed);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let settings = PipelineSettings {
        seed,
        ..opts.settings.clone()
    };
    let mut manifest = RunManifest {
        run_id: format!(
            "{}-seed-{seed}",
            &opts.config_digest[..opts.config_digest.len().min(12)]
        ),
        seed,
        provider_id: gate.provider_id().to_string(),
        model_id: settings.model_id.clone(),
        config_digest: opts.config_digest.clone(),
        ablation_flags: settings
            .ablation
            .iter()
            .map(|a| a.name().to_string())
            .collect::<BTreeSet<_>>(),
        prompt_digests: all_digests(),
        status: RunStatus::Running,
        cases_total: records.len(),
        cases_completed: 0,
        cases_failed: 0,
        cases_skipped: 0,
        failed_cases: Vec::new(),
        started_at: Utc::now(),
        finished_at: None,
    };
    let manifest_path = dir.join("manifest.json");
    manifest.save(&manifest_path)?;

    let next = AtomicUsize::new(0);
    let tally = Mutex::new(Tally::default());
    let workers = opts.workers.clamp(1, records.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if cancel.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(record) = records.get(i) else { break };
                let outcome = run_case(record, &settings, gate, segmenter, roles);
                let saved = persist(&dir, &outcome, opts.dump_prompts);
                let mut t = tally.lock().expect("tally lock");
                match saved {
                    Ok(true) => t.completed += 1,
                    Ok(false) => t.failed.push(record.case_id.clone()),
                    Err(e) => {
                        t.error.get_or_insert(e);
                        cancel.store(true, Ordering::SeqCst);
                    }
                }
            });
        }
    });
    let mut tally = tally.into_inner().expect("tally lock");
    if let Some(e) = tally.error.take() {
        return Err(e);
    }
    // Report failures in corpus order whatever order the workers finished in.
    let order: std::collections::HashMap<&str, usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.case_id.as_str(), i))
        .collect();
    tally.failed.sort_by_key(|id| order[id.as_str()]);

    manifest.cases_completed = tally.completed;
    manifest.cases_failed = tally.failed.len();
    manifest.cases_skipped = records.len() - tally.completed - tally.failed.len();
    manifest.failed_cases = tally.failed;
    manifest.status = if manifest.cases_skipped > 0 {
        RunStatus::Interrupted
    } else {
        RunStatus::Complete
    };
    manifest.finished_at = Some(Utc::now());
    manifest.save(&manifest_path)?;
    Ok(SeedSummary {
        seed,
        dir,
        manifest,
    })
}

/// Run every seed in order. Seeds not started before cancellation get no
/// directory at all.
pub fn run_seeds(
    records: &[CaseRecord],
    opts: &RunOptions,
    gate: &LlmGate,
    segmenter: &Segmenter,
    roles: &dyn RoleBackend,
    cancel: &AtomicBool,
) -> Result<RunSummary, RunError> {
    if opts.seeds.is_empty() {
        return Err(RunError::Invalid("at least one seed is required".into()));
    }
    if opts.seeds.iter().collect::<BTreeSet<_>>().len() != opts.seeds.len() {
        return Err(RunError::Invalid("seeds must be distinct".into()));
    }
    let ids: BTreeSet<String> = records.iter().map(|r| case_dir_name(&r.case_id)).collect();
    if ids.len() != records.len() {
        return Err(RunError::Invalid(
            "case ids must map to distinct directories".into(),
        ));
    }
    fs::create_dir_all(&opts.run_dir).map_err(io_err(&opts.run_dir))?;
    let mut seeds = Vec::new();
    for &seed in &opts.seeds {
        if cancel.load(Ordering::SeqCst) {
            break;
        }
        seeds.push(run_seed(
            records, opts, seed, gate, segmenter, roles, cancel,
        )?);
    }
    Ok(RunSummary { seeds })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::corpus::generate_synthetic_corpus;
    use crate::llmgate::{ResponseCache, ScriptedProvider};
    use crate::textprep::HeuristicBackend;

    fn opts(dir: &Path, seeds: Vec<u64>) -> RunOptions {
        RunOptions {
            run_dir: dir.to_path_buf(),
            seeds,
            settings: PipelineSettings::default(),
            workers: 3,
            dump_prompts: false,
            config_digest: "0123456789abcdef".into(),
        }
    }

    #[test]
    fn runs_and_writes_manifests() {
        let tmp = tempfile::tempdir().unwrap();
        let corpus: Vec<CaseRecord> = generate_synthetic_corpus(6, 3)
            .into_iter()
            .map(|c| c.record)
            .collect();
        let gate = LlmGate::new(Arc::new(ScriptedProvider), ResponseCache::memory());
        let cancel = AtomicBool::new(false);
        let summary = run_seeds(
            &corpus,
            &opts(tmp.path(), vec![1, 2]),
            &gate,
            &Segmenter::default(),
            &HeuristicBackend::default(),
            &cancel,
        )
        .unwrap();
        assert_eq!(summary.seeds.len(), 2);
        assert_eq!(summary.failed_cases(), 0);
        let m = RunManifest::load(&tmp.path().join("seed-2/manifest.json")).unwrap();
        assert_eq!(m.status, RunStatus::Complete);
        assert_eq!(m.cases_completed, 6);
        assert!(tmp
            .path()
            .join("seed-1")
            .join(case_dir_name("syn-0000"))
            .join("prediction.json")
            .is_file());
    }

    #[test]
    fn cancelled_before_start_skips_everything() {
        let tmp = tempfile::tempdir().unwrap();
        let corpus: Vec<CaseRecord> = generate_synthetic_corpus(4, 3)
            .into_iter()
            .map(|c| c.record)
            .collect();
        let gate = LlmGate::new(Arc::new(ScriptedProvider), ResponseCache::memory());
        let cancel = AtomicBool::new(true);
        let s = run_seed(
            &corpus,
            &opts(tmp.path(), vec![1]),
            1,
            &gate,
            &Segmenter::default(),
            &HeuristicBackend::default(),
            &cancel,
        )
        .unwrap();
        assert_eq!(s.manifest.status, RunStatus::Interrupted);
        assert_eq!(s.manifest.cases_skipped, 4);
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let gate = LlmGate::new(Arc::new(ScriptedProvider), ResponseCache::memory());
        let err = run_seeds(
            &[],
            &opts(tmp.path(), vec![1, 1]),
            &gate,
            &Segmenter::default(),
            &HeuristicBackend::default(),
            &AtomicBool::new(false),
        );
        assert!(matches!(err, Err(RunError::Invalid(_))));
    }
}
