//! Command implementations behind the `vichara` binary.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use vichara_core::corpus::{
    config_digest, generate_synthetic_corpus, ingest_jsonl, write_jsonl, CaseRecord, FieldMap,
};
use vichara_core::evalx::{
    eval_run_with, render_ablation_table, write_report, Deviation, EvalReport,
};
use vichara_core::json::write_atomic;
use vichara_core::llmgate::{
    FixtureProvider, LlmGate, MessageRole, Provider, ProviderId, RecordingProvider, RemoteProvider,
    ResponseCache, RetryPolicy, ScriptedProvider,
};
use vichara_core::pipeline::{Ablation, ChunkOptions, Configuration, PipelineSettings};
use vichara_core::prompts::all_digests;
use vichara_core::runner::{run_seeds, RunOptions, RunSummary};
use vichara_core::textprep::{BackendConfig, RoleBackend, Segmenter};

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURES: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Prefix for environment overrides, e.g. `VICHARA_MODEL`.
pub const ENV_PREFIX: &str = "VICHARA_";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration; nothing has been run.
    Usage(String),
    Runtime(anyhow::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_FAILURES,
        }
    }
}

fn usage(m: impl Into<String>) -> CliError {
    CliError::Usage(m.into())
}

/// Every run-time knob. Empty strings mean "not set".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// scripted, fixture or remote.
    pub provider: String,
    pub model: String,
    /// OpenAI-compatible endpoint base, for the remote provider.
    pub base_url: String,
    /// user or system.
    pub message_role: String,
    pub fixture_dir: String,
    /// Record every provider response here as a fixture.
    pub record_fixtures: String,
    pub temperature: f64,
    pub max_output: u32,
    pub retries: u32,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    /// heuristic, file or remote.
    pub role_backend: String,
    pub role_rules: String,
    pub role_labels: String,
    pub role_url: String,
    /// Extra abbreviation list for the sentence splitter.
    pub abbreviations: String,
    pub chunk_tokens: usize,
    pub seeds: Vec<u64>,
    /// full or one of the four ablation names.
    pub ablation: String,
    pub workers: usize,
    pub run_dir: String,
    /// Persistent response cache; empty keeps it in memory.
    pub cache_dir: String,
    pub dump_prompts: bool,
    /// sample (n - 1) or population (n).
    pub std_deviation: String,
    pub id_field: String,
    pub text_field: String,
    pub label_field: String,
    pub explanation_field: String,
}

impl Default for Config {
    fn default() -> Self {
        let fields = FieldMap::default();
        Self {
            provider: "scripted".into(),
            model: "scripted".into(),
            base_url: String::new(),
            message_role: "user".into(),
            fixture_dir: String::new(),
            record_fixtures: String::new(),
            temperature: 0.0,
            max_output: 2048,
            retries: 3,
            timeout_secs: 120,
            max_in_flight: 4,
            role_backend: "heuristic".into(),
            role_rules: String::new(),
            role_labels: String::new(),
            role_url: String::new(),
            abbreviations: String::new(),
            chunk_tokens: 1000,
            seeds: vec![1, 2, 3, 4, 5],
            ablation: "full".into(),
            workers: 4,
            run_dir: "runs/latest".into(),
            cache_dir: String::new(),
            dump_prompts: false,
            std_deviation: "sample".into(),
            id_field: fields.id,
            text_field: fields.text,
            label_field: fields.label,
            explanation_field: fields.explanation,
        }
    }
}

fn default_table() -> toml::Table {
    toml::Table::try_from(Config::default()).expect("default config serializes")
}

/// Parse a string from the environment or the command line into the TOML
/// type the key has in the default configuration.
fn coerce(key: &str, raw: &str) -> Result<toml::Value, CliError> {
    let defaults = default_table();
    let template = defaults
        .get(key)
        .ok_or_else(|| usage(format!("unknown configuration key `{key}`")))?;
    let bad = |what: &str| usage(format!("`{key}` expects {what}, got {raw:?}"));
    Ok(match template {
        toml::Value::String(_) => toml::Value::String(raw.to_string()),
        toml::Value::Integer(_) => {
            toml::Value::Integer(raw.trim().parse().map_err(|_| bad("an integer"))?)
        }
        toml::Value::Float(_) => {
            toml::Value::Float(raw.trim().parse().map_err(|_| bad("a number"))?)
        }
        toml::Value::Boolean(_) => toml::Value::Boolean(match raw.trim() {
            "1" | "true" | "yes" => true,
            "0" | "false" | "no" => false,
            _ => return Err(bad("a boolean")),
        }),
        toml::Value::Array(_) => {
            let mut items = Vec::new();
            for part in raw.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                items.push(toml::Value::Integer(
                    part.parse()
                        .map_err(|_| bad("a comma-separated list of integers"))?,
                ));
            }
            toml::Value::Array(items)
        }
        _ => return Err(bad("a scalar")),
    })
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| usage(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn render(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Layer, lowest first: defaults, config file, `VICHARA_<KEY>`
    /// environment variables, command-line `key=value` overrides.
    pub fn resolve<I>(
        file: Option<&Path>,
        env: I,
        overrides: &[(String, String)],
    ) -> Result<Self, CliError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table = default_table();
        if let Some(path) = file {
            let text =
                fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            let file_table: toml::Table =
                toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            for (k, v) in file_table {
                if !table.contains_key(&k) {
                    return Err(usage(format!(
                        "{}: unknown configuration key `{k}`",
                        path.display()
                    )));
                }
                table.insert(k, v);
            }
        }
        let known: BTreeSet<String> = table.keys().cloned().collect();
        for (name, value) in env {
            let Some(key) = name.strip_prefix(ENV_PREFIX).map(str::to_lowercase) else {
                continue;
            };
            if known.contains(&key) {
                table.insert(key.clone(), coerce(&key, &value)?);
            }
        }
        for (k, v) in overrides {
            table.insert(k.clone(), coerce(k, v)?);
        }
        let cfg: Config = table
            .try_into()
            .map_err(|e| usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(usage("seeds must not be empty"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(usage(format!(
                "seeds must be distinct, got {:?}",
                self.seeds
            )));
        }
        if self.chunk_tokens < 1 {
            return Err(usage("chunk_tokens must be at least 1"));
        }
        if self.workers < 1 || self.max_in_flight < 1 {
            return Err(usage("workers and max_in_flight must be at least 1"));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(usage("temperature must lie in [0, 2]"));
        }
        self.configuration()?;
        self.provider_id()?;
        self.message_role()?;
        match self.provider_id()? {
            ProviderId::Fixture if self.fixture_dir.is_empty() => {
                return Err(usage("the fixture provider needs fixture_dir"));
            }
            ProviderId::RemoteOpenAiCompatible if self.base_url.is_empty() => {
                return Err(usage("the remote provider needs base_url"));
            }
            _ => {}
        }
        self.role_backend_config()?;
        self.deviation()?;
        if self.run_dir.is_empty() {
            return Err(usage("run_dir must not be empty"));
        }
        Ok(())
    }

    pub fn configuration(&self) -> Result<Configuration, CliError> {
        if self.ablation == "full" {
            return Ok(Configuration::Full);
        }
        let a: Ablation = self.ablation.parse().map_err(usage)?;
        Ok(Configuration::ALL
            .into_iter()
            .find(|c| c.ablation() == Some(a))
            .expect("every ablation has a configuration"))
    }

    pub fn deviation(&self) -> Result<Deviation, CliError> {
        match self.std_deviation.as_str() {
            "sample" => Ok(Deviation::Sample),
            "population" => Ok(Deviation::Population),
            other => Err(usage(format!(
                "std_deviation must be sample or population, got {other:?}"
            ))),
        }
    }

    pub fn provider_id(&self) -> Result<ProviderId, CliError> {
        self.provider.parse().map_err(|e| usage(format!("{e}")))
    }

    fn message_role(&self) -> Result<MessageRole, CliError> {
        serde_json::from_value(serde_json::Value::String(self.message_role.clone())).map_err(|_| {
            usage(format!(
                "message_role must be user or system, got {:?}",
                self.message_role
            ))
        })
    }

    pub fn role_backend_config(&self) -> Result<BackendConfig, CliError> {
        let opt = |s: &str| (!s.is_empty()).then(|| PathBuf::from(s));
        match self.role_backend.as_str() {
            "heuristic" => Ok(BackendConfig::Heuristic {
                rules: opt(&self.role_rules),
            }),
            "file" => Ok(BackendConfig::File {
                path: opt(&self.role_labels)
                    .ok_or_else(|| usage("the file role backend needs role_labels"))?,
            }),
            "remote" => {
                if self.role_url.is_empty() {
                    return Err(usage("the remote role backend needs role_url"));
                }
                Ok(BackendConfig::Remote {
                    url: self.role_url.clone(),
                    max_in_flight: self.max_in_flight,
                    timeout_secs: self.timeout_secs,
                })
            }
            other => Err(usage(format!(
                "unknown role backend `{other}` (heuristic, file, remote)"
            ))),
        }
    }

    pub fn field_map(&self) -> FieldMap {
        FieldMap {
            id: self.id_field.clone(),
            text: self.text_field.clone(),
            label: self.label_field.clone(),
            explanation: self.explanation_field.clone(),
            ..FieldMap::default()
        }
    }

    pub fn settings(&self) -> Result<PipelineSettings, CliError> {
        Ok(PipelineSettings {
            model_id: self.model.clone(),
            temperature: self.temperature,
            max_output: self.max_output,
            seed: self.seeds[0],
            ablation: self.configuration()?.ablation(),
            chunk: ChunkOptions {
                max_tokens: self.chunk_tokens,
                ..ChunkOptions::default()
            },
        })
    }

    pub fn build_gate(&self) -> Result<LlmGate, CliError> {
        let mut provider: Arc<dyn Provider> = match self.provider_id()? {
            ProviderId::Scripted => Arc::new(ScriptedProvider),
            ProviderId::Fixture => Arc::new(
                FixtureProvider::open(&self.fixture_dir)
                    .map_err(|e| CliError::Runtime(e.into()))?,
            ),
            ProviderId::RemoteOpenAiCompatible => Arc::new(
                RemoteProvider::from_env(
                    self.base_url.clone(),
                    self.message_role()?,
                    Duration::from_secs(self.timeout_secs),
                )
                .map_err(|e| usage(e.to_string()))?,
            ),
        };
        if !self.record_fixtures.is_empty() {
            provider = Arc::new(
                RecordingProvider::new(provider, Path::new(&self.record_fixtures))
                    .map_err(|e| CliError::Runtime(e.into()))?,
            );
        }
        let cache = if self.cache_dir.is_empty() {
            ResponseCache::memory()
        } else {
            ResponseCache::directory(&self.cache_dir).map_err(|e| CliError::Runtime(e.into()))?
        };
        Ok(LlmGate::new(provider, cache)
            .with_retry(RetryPolicy {
                max_retries: self.retries,
                ..RetryPolicy::default()
            })
            .with_max_in_flight(self.max_in_flight))
    }

    pub fn build_roles(&self) -> Result<Arc<dyn RoleBackend>, CliError> {
        self.role_backend_config()?
            .build()
            .map_err(|e| CliError::Runtime(anyhow::anyhow!("role backend: {e}")))
    }

    pub fn build_segmenter(&self) -> Result<Segmenter, CliError> {
        if self.abbreviations.is_empty() {
            return Ok(Segmenter::default());
        }
        Segmenter::with_extra_file(Path::new(&self.abbreviations))
            .map_err(|e| CliError::Runtime(anyhow::anyhow!("{}: {e}", self.abbreviations)))
    }
}

pub fn load_corpus(path: &Path, config: &Config) -> Result<Vec<CaseRecord>, CliError> {
    ingest_jsonl(path, &config.field_map())
        .map_err(|e| usage(format!("corpus {}: {e}", path.display())))
}

/// Run the corpus for every configured seed under `config.run_dir`.
pub fn cmd_run(
    config: &Config,
    corpus_path: &Path,
    cancel: &AtomicBool,
) -> Result<RunSummary, CliError> {
    config.validate()?;
    let records = load_corpus(corpus_path, config)?;
    let gate = config.build_gate()?;
    let roles = config.build_roles()?;
    let segmenter = config.build_segmenter()?;
    let run_dir = PathBuf::from(&config.run_dir);
    fs::create_dir_all(&run_dir)
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("{}: {e}", run_dir.display())))?;
    let config_path = run_dir.join("config.toml");
    write_atomic(&config_path, config.render().as_bytes())
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("{}: {e}", config_path.display())))?;
    let opts = RunOptions {
        run_dir,
        seeds: config.seeds.clone(),
        settings: config.settings()?,
        workers: config.workers,
        dump_prompts: config.dump_prompts,
        config_digest: config_digest(config),
    };
    run_seeds(&records, &opts, &gate, &segmenter, roles.as_ref(), cancel)
        .map_err(|e| CliError::Runtime(e.into()))
}

/// Score a run directory; writes `report.json` and `report.txt` into it.
pub fn cmd_eval(run_dir: &Path, gold_path: &Path, config: &Config) -> Result<EvalReport, CliError> {
    if !run_dir.is_dir() {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "run directory {} does not exist",
            run_dir.display()
        )));
    }
    let gold = load_corpus(gold_path, config)?;
    let report = eval_run_with(run_dir, &gold, config.deviation()?)
        .map_err(|e| CliError::Runtime(e.into()))?;
    write_report(run_dir, &report).map_err(|e| CliError::Runtime(e.into()))?;
    Ok(report)
}

#[derive(Debug)]
pub struct AblationOutcome {
    pub runs: Vec<(Configuration, PathBuf, RunSummary, EvalReport)>,
    pub table: String,
}

impl AblationOutcome {
    pub fn failed_cases(&self) -> usize {
        self.runs.iter().map(|r| r.2.failed_cases()).sum()
    }
}

/// Run all five configurations, each in `<run_dir>/<configuration>`, and
/// write the comparison table to `<run_dir>/ablation.txt`.
pub fn cmd_ablate(
    config: &Config,
    corpus_path: &Path,
    cancel: &AtomicBool,
) -> Result<AblationOutcome, CliError> {
    config.validate()?;
    let gold = load_corpus(corpus_path, config)?;
    let root = PathBuf::from(&config.run_dir);
    let mut runs = Vec::new();
    for c in Configuration::ALL {
        if cancel.load(std::sync::atomic::Ordering::SeqCst) {
            break;
        }
        let dir = root.join(c.name());
        let sub = Config {
            ablation: c.name().to_string(),
            run_dir: dir.display().to_string(),
            ..config.clone()
        };
        let summary = cmd_run(&sub, corpus_path, cancel)?;
        if summary.seeds.is_empty() {
            break;
        }
        let report = eval_run_with(&dir, &gold, config.deviation()?)
            .map_err(|e| CliError::Runtime(e.into()))?;
        write_report(&dir, &report).map_err(|e| CliError::Runtime(e.into()))?;
        runs.push((c, dir, summary, report));
    }
    let rows: Vec<(Configuration, EvalReport)> = runs.iter().map(|r| (r.0, r.3.clone())).collect();
    let table = render_ablation_table(&rows);
    let path = root.join("ablation.txt");
    fs::create_dir_all(&root)
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("{}: {e}", root.display())))?;
    write_atomic(&path, table.as_bytes())
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("{}: {e}", path.display())))?;
    Ok(AblationOutcome { runs, table })
}

/// Write a synthetic corpus as JSONL.
pub fn cmd_synth(n: usize, seed: u64, out: &Path, config: &Config) -> Result<(), CliError> {
    if n == 0 {
        return Err(usage("case count must be at least 1"));
    }
    let records: Vec<CaseRecord> = generate_synthetic_corpus(n, seed)
        .into_iter()
        .map(|c| c.record)
        .collect();
    write_jsonl(out, &records, &config.field_map()).map_err(|e| CliError::Runtime(e.into()))
}

/// `stage  digest` lines, one per prompt template.
pub fn prompt_digest_lines() -> String {
    all_digests()
        .iter()
        .map(|(stage, d)| format!("{stage:<16} {d}\n"))
        .collect()
}

pub fn cache_stats(dir: &Path) -> Result<String, CliError> {
    let s = ResponseCache::stats(dir)
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("{}: {e}", dir.display())))?;
    Ok(format!(
        "{}: {} entries, {} bytes\n",
        dir.display(),
        s.entries,
        s.bytes
    ))
}

pub fn cache_clear(dir: &Path) -> Result<String, CliError> {
    let n = ResponseCache::clear(dir)
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("{}: {e}", dir.display())))?;
    Ok(format!("{}: removed {n} entries\n", dir.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn render_parse_round_trip() {
        let c = Config {
            temperature: 0.7,
            seeds: vec![3, 9],
            ablation: "no_ruling".into(),
            ..Config::default()
        };
        assert_eq!(Config::parse(&c.render()).unwrap(), c);
    }

    #[test]
    fn precedence_cli_over_env_over_file() {
        let tmp = tempfile::tempdir().unwrap();
        let file = tmp.path().join("c.toml");
        fs::write(&file, "model = \"from-file\"\nworkers = 2\nseeds = [7]\n").unwrap();
        let c = Config::resolve(
            Some(&file),
            env(&[
                ("VICHARA_MODEL", "from-env"),
                ("VICHARA_WORKERS", "3"),
                ("VICHARA_API_KEY", "secret"),
            ]),
            &[("model".into(), "from-cli".into())],
        )
        .unwrap();
        assert_eq!(c.model, "from-cli");
        assert_eq!(c.workers, 3);
        assert_eq!(c.seeds, [7]);
        assert_eq!(c.provider, "scripted");
    }

    #[test]
    fn invalid_configs_are_usage_errors() {
        let bad = |overrides: &[(&str, &str)]| {
            let o: Vec<(String, String)> = overrides
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect();
            Config::resolve(None, Vec::new(), &o)
                .unwrap_err()
                .exit_code()
        };
        assert_eq!(bad(&[("seeds", "1,1")]), EXIT_USAGE);
        assert_eq!(bad(&[("seeds", "")]), EXIT_USAGE);
        assert_eq!(bad(&[("chunk_tokens", "0")]), EXIT_USAGE);
        assert_eq!(bad(&[("ablation", "no_everything")]), EXIT_USAGE);
        assert_eq!(bad(&[("provider", "fixture")]), EXIT_USAGE);
        assert_eq!(bad(&[("nonsense", "1")]), EXIT_USAGE);
        assert_eq!(bad(&[("workers", "many")]), EXIT_USAGE);
    }

    #[test]
    fn unknown_file_key_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let file = tmp.path().join("c.toml");
        fs::write(&file, "modle = \"x\"\n").unwrap();
        assert!(matches!(
            Config::resolve(Some(&file), Vec::new(), &[]),
            Err(CliError::Usage(_))
        ));
    }
}
