use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use vichara_cli::{
    cache_clear, cache_stats, cmd_ablate, cmd_eval, cmd_run, cmd_synth, prompt_digest_lines,
    CliError, Config, EXIT_FAILURES, EXIT_OK, EXIT_USAGE,
};

#[derive(Parser)]
#[command(
    name = "vichara",
    version,
    about = "Appellate judgment prediction with structured explanations"
)]
struct Cli {
    /// Flat TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set temperature=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct RunFlags {
    #[arg(long)]
    provider: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    fixture_dir: Option<String>,
    /// Store every provider response as a fixture in this directory.
    #[arg(long)]
    record_fixtures: Option<String>,
    /// Comma-separated, e.g. `1,2,3,4,5`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    run_dir: Option<String>,
    #[arg(long)]
    cache_dir: Option<String>,
    #[arg(long)]
    role_backend: Option<String>,
    #[arg(long)]
    chunk_tokens: Option<String>,
    #[arg(long)]
    temperature: Option<String>,
    /// Write each rendered prompt beside its response.
    #[arg(long)]
    dump_prompts: bool,
}

impl RunFlags {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let pairs = [
            ("provider", &self.provider),
            ("model", &self.model),
            ("base_url", &self.base_url),
            ("fixture_dir", &self.fixture_dir),
            ("record_fixtures", &self.record_fixtures),
            ("seeds", &self.seeds),
            ("workers", &self.workers),
            ("run_dir", &self.run_dir),
            ("cache_dir", &self.cache_dir),
            ("role_backend", &self.role_backend),
            ("chunk_tokens", &self.chunk_tokens),
            ("temperature", &self.temperature),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                out.push((k.to_string(), v.clone()));
            }
        }
        if self.dump_prompts {
            out.push(("dump_prompts".into(), "true".into()));
        }
        out
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline over a corpus for every seed.
    Run {
        #[arg(long)]
        corpus: PathBuf,
        /// Disable one stage: no_rhetorical, no_context, no_decision_points, no_ruling.
        #[arg(long)]
        ablate: Option<String>,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Score a run directory against a labelled corpus.
    Eval {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
    /// Run all five ablation configurations and compare them.
    Ablate {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Inspect or empty a response cache directory.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
    /// Print the digest of every prompt template.
    Prompts,
    /// Write a synthetic corpus with known labels.
    Synth {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum CacheAction {
    Stats { dir: PathBuf },
    Clear { dir: PathBuf },
}

fn resolve(cli: &Cli, mut overrides: Vec<(String, String)>) -> Result<Config, CliError> {
    let mut set = Vec::new();
    for item in &cli.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {item:?}")))?;
        set.push((k.trim().to_string(), v.to_string()));
    }
    // Explicit flags win over --set.
    set.append(&mut overrides);
    Config::resolve(cli.config.as_deref(), std::env::vars(), &set)
}

fn cancel_flag() -> Arc<AtomicBool> {
    let flag = Arc::new(AtomicBool::new(false));
    let f = flag.clone();
    if let Err(e) = ctrlc::set_handler(move || {
        if !f.swap(true, Ordering::SeqCst) {
            eprintln!("interrupt: finishing in-flight cases, skipping the rest");
        }
    }) {
        eprintln!("warning: cannot install interrupt handler: {e}");
    }
    flag
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Run {
            corpus,
            ablate,
            flags,
        } => {
            let mut o = flags.overrides();
            if let Some(a) = ablate {
                o.push(("ablation".into(), a.clone()));
            }
            let config = resolve(cli, o)?;
            let cancel = cancel_flag();
            let summary = cmd_run(&config, corpus, &cancel)?;
            for s in &summary.seeds {
                let m = &s.manifest;
                println!(
                    "seed {}: {} completed, {} failed, {} skipped -> {}",
                    s.seed,
                    m.cases_completed,
                    m.cases_failed,
                    m.cases_skipped,
                    s.dir.display()
                );
            }
            if summary.interrupted() {
                eprintln!("run interrupted");
            }
            Ok(if summary.failed_cases() > 0 || summary.interrupted() {
                EXIT_FAILURES
            } else {
                EXIT_OK
            })
        }
        Command::Eval { run_dir, gold } => {
            let config = resolve(cli, Vec::new())?;
            let report = cmd_eval(run_dir, gold, &config)?;
            print!("{}", vichara_core::evalx::render_text(&report));
            Ok(EXIT_OK)
        }
        Command::Ablate { corpus, flags } => {
            let config = resolve(cli, flags.overrides())?;
            let cancel = cancel_flag();
            let outcome = cmd_ablate(&config, corpus, &cancel)?;
            print!("{}", outcome.table);
            Ok(if outcome.failed_cases() > 0 || outcome.runs.len() < 5 {
                EXIT_FAILURES
            } else {
                EXIT_OK
            })
        }
        Command::Cache { action } => {
            let text = match action {
                CacheAction::Stats { dir } => cache_stats(dir)?,
                CacheAction::Clear { dir } => cache_clear(dir)?,
            };
            print!("{text}");
            Ok(EXIT_OK)
        }
        Command::Prompts => {
            print!("{}", prompt_digest_lines());
            Ok(EXIT_OK)
        }
        Command::Synth { n, seed, out } => {
            let config = resolve(cli, Vec::new())?;
            cmd_synth(*n, *seed, out, &config)?;
            println!("wrote {n} cases to {}", out.display());
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                EXIT_USAGE as u8
            } else {
                EXIT_OK as u8
            });
        }
    };
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
