//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::commands::{
    launch, replay, BenchArgs, BenchConfig, Command, EvalArgs, EvalConfig, IngestArgs, IngestConfig, PairsArgs,
    PairsConfig, ServeArgs, ServeConfig, TrainArgs, TrainCmdConfig,
};
use crate::error::{CliError, CliResult};
use crate::resolve::resolve;

#[derive(Debug, Parser)]
#[command(name = "faqir", version, about = "Few-shot multi-tenant FAQ retrieval")]
pub struct Cli {
    /// Parent directory of run directories
    #[arg(long, global = true, env = "FAQIR_RUNS_DIR", default_value = "runs")]
    pub out_dir: PathBuf,
    /// TOML file with subcommand settings; flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output on stderr (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Load a corpus and report per-intent statistics
    Ingest(IngestArgs),
    /// Write all, hard-sampled or triplet training units
    Pairs(PairsArgs),
    /// Fine-tune a tenant head
    Train(TrainArgs),
    /// Score a test split with the neural, BM25 or TF-IDF ranker
    Eval(EvalArgs),
    /// Run the multi-tenant HTTP server
    Serve(ServeArgs),
    /// Closed-loop load test against a running server
    Bench(BenchArgs),
    /// Re-run a recorded invocation and compare its artifacts
    Replay(ReplayArgs),
}

#[derive(Debug, clap::Args)]
pub struct ReplayArgs {
    /// manifest.json of the run to repeat
    pub manifest: PathBuf,
}

fn go<C: Command>(file: Option<&Path>, flags: &impl serde::Serialize, out: &Path) -> CliResult<PathBuf> {
    launch(resolve::<C, _>(file, flags)?, out, None)
}

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    let file = cli.config.as_deref();
    let out = cli.out_dir.as_path();
    let manifest = match &cli.command {
        Cmd::Ingest(a) => go::<IngestConfig>(file, a, out)?,
        Cmd::Pairs(a) => go::<PairsConfig>(file, a, out)?,
        Cmd::Train(a) => go::<TrainCmdConfig>(file, a, out)?,
        Cmd::Eval(a) => go::<EvalConfig>(file, a, out)?,
        Cmd::Serve(a) => go::<ServeConfig>(file, a, out)?,
        Cmd::Bench(a) => go::<BenchConfig>(file, a, out)?,
        Cmd::Replay(a) => {
            if file.is_some() {
                return Err(CliError::validation("config: replay takes its settings from the manifest"));
            }
            let r = replay(&a.manifest, out)?;
            eprintln!("manifest: {}", r.manifest.display());
            println!("{}", serde_json::to_string(&r).expect("outcome serializes"));
            if !r.mismatched.is_empty() {
                return Err(CliError::Runtime(anyhow::anyhow!(
                    "replay differs from the original run in: {}",
                    r.mismatched.join(", ")
                )));
            }
            return Ok(());
        }
    };
    eprintln!("manifest: {}", manifest.display());
    Ok(())
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

/// Parse `args`, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
