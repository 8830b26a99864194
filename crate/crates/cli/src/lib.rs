//! The `faqir` command-line tool.
//!
//! Subcommands: `ingest`, `pairs`, `train`, `eval`, `serve`, `bench` and
//! `replay`. Every invocation writes its artifacts and a `manifest.json`
//! into a fresh run directory named `<UTC timestamp>-<config hash>`. The
//! manifest records the fully resolved config, the SHA-256 of every input
//! file and of every artifact, so `replay` can repeat the run from the
//! manifest alone.
//!
//! Exit codes: 0 success, 1 invalid flags or configuration, 2 runtime
//! failure.

pub mod app;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod resolve;
pub mod spec;

pub use app::run;
pub use error::{CliError, CliResult};
pub use manifest::{RunManifest, MANIFEST_FILE};
